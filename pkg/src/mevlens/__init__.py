"""Profit-aware detection of arbitrage and sandwich MEV in block traces."""

__version__ = "0.1.0"
