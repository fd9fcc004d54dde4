"""Constant-product chain simulator, replay oracle and labelled corpus generator."""
