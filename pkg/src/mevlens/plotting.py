"""Report figures rendered to PNG files with the non-interactive backend."""

from __future__ import annotations

from collections import Counter, defaultdict
from fractions import Fraction
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

ETHER = 10**18


def _category(rec) -> str:
    if rec.kind == "arbitrage":
        return f"arbitrage/{rec.tags[0]}"
    return f"sandwich/{rec.tags[0]}"


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def counts_by_kind(records, path) -> Path:
    c = Counter(_category(r) for r in records)
    labels = sorted(c)
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.bar(range(len(labels)), [c[k] for k in labels], color="#4c72b0")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("findings")
    ax.set_title("Findings by category")
    return _save(fig, Path(path))


def profit_by_kind(records, path) -> Path:
    groups = defaultdict(list)
    for r in records:
        groups[_category(r)].append(r.profit_native / ETHER)
    labels = sorted(groups)
    fig, ax = plt.subplots(figsize=(7, 3.6))
    if labels:
        ax.boxplot([groups[k] for k in labels], showfliers=False)
        ax.set_xticks(range(1, len(labels) + 1))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("profit after fees (native, 1e18 units)")
    ax.set_title("Profit by category")
    return _save(fig, Path(path))


def ep_histogram(ep_values, path, sr: Fraction) -> Path:
    vals = [float(v) / ETHER for v in ep_values]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.hist(vals, bins=min(40, max(5, len(vals) // 5)) if vals else 5, color="#55a868")
    ax.axvline(0, color="k", lw=0.8)
    ax.set_xlabel("expected profit (native, 1e18 units)")
    ax.set_ylabel("findings")
    ax.set_title(f"Expected profit at success rate {float(sr):.2f}")
    return _save(fig, Path(path))


def builder_shares(records, path, top: int = 10) -> Path:
    """Stacked bars of each builder's findings split by searcher."""
    per = defaultdict(Counter)
    for r in records:
        per[r.builder][r.searcher] += 1
    builders = sorted(per, key=lambda b: -sum(per[b].values()))[:top]
    fig, ax = plt.subplots(figsize=(7, 3.6))
    for i, b in enumerate(builders):
        bottom = 0
        total = sum(per[b].values())
        for s, n in per[b].most_common():
            ax.bar(i, n / total, bottom=bottom, color="#c44e52" if n / total > 0.5 else "#8c8c8c",
                   edgecolor="white", linewidth=0.5)
            bottom += n / total
    ax.set_xticks(range(len(builders)))
    ax.set_xticklabels([b[:8] for b in builders], rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("share of builder's findings")
    ax.set_title("Searcher shares per builder (red: majority searcher)")
    return _save(fig, Path(path))
