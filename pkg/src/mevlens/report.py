"""Finding records, native valuation, expected profit and builder/searcher collusion."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

from mevlens.chain import NATIVE_TOKEN, WETH_ADDRESS
from mevlens.errors import NoRoute
from mevlens.flowgraph import DEFAULT_LIMITS, RouteLimits, TokenFlowGraph, best_conversion
from mevlens.profitability import ProfitVerdict
from mevlens.registry import Swap

WRAPPED_NATIVE = frozenset({WETH_ADDRESS})


@dataclass
class NativeValue:
    native: int
    unpriced: dict[str, int] = field(default_factory=dict)
    truncated: bool = False


def _floor(x: Fraction) -> int:
    return x.numerator // x.denominator


def with_wrap_edges(g: TokenFlowGraph, wrapped: Iterable[str] = WRAPPED_NATIVE) -> TokenFlowGraph:
    """Copy of ``g`` plus 1:1 edges between each wrapped-native token and native."""
    out = TokenFlowGraph(g.edges)
    for w in wrapped:
        out.add(Swap(w, w, 1, NATIVE_TOKEN, 1, "", -1, "implicit-wrap"))
        out.add(Swap(w, NATIVE_TOKEN, 1, w, 1, "", -1, "implicit-wrap"))
    return out


def value_in_native(verdict: ProfitVerdict, g: TokenFlowGraph, wrapped: Iterable[str] = WRAPPED_NATIVE,
                    limits: RouteLimits = DEFAULT_LIMITS) -> NativeValue:
    """Convert positive residuals to native along the best route; unroutable ones stay per token."""
    aug = with_wrap_edges(g, wrapped)
    native = Fraction(0)
    unpriced: dict[str, int] = {}
    truncated = False
    for tok in sorted(verdict.residual):
        amt = verdict.residual[tok]
        if amt == 0:
            continue
        if tok == NATIVE_TOKEN:
            native += amt
            continue
        if amt < 0:
            # only reachable for unprofitable verdicts; value the loss at the best rate too
            try:
                c = best_conversion(tok, NATIVE_TOKEN, aug, -amt, limits)
                native -= c.value
            except NoRoute:
                unpriced[tok] = -_floor(-amt)
            continue
        try:
            c = best_conversion(tok, NATIVE_TOKEN, aug, amt, limits)
        except NoRoute:
            unpriced[tok] = _floor(amt)
            continue
        native += c.value
        truncated = truncated or c.truncated
    return NativeValue(_floor(native), unpriced, truncated)


# --- expected profit --------------------------------------------------------


@dataclass(frozen=True)
class EpInputs:
    profit: int
    sr: Fraction
    gp: int
    fg: int

    def __post_init__(self):
        if not 0 <= self.sr <= 1:
            raise ValueError(f"success rate must be in [0, 1], got {self.sr}")


def expected_profit(x: EpInputs) -> Fraction:
    """profit * sr - gp * fg * (1 - sr), exact."""
    sr = Fraction(x.sr)
    return x.profit * sr - x.gp * x.fg * (1 - sr)


def parse_ep(text: str) -> tuple[Fraction, Optional[int]]:
    """``SR`` or ``SR:FG``; SR as a rational or decimal in [0, 1]."""
    sr_text, _, fg_text = text.partition(":")
    sr = Fraction(sr_text.strip())
    if not 0 <= sr <= 1:
        raise ValueError(f"success rate must be in [0, 1], got {sr_text}")
    return sr, (int(fg_text) if fg_text else None)


def parse_thresholds(text: str) -> tuple[Fraction, Fraction]:
    """``a/b`` where a and b are shares, e.g. ``0.5/0.5``."""
    parts = text.split("/")
    if len(parts) != 2:
        raise ValueError(f"thresholds must look like A/B, got {text!r}")
    a, b = (Fraction(p.strip()) for p in parts)
    for v in (a, b):
        if not 0 <= v < 1:
            raise ValueError(f"threshold must be in [0, 1), got {v}")
    return a, b


# --- collusion --------------------------------------------------------------


@dataclass(frozen=True)
class CollusionPair:
    builder: str
    searcher: str
    tx_count: int
    share_builder: Fraction
    share_searcher: Fraction


def collusion_scan(findings: Iterable, builder_threshold: Fraction = Fraction(1, 2),
                   searcher_threshold: Fraction = Fraction(1, 2)) -> list[CollusionPair]:
    """Flag pairs where each side's MEV is dominated by the other.

    ``findings`` items need ``builder`` and ``searcher`` attributes (or keys).
    Shares must strictly exceed the thresholds.
    """
    pair = Counter()
    per_builder = Counter()
    per_searcher = Counter()
    for f in findings:
        b, s = (f["builder"], f["searcher"]) if isinstance(f, dict) else (f.builder, f.searcher)
        if b is None or s is None:
            continue
        pair[b, s] += 1
        per_builder[b] += 1
        per_searcher[s] += 1
    out = []
    for (b, s), n in pair.items():
        sb = Fraction(n, per_builder[b])
        ss = Fraction(n, per_searcher[s])
        if sb > builder_threshold and ss > searcher_threshold:
            out.append(CollusionPair(b, s, n, sb, ss))
    out.sort(key=lambda c: (-c.tx_count, c.builder, c.searcher))
    return out


# --- finding records --------------------------------------------------------


@dataclass
class FindingRecord:
    id: str
    kind: str                    # arbitrage | sandwich
    tags: list[str]
    block: int
    txs: list[str]
    revenue_native: int
    fees_native: int
    victims: list[str] = field(default_factory=list)
    unpriced: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    builder: Optional[str] = None
    searcher: Optional[str] = None
    gas_used: int = 0
    gas_price: int = 0

    @property
    def profit_native(self) -> int:
        return self.revenue_native - self.fees_native

    @property
    def margin(self) -> Optional[Fraction]:
        if self.revenue_native <= 0:
            return None
        return Fraction(self.profit_native, self.revenue_native)

    def to_json(self) -> dict:
        m = self.margin
        return {
            "id": self.id, "kind": self.kind, "tags": self.tags, "block": self.block,
            "txs": self.txs, "victims": self.victims,
            "revenue_native": str(self.revenue_native), "fees_native": str(self.fees_native),
            "profit_native": str(self.profit_native),
            "margin": None if m is None else f"{m.numerator}/{m.denominator}",
            "unpriced": {k: str(v) for k, v in sorted(self.unpriced.items())},
            "warnings": self.warnings, "builder": self.builder, "searcher": self.searcher,
            "gas_used": self.gas_used, "gas_price": str(self.gas_price),
        }

    @classmethod
    def from_json(cls, d: dict) -> "FindingRecord":
        rec = cls(d["id"], d["kind"], list(d["tags"]), int(d["block"]), list(d["txs"]),
                  int(d["revenue_native"]), int(d["fees_native"]), list(d.get("victims", [])),
                  {k: int(v) for k, v in d.get("unpriced", {}).items()}, list(d.get("warnings", [])),
                  d.get("builder"), d.get("searcher"), int(d.get("gas_used", 0)),
                  int(d.get("gas_price", 0)))
        if "profit_native" in d and int(d["profit_native"]) != rec.profit_native:
            raise ValueError(f"{rec.id}: profit_native does not equal revenue minus fees")
        return rec


def format_margin(m: Optional[Fraction]) -> str:
    if m is None:
        return "n/a"
    tenths = m * 1000
    q = _floor(tenths + Fraction(1, 2))  # round half up to one decimal of a percent
    sign = "-" if q < 0 else ""
    q = abs(q)
    return f"{sign}{q // 10}.{q % 10}%"


def ep_rows(records: Iterable[FindingRecord], sr: Fraction, fg: Optional[int] = None) -> list[dict]:
    rows = []
    for r in records:
        x = EpInputs(r.profit_native, sr, r.gas_price, r.gas_used if fg is None else fg)
        ep = expected_profit(x)
        rows.append({"id": r.id, "kind": r.kind, "profit_native": str(r.profit_native),
                     "sr": f"{sr.numerator}/{sr.denominator}", "gp": str(x.gp), "fg": x.fg,
                     "ep": f"{ep.numerator}/{ep.denominator}"})
    return rows


def summarize(records: list[FindingRecord], failed_frontruns: int = 0) -> dict:
    """Counts by category and totals; toxic overlaps are counted once in the totals."""
    counts = Counter()
    arb_tx_in_toxic = set()
    for r in records:
        counts[r.kind] += 1
        for t in r.tags:
            counts[f"{r.kind}:{t}"] += 1
        if r.kind == "sandwich" and "toxic" in r.tags:
            arb_tx_in_toxic.update(r.txs)
    revenue = profit = fees = 0
    overlap = 0
    for r in records:
        if r.kind == "arbitrage" and "toxic" in r.tags and r.txs[0] in arb_tx_in_toxic:
            overlap += 1
            continue
        revenue += r.revenue_native
        fees += r.fees_native
        profit += r.profit_native
    margin = Fraction(profit, revenue) if revenue > 0 else None
    return {
        "arbitrages": counts["arbitrage"],
        "arbitrage_front": counts["arbitrage:front"],
        "arbitrage_back": counts["arbitrage:back"],
        "arbitrage_unknown": counts["arbitrage:unknown"],
        "sandwiches": counts["sandwich"],
        "sandwich_normal": counts["sandwich:normal"],
        "sandwich_multi_layered_burger": counts["sandwich:multi_layered_burger"],
        "sandwich_conjoined": counts["sandwich:conjoined"],
        "toxic_overlap": overlap,
        "mev_activities": counts["arbitrage"] + counts["sandwich"] - overlap,
        "failed_frontruns": failed_frontruns,
        "revenue_native": str(revenue),
        "fees_native": str(fees),
        "profit_native": str(profit),
        "margin": None if margin is None else f"{margin.numerator}/{margin.denominator}",
    }


def summary_text(s: dict) -> str:
    m = None if s["margin"] is None else Fraction(s["margin"])
    lines = [
        f"arbitrages                 {s['arbitrages']}",
        f"  front-running            {s['arbitrage_front']}",
        f"  back-running             {s['arbitrage_back']}",
        f"  unclassified             {s['arbitrage_unknown']}",
        f"sandwich attacks           {s['sandwiches']}",
        f"  normal                   {s['sandwich_normal']}",
        f"  multi-layered burger     {s['sandwich_multi_layered_burger']}",
        f"  conjoined                {s['sandwich_conjoined']}",
        f"toxic overlaps             {s['toxic_overlap']}",
        f"MEV activities (deduped)   {s['mev_activities']}",
        f"failed front-runs          {s['failed_frontruns']}",
        f"revenue (native units)     {s['revenue_native']}",
        f"fees (native units)        {s['fees_native']}",
        f"profit (native units)      {s['profit_native']}",
        f"margin                     {format_margin(m)}",
    ]
    return "\n".join(lines) + "\n"


def group_by(records: Iterable[FindingRecord], key) -> dict:
    out = defaultdict(list)
    for r in records:
        out[key(r)].append(r)
    return dict(out)
