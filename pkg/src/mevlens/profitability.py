"""Profitability test: can every token the trader lost be paid for out of a token it gained?

Losses are valued in the gained token through the transaction's own swap rates
(best route, exact rationals). Conversion amounts are kept exact rather than
floored so verdicts do not depend on the unit scale of the amounts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Optional, Sequence

from mevlens.chain import TransactionRecord
from mevlens.errors import NoRoute
from mevlens.flowgraph import DEFAULT_LIMITS, RouteLimits, TokenFlowGraph, best_conversion
from mevlens.ledger import (
    TokenChange,
    TraderContext,
    aggr_tkn_change,
    get_bal_change,
    resolve_context,
    rmv_irr_addr,
    transfers_of,
)

DEFAULT_EPSILON = Fraction(1, 100)
EXHAUSTIVE_MAX_LOSSES = 4


def parse_epsilon(text) -> Fraction:
    """Accept ``"1/100"``, ``"0.01"`` or a number; the value must lie in [0, 1)."""
    if isinstance(text, Fraction):
        value = text
    elif isinstance(text, int):
        value = Fraction(text)
    else:
        s = str(text).strip()
        try:
            value = Fraction(s) if "/" in s else Fraction(Decimal(s))
        except (ValueError, ZeroDivisionError, InvalidOperation):
            raise ValueError(f"epsilon must be a rational like 1/100 or 0.01, got {text!r}") from None
    if not 0 <= value < 1:
        raise ValueError(f"epsilon must be in [0, 1), got {value}")
    return value


@dataclass(frozen=True)
class ConversionStep:
    token_lost: str
    token_gained: str
    amount_lost: Fraction
    amount_gained: Fraction   # deducted from the gained token


@dataclass
class ProfitVerdict:
    profitable: bool
    residual: dict[str, Fraction]
    conversions: list[ConversionStep] = field(default_factory=list)
    lower_bound: bool = False
    token_change: Optional[TokenChange] = None
    search: str = "greedy"


def loss_ratio(tc: TokenChange, token: str) -> Fraction:
    """Relative swap gain of ``token``: (received - spent) / spent, -1 without swap spend."""
    spent = tc.flow_out.get(token, 0)
    if spent == 0:
        return Fraction(-1)
    return Fraction(tc.flow_in.get(token, 0) - spent, spent)


def assess_token_change(tc: TokenChange, g: TokenFlowGraph, eps: Fraction = DEFAULT_EPSILON,
                        limits: RouteLimits = DEFAULT_LIMITS,
                        exhaustive_max_losses: int = EXHAUSTIVE_MAX_LOSSES) -> ProfitVerdict:
    net = {t: Fraction(v) for t, v in tc.net.items()}
    losses = sorted((t for t, v in net.items() if v < 0), reverse=True)
    gains = sorted((t for t, v in net.items() if v > 0), key=lambda t: (net[t], t), reverse=True)
    if not losses:
        return ProfitVerdict(True, net, token_change=tc)

    eligible = {i: loss_ratio(tc, i) < eps for i in losses}
    cache: dict[tuple[str, str], Optional[tuple[Fraction, bool]]] = {}

    def value(i, k):
        key = (i, k)
        if key not in cache:
            try:
                c = best_conversion(i, k, g, -net[i], limits)
                cache[key] = (c.value, c.truncated)
            except NoRoute:
                cache[key] = None
        return cache[key]

    # greedy pass in the documented pair order
    cur = dict(net)
    steps: list[ConversionStep] = []
    lower = False
    for i in losses:
        if not eligible[i]:
            continue
        for k in gains:
            if cur[i] >= 0:
                break
            if cur[k] <= 0:
                continue
            v = value(i, k)
            if v is None:
                continue
            amt, trunc = v
            if cur[k] - amt > 0:
                steps.append(ConversionStep(i, k, -cur[i], amt))
                cur[k] -= amt
                cur[i] = Fraction(0)
                lower = lower or trunc
    if all(x >= 0 for x in cur.values()):
        return ProfitVerdict(True, cur, steps, lower, tc)
    greedy = ProfitVerdict(False, cur, steps, lower, tc)
    if len(losses) > exhaustive_max_losses or not all(eligible.values()):
        return greedy

    # exhaustive: some assignment of each loss to one gain with strict headroom
    order = list(losses)
    remaining = {k: net[k] for k in gains}
    chosen: list[tuple[str, str]] = []

    def search(pos):
        if pos == len(order):
            return True
        i = order[pos]
        for k in gains:
            v = value(i, k)
            if v is None:
                continue
            if remaining[k] - v[0] > 0:
                remaining[k] -= v[0]
                chosen.append((i, k))
                if search(pos + 1):
                    return True
                chosen.pop()
                remaining[k] += v[0]
        return False

    if not search(0):
        return greedy
    cur = dict(net)
    steps = []
    lower = False
    for i, k in chosen:
        amt, trunc = value(i, k)
        steps.append(ConversionStep(i, k, -cur[i], amt))
        cur[k] -= amt
        cur[i] = Fraction(0)
        lower = lower or trunc
    return ProfitVerdict(True, cur, steps, lower, tc, search="exhaustive")


def check_profitable(txs: Sequence[TransactionRecord] | TransactionRecord, g: TokenFlowGraph,
                     eps: Fraction = DEFAULT_EPSILON, ctx: Optional[TraderContext] = None,
                     producer: Optional[str] = None, limits: RouteLimits = DEFAULT_LIMITS
                     ) -> ProfitVerdict:
    """Ledger -> trader filter -> token change -> loss covering. Raises EmptyTraderSet."""
    if isinstance(txs, TransactionRecord):
        txs = [txs]
    if ctx is None:
        ctx = resolve_context(txs, g.edges, producer)
    transfers = transfers_of(txs)
    ledger = get_bal_change(txs, fee_recipient=producer, transfers=transfers)
    ledger = rmv_irr_addr(ledger, ctx)
    tc = aggr_tkn_change(ledger, g.edges, ctx, transfers)
    return assess_token_change(tc, g, eps, limits)
