"""Arbitrage and sandwich identification on decoded blocks."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Protocol, Sequence

from mevlens.chain import Block, TransactionRecord
from mevlens.errors import EmptyTraderSet, ReplayUnavailable
from mevlens.flowgraph import DEFAULT_LIMITS, RouteLimits, exists_cycle, init_graph
from mevlens.ledger import resolve_context
from mevlens.profitability import DEFAULT_EPSILON, ProfitVerdict, check_profitable
from mevlens.registry import Swap, SwapRegistry, decode_swaps

log = logging.getLogger(__name__)

FRONT, BACK, UNKNOWN = "front", "back", "unknown"
NORMAL, BURGER, CONJOINED = "normal", "multi_layered_burger", "conjoined"


class ReplayOracle(Protocol):
    def replay_at_top(self, block: Block, tx: TransactionRecord) -> TransactionRecord: ...


@dataclass
class ArbitrageFinding:
    tx: str
    block: int
    tx_index: int
    swaps: list[Swap]
    verdict: ProfitVerdict
    running_kind: str = UNKNOWN
    revenue: dict[str, int] = field(default_factory=dict)
    profit_native: Optional[int] = None
    warnings: list[str] = field(default_factory=list)
    toxic: bool = False


@dataclass(frozen=True)
class AttackPair:
    front: str
    back: str
    victims: tuple[str, ...]
    pool_evidence: frozenset[tuple[str, tuple[str, str]]]


@dataclass
class AttackGroup:
    attack_txs: list[str]
    victim_txs: list[str]
    conjoined: bool
    pairs: list[AttackPair]


@dataclass
class SandwichFinding:
    block: int
    attack_txs: list[str]
    victim_txs: list[str]
    kind: str
    verdict: ProfitVerdict
    pools: frozenset[str]
    toxic: bool = False
    toxic_txs: list[str] = field(default_factory=list)
    revenue: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


# --- arbitrage --------------------------------------------------------------


def identify_arbitrage(tx: TransactionRecord, registry: SwapRegistry, eps: Fraction = DEFAULT_EPSILON,
                       producer: Optional[str] = None, limits: RouteLimits = DEFAULT_LIMITS,
                       swaps: Optional[list[Swap]] = None, require_profit: bool = True
                       ) -> Optional[ArbitrageFinding]:
    """Cycle gate, then profitability gate. ``running_kind`` stays unknown until classified."""
    if not tx.succeeded:
        return None
    errors: list = []
    if swaps is None:
        swaps = decode_swaps(tx, registry, errors)
    if not swaps:
        return None
    g = init_graph(swaps)
    if not exists_cycle(g):
        return None
    try:
        verdict = check_profitable(tx, g, eps, producer=producer, limits=limits)
    except EmptyTraderSet:
        if require_profit:
            return None
        verdict = ProfitVerdict(False, {})
    if require_profit and not verdict.profitable:
        return None
    warnings = [f"decode: log {e.log_index}: {e}" for e in errors]
    if verdict.lower_bound:
        warnings.append("lower-bound: route enumeration truncated")
    revenue = dict(verdict.token_change.net) if verdict.token_change else {}
    return ArbitrageFinding(tx.hash, tx.block_number, tx.tx_index, list(swaps), verdict,
                            revenue=revenue, warnings=warnings)


def classify_running(finding: ArbitrageFinding, block: Block, oracle: Optional[ReplayOracle],
                     registry: SwapRegistry, eps: Fraction = DEFAULT_EPSILON,
                     limits: RouteLimits = DEFAULT_LIMITS) -> str:
    """front if the transaction is still an arbitrage when replayed first in its block."""
    if oracle is None:
        return UNKNOWN
    try:
        replayed = oracle.replay_at_top(block, block.tx(finding.tx))
    except (ReplayUnavailable, KeyError):
        return UNKNOWN
    again = identify_arbitrage(replayed, registry, eps, block.producer, limits)
    return FRONT if again is not None else BACK


def detect_failed_frontrun(tx: TransactionRecord, block: Block, oracle: ReplayOracle,
                           registry: SwapRegistry, eps: Fraction = DEFAULT_EPSILON,
                           limits: RouteLimits = DEFAULT_LIMITS) -> bool:
    """True when a non-arbitrage transaction becomes one if replayed at the top of its block.

    Raises ReplayUnavailable; raises ValueError if ``tx`` already is an arbitrage.
    """
    if identify_arbitrage(tx, registry, eps, block.producer, limits) is not None:
        raise ValueError(f"{tx.hash} is already an arbitrage")
    if oracle is None:
        raise ReplayUnavailable("no replay oracle configured")
    replayed = oracle.replay_at_top(block, tx)
    return identify_arbitrage(replayed, registry, eps, block.producer, limits) is not None


# --- sandwiches -------------------------------------------------------------


def _directions(swaps: Iterable[Swap]) -> set[tuple[str, tuple[str, str]]]:
    return {(s.pool, (s.token_in, s.token_out)) for s in swaps}


def find_attack_pairs(block: Block, swaps_by_tx: dict[str, list[Swap]]) -> list[AttackPair]:
    """Candidate (front, back) pairs with at least one victim between them.

    Front and back share a sender or a call target, run opposite directions on a
    shared pool, and a victim between them trades that pool in the front's direction.
    """
    txs = [t for t in block.transactions if swaps_by_tx.get(t.hash)]
    if len(txs) < 3:
        return []
    pos = {t.hash: i for i, t in enumerate(txs)}
    dirs = {t.hash: _directions(swaps_by_tx[t.hash]) for t in txs}
    by_dir: dict[tuple, list[int]] = defaultdict(list)
    for i, t in enumerate(txs):
        for d in dirs[t.hash]:
            by_dir[d].append(i)
    groups: dict[tuple[str, str], list[int]] = defaultdict(list)
    for i, t in enumerate(txs):
        groups[("from", t.sender)].append(i)
        if t.to:
            groups[("to", t.to)].append(i)

    seen: set[tuple[int, int]] = set()
    out: list[AttackPair] = []
    for members in groups.values():
        if len(members) < 2:
            continue
        for a_pos, i in enumerate(members):
            for k in members[a_pos + 1:]:
                if (i, k) in seen or k - i < 2:
                    continue
                seen.add((i, k))
                front, back = txs[i], txs[k]
                common = [(p, d) for (p, d) in dirs[front.hash] if (p, (d[1], d[0])) in dirs[back.hash]]
                if not common:
                    continue
                attacker = {front.sender, back.sender} | {a for a in (front.to, back.to) if a}
                victims: set[int] = set()
                evidence = set()
                for pd in common:
                    hit = False
                    for v in by_dir[pd]:
                        if i < v < k:
                            vt = txs[v]
                            if vt.sender in attacker or (vt.to and vt.to in attacker):
                                continue
                            victims.add(v)
                            hit = True
                    if hit:
                        evidence.add(pd)
                if victims:
                    out.append(AttackPair(front.hash, back.hash,
                                          tuple(txs[v].hash for v in sorted(victims)),
                                          frozenset(evidence)))
    out.sort(key=lambda p: (pos[p.front], pos[p.back]))
    return out


def combine_attacks(pairs: Sequence[AttackPair], position: Optional[dict[str, int]] = None
                    ) -> list[AttackGroup]:
    """Connected components over pairs that share a transaction."""
    if not pairs:
        return []
    if position is None:
        position = {}
        for p in pairs:
            for h in (p.front, *p.victims, p.back):
                position.setdefault(h, len(position))
    parent: dict[str, str] = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p in pairs:
        ra, rb = find(p.front), find(p.back)
        if ra != rb:
            parent[rb] = ra
    comps: dict[str, list[AttackPair]] = defaultdict(list)
    for p in pairs:
        comps[find(p.front)].append(p)
    groups = []
    for members in comps.values():
        attack = sorted({h for p in members for h in (p.front, p.back)}, key=position.__getitem__)
        attack_set = set(attack)
        victims = sorted({v for p in members for v in p.victims if v not in attack_set},
                         key=position.__getitem__)
        conjoined = len(attack) > 2 or len(members) > 1
        groups.append(AttackGroup(attack, victims, conjoined, members))
    groups.sort(key=lambda g: position[g.attack_txs[0]])
    return groups


def identify_sandwiches(block: Block, registry: SwapRegistry, eps: Fraction = DEFAULT_EPSILON,
                        limits: RouteLimits = DEFAULT_LIMITS,
                        swaps_by_tx: Optional[dict[str, list[Swap]]] = None,
                        require_profit: bool = True) -> list[SandwichFinding]:
    if swaps_by_tx is None:
        swaps_by_tx = {t.hash: decode_swaps(t, registry) for t in block.transactions}
    pairs = find_attack_pairs(block, swaps_by_tx)
    if not pairs:
        return []
    position = {t.hash: t.tx_index for t in block.transactions}
    by_hash = {t.hash: t for t in block.transactions}
    findings = []
    for grp in combine_attacks(pairs, position):
        txs = [by_hash[h] for h in grp.attack_txs]
        swaps = [s for h in grp.attack_txs for s in swaps_by_tx[h]]
        g = init_graph(swaps)
        ctx = resolve_context(txs, swaps, block.producer)
        try:
            verdict = check_profitable(txs, g, eps, ctx, block.producer, limits)
        except EmptyTraderSet:
            if require_profit:
                continue
            verdict = ProfitVerdict(False, {})
        if require_profit and not verdict.profitable:
            continue
        if grp.conjoined:
            kind = CONJOINED
        elif len(grp.victim_txs) >= 2:
            kind = BURGER
        else:
            kind = NORMAL
        pools = frozenset(p for pair in grp.pairs for p, _ in pair.pool_evidence)
        warnings = ["lower-bound: route enumeration truncated"] if verdict.lower_bound else []
        revenue = dict(verdict.token_change.net) if verdict.token_change else {}
        findings.append(SandwichFinding(block.number, grp.attack_txs, grp.victim_txs, kind,
                                        verdict, pools, revenue=revenue, warnings=warnings))
    return findings


def mark_toxic(arbs: list[ArbitrageFinding], sands: list[SandwichFinding]
               ) -> tuple[list[ArbitrageFinding], list[SandwichFinding]]:
    """Flag sandwiches with an attack leg that is itself a profitable arbitrage."""
    arb_by_tx = {a.tx: a for a in arbs if a.verdict.profitable}
    for s in sands:
        shared = [h for h in s.attack_txs if h in arb_by_tx]
        if shared:
            s.toxic = True
            s.toxic_txs = shared
            for h in shared:
                arb_by_tx[h].toxic = True
    return arbs, sands
