"""Per-address balance changes and their reduction to trader-level token deltas."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from mevlens.chain import DEAD_ADDRESS, ZERO_ADDRESS, TransactionRecord
from mevlens.errors import EmptyTraderSet
from mevlens.registry import TRANSFER_TOPIC, Swap, TransferRecord, decode_transfers

BLACK_HOLES = frozenset({ZERO_ADDRESS, DEAD_ADDRESS})


@dataclass
class BalanceLedger:
    """address -> token -> signed raw-unit delta."""

    deltas: dict[str, dict[str, int]] = field(default_factory=dict)

    def add(self, address: str, token: str, amount: int) -> None:
        per = self.deltas.get(address)
        if per is None:
            per = self.deltas[address] = {}
        per[token] = per.get(token, 0) + amount

    def addresses(self) -> set[str]:
        return set(self.deltas)

    def token_sum(self, token: str) -> int:
        return sum(per.get(token, 0) for per in self.deltas.values())

    def as_dict(self) -> dict[str, dict[str, int]]:
        return {a: dict(per) for a, per in self.deltas.items()}

    def __eq__(self, other) -> bool:
        if not isinstance(other, BalanceLedger):
            return NotImplemented
        return self.as_dict() == other.as_dict()


@dataclass(frozen=True)
class TraderContext:
    trader_addresses: frozenset[str]
    irrelevant_addresses: frozenset[str]


@dataclass
class TokenChange:
    net: dict[str, int]
    flow_in: dict[str, int] = field(default_factory=dict)   # received by traders from swaps
    flow_out: dict[str, int] = field(default_factory=dict)  # spent by traders on swaps


def transfers_of(txs: Iterable[TransactionRecord]) -> list[TransferRecord]:
    out = []
    for tx in txs:
        out.extend(decode_transfers(tx))
    return out


def get_bal_change(txs: Sequence[TransactionRecord] | TransactionRecord,
                   fee_recipient: Optional[str] = None,
                   transfers: Optional[list[TransferRecord]] = None) -> BalanceLedger:
    """Accumulate every transfer into an address/token ledger.

    Native payments to ``fee_recipient`` (the block producer) are skipped on both
    sides: they are fees, accounted separately from trading revenue.
    """
    if isinstance(txs, TransactionRecord):
        txs = [txs]
    if transfers is None:
        transfers = transfers_of(txs)
    ledger = BalanceLedger()
    for t in transfers:
        if fee_recipient is not None and t.to == fee_recipient and t.log_index < 0:
            continue
        ledger.add(t.sender, t.token, -t.amount)
        ledger.add(t.to, t.token, t.amount)
    return ledger


def resolve_context(txs: Sequence[TransactionRecord], swaps: Iterable[Swap],
                    producer: Optional[str] = None) -> TraderContext:
    """Traders are senders and call targets; token contracts, pools, black holes
    and the producer are irrelevant, and irrelevance wins any conflict."""
    traders = set()
    irrelevant = set(BLACK_HOLES)
    if producer:
        irrelevant.add(producer)
    for tx in txs:
        traders.add(tx.sender)
        if tx.to:
            traders.add(tx.to)
        for lg in tx.logs:
            if lg.topics and lg.topics[0] == TRANSFER_TOPIC:
                irrelevant.add(lg.emitter)
    for s in swaps:
        irrelevant.add(s.pool)
    swap_emitters = {(s.tx_hash, s.log_index) for s in swaps}
    if swap_emitters:
        for tx in txs:
            for lg in tx.logs:
                if (tx.hash, lg.log_index) in swap_emitters:
                    irrelevant.add(lg.emitter)
    return TraderContext(frozenset(traders - irrelevant), frozenset(irrelevant))


def rmv_irr_addr(ledger: BalanceLedger, ctx: TraderContext) -> BalanceLedger:
    kept = {a: dict(per) for a, per in ledger.deltas.items()
            if a in ctx.trader_addresses and a not in ctx.irrelevant_addresses}
    if not kept:
        raise EmptyTraderSet("no trader address remains after filtering")
    return BalanceLedger(kept)


def aggr_tkn_change(ledger: BalanceLedger, swaps: Iterable[Swap], ctx: TraderContext,
                    transfers: Optional[list[TransferRecord]] = None) -> TokenChange:
    """Sum trader deltas per token and collect the swap flows attributable to traders.

    A swap is attributed when a transfer shows its pool receiving the input from,
    or sending the output to, a trader address.
    """
    net: dict[str, int] = defaultdict(int)
    for addr, per in ledger.deltas.items():
        if addr not in ctx.trader_addresses:
            continue
        for tok, v in per.items():
            net[tok] += v
    flow_in: dict[str, int] = defaultdict(int)
    flow_out: dict[str, int] = defaultdict(int)
    traders = ctx.trader_addresses
    paid_in = set()
    paid_out = set()
    for t in transfers or ():
        if t.sender in traders:
            paid_in.add((t.to, t.token))
        if t.to in traders:
            paid_out.add((t.sender, t.token))
    for s in swaps:
        if (s.pool, s.token_in) in paid_in or (s.pool, s.token_out) in paid_out:
            flow_out[s.token_in] += s.amount_in
            flow_in[s.token_out] += s.amount_out
    return TokenChange(dict(net), dict(flow_in), dict(flow_out))


def dump_ledger(ledger: BalanceLedger, tag: str = "") -> list[dict]:
    """Line-delimited diagnostic rows, sorted for stable output."""
    rows = []
    for addr in sorted(ledger.deltas):
        for tok in sorted(ledger.deltas[addr]):
            rows.append({"scope": tag, "address": addr, "token": tok,
                         "delta": str(ledger.deltas[addr][tok])})
    return rows
