"""Replay oracle backed by the simulator, plus the sim-state sidecar file.

The sidecar holds everything needed to re-execute a corpus transaction: pool
metadata once, then per block the reserves at block start and the program of
every transaction in the block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Optional

from mevlens.chain import Block, TransactionRecord, WETH_ADDRESS
from mevlens.errors import ReplayUnavailable, SchemaError
from mevlens.replay.amm import AmmPool
from mevlens.replay.sim import (
    Guard,
    SwapAction,
    TransferAction,
    TxProgram,
    UnwrapAction,
    WrapAction,
    execute,
)

SIDECAR_NAME = "simstate.jsonl"


def action_to_json(a) -> dict:
    if isinstance(a, SwapAction):
        return {"op": "swap", "pool": a.pool, "tokenIn": a.token_in, "amountIn": _q(a.amount_in),
                "recipient": a.recipient, "minOut": _q(a.min_out)}
    if isinstance(a, WrapAction):
        return {"op": "wrap", "amount": _q(a.amount)}
    if isinstance(a, UnwrapAction):
        return {"op": "unwrap", "amount": _q(a.amount)}
    if isinstance(a, TransferAction):
        return {"op": "transfer", "token": a.token, "to": a.to, "amount": _q(a.amount)}
    raise TypeError(f"unknown action {a!r}")


def _q(v):
    # amounts can exceed 2**53, keep them as decimal strings
    return None if v is None else str(v)


def _i(v):
    return None if v is None else int(v)


def action_from_json(d: dict):
    op = d.get("op")
    if op == "swap":
        return SwapAction(d["pool"], d["tokenIn"], _i(d.get("amountIn")), d.get("recipient"),
                          _i(d.get("minOut")) or 0)
    if op == "wrap":
        return WrapAction(_i(d.get("amount")))
    if op == "unwrap":
        return UnwrapAction(_i(d.get("amount")))
    if op == "transfer":
        return TransferAction(d["token"], d["to"], int(d["amount"]))
    raise ValueError(f"unknown action op {op!r}")


def program_to_json(p: TxProgram) -> dict:
    return {
        "sender": p.sender, "target": p.target, "holder": p.holder, "value": str(p.value),
        "gasUsed": p.gas_used, "gasPrice": str(p.gas_price), "tip": str(p.coinbase_tip),
        "guard": None if p.guard is None else [p.guard.token, str(p.guard.min_gain)],
        "actions": [action_to_json(a) for a in p.actions],
    }


def program_from_json(d: dict) -> TxProgram:
    guard = d.get("guard")
    return TxProgram(
        sender=d["sender"], target=d.get("target"),
        actions=tuple(action_from_json(a) for a in d.get("actions", [])),
        holder=d.get("holder"), value=int(d.get("value", 0)), gas_used=int(d.get("gasUsed", 21000)),
        gas_price=int(d.get("gasPrice", 0)), coinbase_tip=int(d.get("tip", 0)),
        guard=None if guard is None else Guard(guard[0], int(guard[1])),
    )


def pool_to_json(p: AmmPool) -> dict:
    return {"pool": p.pool_address, "token0": p.token0, "token1": p.token1,
            "fee": [p.fee_num, p.fee_den], "style": p.style}


def pool_from_json(d: dict) -> AmmPool:
    # reserves are placeholders; block records carry the live values
    return AmmPool(d["pool"], d["token0"], d["token1"], 1, 1, d["fee"][0], d["fee"][1], d["style"])


@dataclass
class BlockState:
    number: int
    reserves: dict[str, tuple[int, int]]
    programs: dict[str, TxProgram]

    def to_json(self) -> dict:
        return {"kind": "block", "block": self.number,
                "reserves": {k: [str(a), str(b)] for k, (a, b) in self.reserves.items()},
                "programs": {h: program_to_json(p) for h, p in self.programs.items()}}

    @classmethod
    def from_json(cls, d: dict) -> "BlockState":
        return cls(int(d["block"]),
                   {k: (int(v[0]), int(v[1])) for k, v in d["reserves"].items()},
                   {h: program_from_json(p) for h, p in d["programs"].items()})


class SimReplayOracle:
    """Re-executes a transaction's program alone against its block's start state."""

    def __init__(self, pools: dict[str, AmmPool], states: Optional[dict[int, BlockState]] = None,
                 weth: str = WETH_ADDRESS):
        self.pools = pools
        self.states = states or {}
        self.weth = weth

    def for_block(self, number: int) -> "SimReplayOracle":
        st = self.states.get(number)
        return SimReplayOracle(self.pools, {number: st} if st else {}, self.weth)

    def start_pools(self, number: int) -> dict[str, AmmPool]:
        st = self.states.get(number)
        if st is None:
            raise ReplayUnavailable(f"no state snapshot for block {number}")
        out = {}
        for addr, (r0, r1) in st.reserves.items():
            meta = self.pools.get(addr)
            if meta is None:
                raise ReplayUnavailable(f"pool {addr} missing from sidecar metadata")
            out[addr] = replace(meta, reserve0=r0, reserve1=r1)
        return out

    def replay_at(self, block: Block, tx: TransactionRecord, position: int) -> TransactionRecord:
        """Execute the block's first ``position`` programs, then ``tx``, from block start."""
        st = self.states.get(block.number)
        if st is None:
            raise ReplayUnavailable(f"no state snapshot for block {block.number}")
        prog = st.programs.get(tx.hash)
        if prog is None:
            raise ReplayUnavailable(f"no program for {tx.hash}")
        pools = self.start_pools(block.number)
        earlier = [t for t in block.transactions if t.hash != tx.hash][:position]
        for i, t in enumerate(earlier):
            p = st.programs.get(t.hash)
            if p is None:
                raise ReplayUnavailable(f"no program for {t.hash}")
            pools = execute(p, pools, tx_hash=t.hash, block_number=block.number, tx_index=i,
                            producer=block.producer, weth=self.weth).pools
        return execute(prog, pools, tx_hash=tx.hash, block_number=block.number, tx_index=position,
                       producer=block.producer, weth=self.weth).record

    def replay_at_top(self, block: Block, tx: TransactionRecord) -> TransactionRecord:
        return self.replay_at(block, tx, 0)


def write_sidecar(path, pools: dict[str, AmmPool], states: list[BlockState]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"kind": "pools", "pools": [pool_to_json(p) for p in pools.values()]},
                            separators=(",", ":")) + "\n")
        for st in states:
            fh.write(json.dumps(st.to_json(), separators=(",", ":")) + "\n")


class SidecarWriter:
    """Streaming counterpart of ``write_sidecar``."""

    def __init__(self, path, pools: dict[str, AmmPool]):
        self.fh = open(path, "w", encoding="utf-8")
        self.fh.write(json.dumps({"kind": "pools", "pools": [pool_to_json(p) for p in pools.values()]},
                                 separators=(",", ":")) + "\n")

    def write(self, st: BlockState) -> None:
        self.fh.write(json.dumps(st.to_json(), separators=(",", ":")) + "\n")

    def close(self) -> None:
        self.fh.close()


def read_sidecar(path) -> tuple[dict[str, AmmPool], Iterator[BlockState]]:
    """Return pool metadata and a lazy iterator over block states."""
    fh = open(path, encoding="utf-8")
    first = fh.readline()
    try:
        head = json.loads(first)
        pools = {p["pool"]: pool_from_json(p) for p in head["pools"]}
    except (ValueError, KeyError, TypeError) as e:
        fh.close()
        raise SchemaError(f"bad sidecar header: {e}", line=1) from None

    def states():
        with fh:
            for n, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                try:
                    yield BlockState.from_json(json.loads(line))
                except (ValueError, KeyError, TypeError) as e:
                    raise SchemaError(f"bad sidecar record: {e}", line=n) from None

    return pools, states()


def load_sim_oracle(path, blocks: Optional[set[int]] = None) -> SimReplayOracle:
    pools, it = read_sidecar(path)
    states = {st.number: st for st in it if blocks is None or st.number in blocks}
    return SimReplayOracle(pools, states)


def default_sidecar(blocks_path) -> Path:
    return Path(blocks_path).with_name(SIDECAR_NAME)
