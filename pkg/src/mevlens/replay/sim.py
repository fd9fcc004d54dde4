"""Single-writer chain simulator that turns transaction programs into receipts.

A program is the simulator's stand-in for calldata: a list of swap, wrap,
unwrap and transfer actions executed on behalf of a holder address. Execution
emits the same Transfer / Swap / Deposit / Withdrawal logs a live chain would,
so decoded swaps can be compared bit-exactly with the simulator's own numbers.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Union

from mevlens.chain import (
    FAILED,
    NATIVE_TOKEN,
    SUCCESS,
    WETH_ADDRESS,
    LogRecord,
    TraceRecord,
    TransactionRecord,
    address_to_word,
    int_to_word,
    uint_to_word,
)
from mevlens.errors import InsufficientLiquidity
from mevlens.ledger import BalanceLedger
from mevlens.registry import DEPOSIT_TOPIC, TRANSFER_TOPIC, WITHDRAWAL_TOPIC
from mevlens.replay.amm import AmmPool, sim_swap

SWAP_V2_TOPIC = "0xd78ad95fa46c994b6551d0da85fc275fe613ce37657fb8d5e3d130840159d822"
SWAP_V3_TOPIC = "0xc42079f94a6350d7e6235f29174924f928cc2ac818eb64fed8004e115fbcca67"
TOKEN_EXCHANGE_TOPIC = "0x8b3e96f2b889fa771c53c981b40daf005f63f637f1869f707052d15a3dd97140"
SYNC_TOPIC = "0x1c411e9a96e071241c2f21f7726b17ae89e3cab4c78be50e062b03a9fffbbad1"

PREV = None  # amount placeholder: use the previous action's output


@dataclass(frozen=True)
class SwapAction:
    pool: str
    token_in: str
    amount_in: Optional[int] = PREV
    recipient: Optional[str] = None   # defaults to the holder
    min_out: int = 0


@dataclass(frozen=True)
class WrapAction:
    amount: Optional[int] = PREV


@dataclass(frozen=True)
class UnwrapAction:
    amount: Optional[int] = PREV


@dataclass(frozen=True)
class TransferAction:
    token: str
    to: str
    amount: int


Action = Union[SwapAction, WrapAction, UnwrapAction, TransferAction]


@dataclass(frozen=True)
class Guard:
    """Revert unless the holder's net change in ``token`` is at least ``min_gain``."""

    token: str
    min_gain: int


@dataclass(frozen=True)
class TxProgram:
    sender: str
    target: Optional[str]
    actions: tuple[Action, ...] = ()
    holder: Optional[str] = None      # defaults to the sender
    value: int = 0
    gas_used: int = 21000
    gas_price: int = 0
    coinbase_tip: int = 0
    guard: Optional[Guard] = None

    @property
    def payer(self) -> str:
        return self.holder or self.sender


class _Revert(Exception):
    pass


def _word(v: int) -> str:
    return uint_to_word(v)[2:]


@dataclass
class ExecutionResult:
    record: TransactionRecord
    pools: dict[str, AmmPool]
    holder_delta: dict[str, int]
    swap_truth: list[tuple[str, str, int, str, int]]   # (pool, token_in, in, token_out, out)


def execute(program: TxProgram, pools: dict[str, AmmPool], *, tx_hash: str, block_number: int,
            tx_index: int, producer: str, weth: str = WETH_ADDRESS) -> ExecutionResult:
    """Run ``program`` against ``pools`` without mutating them."""
    state = dict(pools)
    logs: list[LogRecord] = []
    traces: list[TraceRecord] = []
    delta: dict[str, int] = defaultdict(int)
    truth = []
    holder = program.payer
    pending: dict[str, tuple[str, int]] = {}
    prev_out: Optional[int] = None

    def emit(emitter, topics, data_words):
        logs.append(LogRecord(emitter, tuple(topics), "0x" + "".join(data_words), len(logs)))

    def transfer_log(token, frm, to, amount):
        emit(token, (TRANSFER_TOPIC, address_to_word(frm), address_to_word(to)), [_word(amount)])

    try:
        for act in program.actions:
            if isinstance(act, SwapAction):
                amount = prev_out if act.amount_in is None else act.amount_in
                if amount is None or amount <= 0:
                    raise _Revert("nothing to swap")
                pool = state.get(act.pool)
                if pool is None:
                    raise _Revert(f"unknown pool {act.pool}")
                token_out = pool.other(act.token_in)
                recipient = act.recipient or holder
                try:
                    out, new_pool = sim_swap(pool, act.token_in, amount)
                except InsufficientLiquidity:
                    raise _Revert("insufficient liquidity") from None
                if out < act.min_out:
                    raise _Revert("slippage")
                pre_paid = pending.pop(act.pool, None) == (act.token_in, amount)
                if pool.style == "v3":
                    transfer_log(token_out, act.pool, recipient, out)
                    if not pre_paid:
                        transfer_log(act.token_in, holder, act.pool, amount)
                else:
                    if not pre_paid:
                        transfer_log(act.token_in, holder, act.pool, amount)
                    transfer_log(token_out, act.pool, recipient, out)
                _emit_swap_event(emit, pool, new_pool, act.token_in, amount, out,
                                 program.target or program.sender, recipient, holder)
                if not pre_paid:
                    delta[act.token_in] -= amount
                if recipient == holder:
                    delta[token_out] += out
                elif recipient in state:
                    pending[recipient] = (token_out, out)
                state[act.pool] = new_pool
                truth.append((act.pool, act.token_in, amount, token_out, out))
                prev_out = out
            elif isinstance(act, WrapAction):
                amount = prev_out if act.amount is None else act.amount
                if not amount:
                    raise _Revert("nothing to wrap")
                if not (holder == program.sender and program.target == weth and program.value == amount):
                    traces.append(TraceRecord(holder, weth, amount, 1, False))
                emit(weth, (DEPOSIT_TOPIC, address_to_word(holder)), [_word(amount)])
                delta[NATIVE_TOKEN] -= amount
                delta[weth] += amount
                truth.append((weth, NATIVE_TOKEN, amount, weth, amount))
                prev_out = amount
            elif isinstance(act, UnwrapAction):
                amount = prev_out if act.amount is None else act.amount
                if not amount:
                    raise _Revert("nothing to unwrap")
                emit(weth, (WITHDRAWAL_TOPIC, address_to_word(holder)), [_word(amount)])
                traces.append(TraceRecord(weth, holder, amount, 1, False))
                delta[weth] -= amount
                delta[NATIVE_TOKEN] += amount
                truth.append((weth, weth, amount, NATIVE_TOKEN, amount))
                prev_out = amount
            elif isinstance(act, TransferAction):
                if act.token == NATIVE_TOKEN:
                    if not (holder == program.sender and program.target == act.to):
                        traces.append(TraceRecord(holder, act.to, act.amount, 1, False))
                else:
                    transfer_log(act.token, holder, act.to, act.amount)
                delta[act.token] -= act.amount
            else:
                raise TypeError(f"unknown action {act!r}")
        if program.guard is not None and delta[program.guard.token] < program.guard.min_gain:
            raise _Revert("guard")
        if program.coinbase_tip:
            traces.append(TraceRecord(holder, producer, program.coinbase_tip, 1, False))
    except _Revert:
        top = TraceRecord(program.sender, program.target or program.sender, program.value, 0, True)
        rec = TransactionRecord(tx_hash, block_number, tx_index, program.sender, program.target,
                                FAILED, program.gas_used, program.gas_price, (), (top,), 0)
        return ExecutionResult(rec, dict(pools), {}, [])

    top = TraceRecord(program.sender, program.target or program.sender, program.value, 0, False)
    rec = TransactionRecord(tx_hash, block_number, tx_index, program.sender, program.target,
                            SUCCESS, program.gas_used, program.gas_price, tuple(logs),
                            (top, *traces), program.coinbase_tip)
    return ExecutionResult(rec, state, dict(delta), truth)


def _emit_swap_event(emit, pool: AmmPool, new_pool: AmmPool, token_in, amount_in, amount_out,
                     caller, recipient, holder):
    zero_in = token_in == pool.token0
    if pool.style == "v2":
        emit(pool.pool_address, (SYNC_TOPIC,), [_word(new_pool.reserve0), _word(new_pool.reserve1)])
        a0i, a1i = (amount_in, 0) if zero_in else (0, amount_in)
        a0o, a1o = (0, amount_out) if zero_in else (amount_out, 0)
        emit(pool.pool_address, (SWAP_V2_TOPIC, address_to_word(caller), address_to_word(recipient)),
             [_word(a0i), _word(a1i), _word(a0o), _word(a1o)])
    elif pool.style == "v3":
        a0, a1 = (amount_in, -amount_out) if zero_in else (-amount_out, amount_in)
        sqrt_price = math.isqrt((new_pool.reserve1 << 192) // new_pool.reserve0)
        liquidity = min(math.isqrt(new_pool.reserve0 * new_pool.reserve1), (1 << 128) - 1)
        emit(pool.pool_address, (SWAP_V3_TOPIC, address_to_word(caller), address_to_word(recipient)),
             [int_to_word(a0)[2:], int_to_word(a1)[2:], _word(min(sqrt_price, (1 << 160) - 1)),
              _word(liquidity), int_to_word(0)[2:]])
    elif pool.style == "multiasset":
        sold, bought = (0, 1) if zero_in else (1, 0)
        emit(pool.pool_address, (TOKEN_EXCHANGE_TOPIC, address_to_word(holder)),
             [_word(sold), _word(amount_in), _word(bought), _word(amount_out)])
    else:
        raise ValueError(f"unknown pool style {pool.style!r}")


@dataclass
class SimChain:
    """Pools plus cumulative holder balances; state changes only through ``apply_tx``."""

    pools: dict[str, AmmPool]
    balances: BalanceLedger = field(default_factory=BalanceLedger)
    block_number: int = 0
    producer: str = "0x" + "0" * 40

    def snapshot(self) -> dict[str, AmmPool]:
        return dict(self.pools)

    def restore(self, snap: dict[str, AmmPool]) -> None:
        self.pools = dict(snap)

    def dry_run(self, program: TxProgram, tx_hash: str = "0x" + "0" * 64, tx_index: int = 0
                ) -> ExecutionResult:
        return execute(program, self.pools, tx_hash=tx_hash, block_number=self.block_number,
                       tx_index=tx_index, producer=self.producer)

    def apply_tx(self, program: TxProgram, tx_hash: str, tx_index: int) -> ExecutionResult:
        res = self.dry_run(program, tx_hash, tx_index)
        self.pools = res.pools
        for tok, v in res.holder_delta.items():
            self.balances.add(program.payer, tok, v)
        return res
