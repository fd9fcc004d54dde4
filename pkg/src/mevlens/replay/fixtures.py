"""Two hand-shaped blocks that break order- and amount-matching heuristics.

``flashloan_arbitrage_block``: a four-hop WETH cycle whose last two swaps are
executed in reverse order, with the second hop's input slightly larger than the
first hop's output.

``conjoined_sandwich_block``: three attack transactions and three victims on a
single WETH pool, with different WETH amounts between the first and second
attack legs and different token amounts between the second and third.

All amounts come from the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from mevlens.chain import WETH_ADDRESS, Block, TransactionRecord
from mevlens.replay.amm import AmmPool, sim_swap
from mevlens.replay.oracle import BlockState, SimReplayOracle
from mevlens.replay.sim import SwapAction, TxProgram, execute

ETHER = 10**18
GWEI = 10**9

TOKEN_A = "0x" + "a1" * 20
TOKEN_B = "0x" + "b2" * 20
TOKEN_C = "0x" + "c3" * 20
SILK = "0x" + "5e" * 20
BUILDER = "0x" + "b0" * 20
SEARCHER_EOA = "0x" + "e0" * 20
SEARCHER_BOT = "0x" + "c0" * 20
ROUTER_1 = "0x" + "71" * 20
ROUTER_2 = "0x" + "72" * 20
USERS = ["0x" + f"{0x90 + i:02x}" * 20 for i in range(4)]


def make_pool(addr, a, b, ra, rb, style="v2") -> AmmPool:
    """Pool between a and b with reserves ra and rb, whichever token sorts first."""
    (t0, r0), (t1, r1) = sorted([(a, ra), (b, rb)])
    return AmmPool(addr, t0, t1, r0, r1, 997, 1000, style)


@dataclass
class Fixture:
    block: Block
    pools: dict[str, AmmPool]
    oracle: SimReplayOracle
    attack_txs: list[str]
    victim_txs: list[str] = field(default_factory=list)
    swap_order: list[tuple[str, str]] = field(default_factory=list)   # (pool, token_in) in log order
    amounts: dict = field(default_factory=dict)


def simulate_block(number, pools, programs, producer=BUILDER
                   ) -> tuple[Block, list[TransactionRecord], SimReplayOracle]:
    """Execute (hash, program) pairs in order from ``pools``; returns the block and a replay oracle."""
    st = dict(pools)
    txs = []
    for i, (h, prog) in enumerate(programs):
        res = execute(prog, st, tx_hash=h, block_number=number, tx_index=i, producer=producer)
        st = res.pools
        txs.append(res.record)
    block = Block(number, producer, tuple(txs))
    state = BlockState(number, {p: (v.reserve0, v.reserve1) for p, v in pools.items()},
                       dict(programs))
    return block, txs, SimReplayOracle(pools, {number: state})


def flashloan_arbitrage_block(number: int = 18_000_000) -> Fixture:
    w = WETH_ADDRESS
    pa, pab, pbc, pc = ("0x" + "01" * 20, "0x" + "02" * 20, "0x" + "03" * 20, "0x" + "04" * 20)
    pools = {
        # A is cheap in pa relative to the rest of the loop
        pa: make_pool(pa, w, TOKEN_A, 1000 * ETHER, 2_300_000 * ETHER),
        pab: make_pool(pab, TOKEN_A, TOKEN_B, 2_000_000 * ETHER, 500_000 * ETHER, "v3"),
        pbc: make_pool(pbc, TOKEN_B, TOKEN_C, 500_000 * ETHER, 40_000 * ETHER),
        pc: make_pool(pc, TOKEN_C, w, 40_000 * ETHER, 1000 * ETHER),
    }
    x = 30 * ETHER
    st = dict(pools)
    a1, st[pa] = sim_swap(st[pa], w, x)
    extra = a1 // 1000                        # second hop spends a little more than the first produced
    b2, st[pab] = sim_swap(st[pab], TOKEN_A, a1 + extra)
    c3, st[pbc] = sim_swap(st[pbc], TOKEN_B, b2)
    w4, st[pc] = sim_swap(st[pc], TOKEN_C, c3)
    prog = TxProgram(SEARCHER_EOA, SEARCHER_BOT, (
        SwapAction(pa, w, x),
        SwapAction(pab, TOKEN_A, a1 + extra),
        SwapAction(pc, TOKEN_C, c3),           # executed before the swap that produces its input
        SwapAction(pbc, TOKEN_B, b2),
    ), holder=SEARCHER_BOT, gas_used=420_000, gas_price=30 * GWEI)
    noise = TxProgram(USERS[0], ROUTER_1, (SwapAction(pab, TOKEN_B, 1000 * ETHER),),
                      holder=USERS[0], gas_used=120_000, gas_price=20 * GWEI)
    h_noise, h_arb = "0x" + "11" * 32, "0x" + "22" * 32
    block, txs, oracle = simulate_block(number, pools, [(h_arb, prog), (h_noise, noise)])
    return Fixture(block, pools, oracle, [h_arb],
                   swap_order=[(pa, w), (pab, TOKEN_A), (pc, TOKEN_C), (pbc, TOKEN_B)],
                   amounts={"in": x, "hop1_out": a1, "hop2_in": a1 + extra, "hop3_out": c3, "out": w4})


def conjoined_sandwich_block(number: int = 18_000_001) -> Fixture:
    w = WETH_ADDRESS
    ps = "0x" + "05" * 20
    pools = {ps: make_pool(ps, w, SILK, 800 * ETHER, 16_000_000 * ETHER)}
    st = dict(pools)
    w1 = 12 * ETHER
    s1, st[ps] = sim_swap(st[ps], w, w1)
    buys = [9 * ETHER, 6 * ETHER]
    for b in buys:
        _, st[ps] = sim_swap(st[ps], w, b)
    s4 = s1 + s1 // 50                         # sells more SILK than the first leg bought
    w4, st[ps] = sim_swap(st[ps], SILK, s4)
    victim_sell = 150_000 * ETHER
    _, st[ps] = sim_swap(st[ps], SILK, victim_sell)
    w6 = (w4 - w1) // 2
    s6, st[ps] = sim_swap(st[ps], w, w6)

    def attack(amount, tin):
        return TxProgram(SEARCHER_EOA, SEARCHER_BOT, (SwapAction(ps, tin, amount),), holder=SEARCHER_BOT,
                         gas_used=140_000, gas_price=40 * GWEI)

    def victim(user, router, amount, tin):
        return TxProgram(user, router, (SwapAction(ps, tin, amount),), holder=user,
                         gas_used=130_000, gas_price=25 * GWEI)

    hs = ["0x" + f"{0x31 + i:02x}" * 32 for i in range(6)]
    programs = [
        (hs[0], attack(w1, w)),
        (hs[1], victim(USERS[0], ROUTER_1, buys[0], w)),
        (hs[2], victim(USERS[1], ROUTER_1, buys[1], w)),
        (hs[3], attack(s4, SILK)),
        (hs[4], victim(USERS[2], ROUTER_2, victim_sell, SILK)),
        (hs[5], attack(w6, w)),
    ]
    block, txs, oracle = simulate_block(number, pools, programs)
    return Fixture(block, pools, oracle, [hs[0], hs[3], hs[5]], [hs[1], hs[2], hs[4]],
                   amounts={"w1": w1, "s1": s1, "w4": w4, "s4": s4, "w6": w6, "s6": s6})
