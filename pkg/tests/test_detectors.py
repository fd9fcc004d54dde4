import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import TRADER, addr, make_tx, random_profit_instance, swap_tx, transfer_log
from mevlens.chain import WETH_ADDRESS, load_blocks
from mevlens.detectors import (
    BACK,
    BURGER,
    FRONT,
    NORMAL,
    UNKNOWN,
    ArbitrageFinding,
    AttackPair,
    SandwichFinding,
    classify_running,
    combine_attacks,
    detect_failed_frontrun,
    identify_arbitrage,
    identify_sandwiches,
    mark_toxic,
)
from mevlens.errors import ReplayUnavailable
from mevlens.flowgraph import exists_cycle, init_graph
from mevlens.pipeline import DetectConfig, process_block
from mevlens.profitability import ProfitVerdict
from mevlens.replay.fixtures import ETHER, GWEI, flashloan_arbitrage_block, make_pool, simulate_block
from mevlens.replay.amm import sim_swap
from mevlens.replay.oracle import SimReplayOracle, read_sidecar
from mevlens.replay.sim import SwapAction, TransferAction, TxProgram

W = WETH_ADDRESS
TOK = addr(0x70C)
P1, P2 = addr(0x9001), addr(0x9002)
BOT_EOA, BOT = addr(0xBE0), addr(0xB07)
USERS = [addr(0x5000 + i) for i in range(6)]
P, Q = addr(0x9A), addr(0x9B)


def h(n):
    return "0x" + f"{n:064x}"


def _attack(amount, tin, pool=P1):
    return TxProgram(BOT_EOA, BOT, (SwapAction(pool, tin, amount),), holder=BOT, gas_used=120_000,
                     gas_price=10 * GWEI)


def _user(i, amount, tin, pool=P1):
    return TxProgram(USERS[i], addr(0x7700 + i), (SwapAction(pool, tin, amount),), holder=USERS[i],
                     gas_used=110_000, gas_price=10 * GWEI)


def _sandwich_block(victims, back_div=1, extra=()):
    pools = {P1: make_pool(P1, W, TOK, 1000 * ETHER, 2_000_000 * ETHER)}
    bought, _ = sim_swap(pools[P1], W, 20 * ETHER)
    programs = [(h(1), _attack(20 * ETHER, W))]
    for i, amt in enumerate(victims):
        programs.append((h(10 + i), _user(i, amt, W)))
    programs.extend(extra)
    programs.append((h(2), _attack(bought // back_div, TOK)))
    block, _, oracle = simulate_block(5, pools, programs)
    return block, oracle


# --- arbitrage ---------------------------------------------------------------


def test_two_swap_cycle_is_arbitrage(registry):
    tx = swap_tx(1, TRADER, [(P, addr(1), 100, addr(2), 200), (Q, addr(2), 200, addr(1), 110)])
    f = identify_arbitrage(tx, registry)
    assert f is not None and f.running_kind == UNKNOWN and f.revenue[addr(1)] == 10


def test_single_swap_is_not_arbitrage(registry):
    assert identify_arbitrage(swap_tx(1, TRADER, [(P, addr(1), 100, addr(2), 200)]), registry) is None


def test_failed_tx_is_not_arbitrage(registry):
    tx = swap_tx(1, TRADER, [(P, addr(1), 100, addr(2), 200), (Q, addr(2), 200, addr(1), 110)])
    assert identify_arbitrage(make_tx(1, (), status="failed"), registry) is None
    assert identify_arbitrage(tx, registry, require_profit=False) is not None


def test_unprofitable_cycle_needs_gate_off(registry):
    tx = swap_tx(1, TRADER, [(P, addr(1), 100, addr(2), 200), (Q, addr(2), 200, addr(1), 90)])
    assert identify_arbitrage(tx, registry) is None
    f = identify_arbitrage(tx, registry, require_profit=False)
    assert f is not None and not f.verdict.profitable


@given(st.integers(0, 2**32), st.randoms(use_true_random=False))
@settings(max_examples=200)
def test_arbitrage_ignores_swap_order(registry, seed, rnd):
    swaps, extras, *_ = random_profit_instance(random.Random(seed))
    shuffled = list(swaps)
    rnd.shuffle(shuffled)
    a = identify_arbitrage(swap_tx(1, TRADER, swaps, extras), registry)
    b = identify_arbitrage(swap_tx(1, TRADER, shuffled, extras), registry)
    assert (a is None) == (b is None)
    if a is not None:
        assert exists_cycle(init_graph(a.swaps)) and a.verdict.profitable


def test_flashloan_fixture_is_front_running(registry):
    fx = flashloan_arbitrage_block()
    tx = fx.block.tx(fx.attack_txs[0])
    f = identify_arbitrage(tx, registry, producer=fx.block.producer)
    assert f is not None
    assert classify_running(f, fx.block, fx.oracle, registry) == FRONT
    assert classify_running(f, fx.block, None, registry) == UNKNOWN
    assert classify_running(f, fx.block, SimReplayOracle(fx.pools, {}), registry) == UNKNOWN


def _back_run_block():
    pools = {P1: make_pool(P1, W, TOK, 1000 * ETHER, 2_000_000 * ETHER),
             P2: make_pool(P2, W, TOK, 1000 * ETHER, 2_000_000 * ETHER)}
    victim = _user(0, 80 * ETHER, W, P1)    # pushes TOK up on P1
    arb = TxProgram(BOT_EOA, BOT, (SwapAction(P2, W, 20 * ETHER, recipient=P1),
                                   SwapAction(P1, TOK, None)), holder=BOT, gas_used=200_000,
                    gas_price=10 * GWEI)
    return simulate_block(6, pools, [(h(1), victim), (h(2), arb)])


def test_back_running_arbitrage_classified_back(registry):
    block, _, oracle = _back_run_block()
    f = identify_arbitrage(block.tx(h(2)), registry, producer=block.producer)
    assert f is not None
    assert classify_running(f, block, oracle, registry) == BACK


def test_failed_frontrun_preconditions(registry):
    block, _, oracle = _back_run_block()
    with pytest.raises(ValueError):
        detect_failed_frontrun(block.tx(h(2)), block, oracle, registry)
    with pytest.raises(ReplayUnavailable):
        detect_failed_frontrun(block.tx(h(1)), block, None, registry)
    assert detect_failed_frontrun(block.tx(h(1)), block, oracle, registry) is False


def test_plain_transfer_is_not_failed_frontrun(registry):
    pools = {P1: make_pool(P1, W, TOK, 1000 * ETHER, 2_000_000 * ETHER)}
    prog = TxProgram(USERS[0], TOK, (TransferAction(TOK, USERS[1], 5),))
    block, _, oracle = simulate_block(7, pools, [(h(1), prog)])
    assert detect_failed_frontrun(block.tx(h(1)), block, oracle, registry) is False


# --- sandwiches --------------------------------------------------------------


def test_normal_sandwich(registry):
    block, _ = _sandwich_block([5 * ETHER])
    (s,) = identify_sandwiches(block, registry)
    assert s.kind == NORMAL and s.attack_txs == [h(1), h(2)] and s.victim_txs == [h(10)]
    assert s.pools == {P1} and s.verdict.profitable


def test_burger_with_three_victims(registry):
    block, _ = _sandwich_block([5 * ETHER, 3 * ETHER, 4 * ETHER])
    (s,) = identify_sandwiches(block, registry)
    assert s.kind == BURGER and s.victim_txs == [h(10), h(11), h(12)]


def test_partial_back_leg_still_profitable(registry):
    # the kept tokens are worth more than the WETH shortfall at the block's own rates
    block, _ = _sandwich_block([5 * ETHER], back_div=2)
    (s,) = identify_sandwiches(block, registry)
    assert s.verdict.conversions and s.verdict.profitable


def test_opposite_direction_trader_is_bystander(registry):
    block, _ = _sandwich_block([5 * ETHER], extra=[(h(20), _user(3, 1000 * ETHER, TOK))])
    (s,) = identify_sandwiches(block, registry)
    assert s.victim_txs == [h(10)]


def test_attacker_own_swap_is_not_a_victim(registry):
    pools = {P1: make_pool(P1, W, TOK, 1000 * ETHER, 2_000_000 * ETHER)}
    programs = [(h(1), _attack(20 * ETHER, W)), (h(3), _attack(5 * ETHER, W)),
                (h(2), _attack(10**21, TOK))]
    block, _, _ = simulate_block(8, pools, programs)
    assert identify_sandwiches(block, registry, require_profit=False) == []


def test_losing_sandwich_needs_gate_off(registry):
    # a dust-sized victim cannot pay for the attacker's round-trip pool fees
    block, _ = _sandwich_block([10**12])
    assert identify_sandwiches(block, registry) == []
    (s,) = identify_sandwiches(block, registry, require_profit=False)
    assert not s.verdict.profitable


def _pair(f, b, victims=()):
    return AttackPair(f, b, tuple(victims), frozenset())


def test_combine_shared_leg_is_conjoined():
    (g,) = combine_attacks([_pair("t1", "t3", ["t2"]), _pair("t3", "t5", ["t4"])],
                           {f"t{i}": i for i in range(9)})
    assert g.attack_txs == ["t1", "t3", "t5"] and g.victim_txs == ["t2", "t4"] and g.conjoined


def test_combine_disjoint_pairs_stay_apart():
    groups = combine_attacks([_pair("t1", "t3", ["t2"]), _pair("t6", "t8", ["t7"])],
                             {f"t{i}": i for i in range(9)})
    assert [g.attack_txs for g in groups] == [["t1", "t3"], ["t6", "t8"]]
    assert not any(g.conjoined for g in groups)
    assert combine_attacks([]) == []


def test_mark_toxic_flags_shared_leg():
    ok = ProfitVerdict(True, {})
    arb = ArbitrageFinding("b", 1, 2, [], ok)
    other = ArbitrageFinding("z", 1, 9, [], ok)
    sand = SandwichFinding(1, ["a", "b"], ["v"], NORMAL, ok, frozenset())
    lone = SandwichFinding(1, ["c", "d"], ["w"], NORMAL, ok, frozenset())
    mark_toxic([arb, other], [sand, lone])
    assert arb.toxic and sand.toxic and sand.toxic_txs == ["b"]
    assert not other.toxic and not lone.toxic
    assert mark_toxic([], []) == ([], [])


# --- corpus-level invariants -------------------------------------------------


def _corpus_results(corpus, registry, require_profit=True):
    pools, states = read_sidecar(corpus.sim_path)
    by_number = {s.number: s for s in states}
    cfg = DetectConfig(registry, require_profit=require_profit)
    return [(b, process_block(b, cfg, SimReplayOracle(pools, {b.number: by_number[b.number]})))
            for b in load_blocks(corpus.blocks_path)]


def test_findings_satisfy_shape_invariants(small_corpus, registry):
    n = 0
    for block, res in _corpus_results(small_corpus, registry):
        for a in res.arbs:
            assert a.verdict.profitable and exists_cycle(init_graph(a.swaps))
        pos = {t.hash: t.tx_index for t in block.transactions}
        for s in res.sands:
            n += 1
            lo, hi = pos[s.attack_txs[0]], pos[s.attack_txs[-1]]
            assert s.victim_txs and all(lo < pos[v] < hi for v in s.victim_txs)
            assert not set(s.victim_txs) & set(s.attack_txs)
            if s.kind == BURGER:
                assert len(s.victim_txs) >= 2
            if s.kind == NORMAL:
                assert len(s.attack_txs) == 2 and len(s.victim_txs) == 1
    assert n > 0


def test_dropping_profit_gate_finds_more(small_corpus, registry):
    gated = sum(len(r.arbs) + len(r.sands) for _, r in _corpus_results(small_corpus, registry))
    open_ = sum(len(r.arbs) + len(r.sands) for _, r in _corpus_results(small_corpus, registry, False))
    assert open_ > gated


def test_small_corpus_matches_labels(small_corpus, registry):
    from mevlens.replay.generator import expected_keys, finding_keys
    labels = [json.loads(line) for line in open(small_corpus.labels_path)]
    records, failed = [], []
    for _, r in _corpus_results(small_corpus, registry):
        records += r.records
        failed += r.failed_records
    assert finding_keys(records, failed) == expected_keys(labels)
