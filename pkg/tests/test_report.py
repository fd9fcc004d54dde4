import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import addr
from oracles import collusion_ref, expected_profit_ref
from mevlens.chain import WETH_ADDRESS
from mevlens.flowgraph import init_graph
from mevlens.pipeline import DetectConfig, process_block
from mevlens.profitability import ProfitVerdict
from mevlens.registry import Swap
from mevlens.replay.fixtures import conjoined_sandwich_block, flashloan_arbitrage_block
from mevlens.report import (
    EpInputs,
    FindingRecord,
    collusion_scan,
    expected_profit,
    format_margin,
    parse_ep,
    parse_thresholds,
    summarize,
    value_in_native,
)

A, B = addr(0xA1), addr(0xB1)


def ep(profit, sr, gp, fg):
    return expected_profit(EpInputs(profit, Fraction(sr), gp, fg))


def test_expected_profit_examples():
    assert ep(10, 1, 5, 7) == 10
    assert ep(10, Fraction(1, 2), 2, 3) == 2
    assert ep(10, 0, 2, 3) == -6


def test_success_rate_out_of_range():
    with pytest.raises(ValueError):
        EpInputs(1, Fraction(3, 2), 1, 1)
    with pytest.raises(ValueError):
        parse_ep("-0.1")


def test_parse_ep_and_thresholds():
    assert parse_ep("0.5") == (Fraction(1, 2), None)
    assert parse_ep("1/4:21000") == (Fraction(1, 4), 21000)
    assert parse_thresholds("0.6/0.3") == (Fraction(3, 5), Fraction(3, 10))
    with pytest.raises(ValueError):
        parse_thresholds("0.5")


sr_fracs = st.tuples(st.integers(0, 1000), st.integers(1, 1000)).filter(lambda t: t[0] <= t[1])


@given(st.integers(-10**30, 10**30), sr_fracs, st.integers(0, 10**12), st.integers(0, 10**7))
def test_expected_profit_matches_reference(profit, sr, gp, fg):
    assert ep(profit, Fraction(*sr), gp, fg) == expected_profit_ref(profit, sr[0], sr[1], gp, fg)


@given(st.integers(-10**20, 10**20), st.integers(-10**20, 10**20), sr_fracs,
       st.integers(0, 10**9), st.integers(0, 10**6))
def test_expected_profit_is_linear_in_profit(p1, p2, sr, gp, fg):
    s = Fraction(*sr)
    assert ep(p1 + p2, s, gp, fg) == ep(p1, s, gp, fg) + ep(p2, s, 0, 0)


@given(st.integers(-10**20, 10**20), sr_fracs, sr_fracs, st.integers(0, 10**9), st.integers(0, 10**6))
def test_expected_profit_is_affine_in_success_rate(p, s1, s2, gp, fg):
    a, b = Fraction(*s1), Fraction(*s2)
    mid = (a + b) / 2
    assert 2 * ep(p, mid, gp, fg) == ep(p, a, gp, fg) + ep(p, b, gp, fg)


def rows(table):
    """(builder, searcher) -> count into one row per MEV transaction."""
    return [bs for bs, n in table.items() for _ in range(n)]


def test_collusion_dominant_pair_flagged():
    table = {("b1", "s1"): 6, ("b2", "s1"): 4, ("b1", "s2"): 3}
    # s1 gives 6/10 of its txs to b1, b1 takes 6/9 of its MEV from s1
    (c,) = collusion_scan([{"builder": b, "searcher": s} for b, s in rows(table)])
    assert (c.builder, c.searcher, c.tx_count) == ("b1", "s1", 6)
    assert c.share_searcher == Fraction(3, 5) and c.share_builder == Fraction(2, 3)


def test_collusion_sixty_forty_is_not_flagged():
    # the searcher is loyal (60%) but the builder's MEV comes mostly from elsewhere (40%)
    table = {("b1", "s1"): 6, ("b2", "s1"): 4, ("b1", "s2"): 3, ("b1", "s3"): 3, ("b1", "s4"): 3,
             ("b3", "s2"): 4, ("b3", "s3"): 4, ("b3", "s4"): 4}
    assert collusion_ref(rows(table)) == set()
    assert collusion_scan([{"builder": b, "searcher": s} for b, s in rows(table)]) == []


def test_collusion_exactly_half_is_not_flagged():
    table = {("b1", "s1"): 1, ("b1", "s2"): 1}
    assert collusion_scan([{"builder": b, "searcher": s} for b, s in rows(table)]) == []
    assert collusion_scan([]) == []


tables = st.dictionaries(st.tuples(st.sampled_from("bcd"), st.sampled_from("xyzw")),
                         st.integers(1, 8), max_size=10)
thresholds = st.sampled_from([Fraction(1, 2), Fraction(1, 3), Fraction(3, 5), Fraction(0)])


@given(tables, thresholds, thresholds)
def test_collusion_matches_reference(table, bt, stt):
    r = rows(table)
    got = {(c.builder, c.searcher) for c in collusion_scan([{"builder": b, "searcher": s} for b, s in r], bt, stt)}
    assert got == collusion_ref(r, bt, stt)


def rec(rev, fees, kind="arbitrage", tags=("front",), txs=("0x1",), **kw):
    return FindingRecord("id", kind, list(tags), 1, list(txs), rev, fees, **kw)


def test_margin_and_profit():
    r = rec(200, 50)
    assert r.profit_native == 150 and r.margin == Fraction(3, 4)
    assert format_margin(r.margin) == "75.0%"
    assert rec(0, 5).margin is None and format_margin(None) == "n/a"
    assert format_margin(Fraction(-1, 3)) == "-33.3%"


def test_record_json_round_trip():
    r = rec(10**30, 7, victims=["0x2"], unpriced={A: 5}, warnings=["w"], builder="b", searcher="s",
            gas_used=3, gas_price=2)
    back = FindingRecord.from_json(json.loads(json.dumps(r.to_json())))
    assert back == r


def test_record_with_inconsistent_profit_rejected():
    d = rec(10, 3).to_json()
    d["profit_native"] = "8"
    with pytest.raises(ValueError):
        FindingRecord.from_json(d)


def test_value_in_native():
    w = WETH_ADDRESS
    assert value_in_native(ProfitVerdict(True, {w: Fraction(2)}), init_graph([])).native == 2
    g = init_graph([Swap(addr(0x9), A, 1, B, 2, "0x" + "0" * 64, 0, "t")])
    v = value_in_native(ProfitVerdict(True, {B: Fraction(200)}), g)
    assert v.native == 0 and v.unpriced == {B: 200}
    assert value_in_native(ProfitVerdict(True, {}), g).native == 0
    g2 = init_graph([Swap(addr(0x9), B, 4, w, 1, "0x" + "0" * 64, 0, "t")])
    assert value_in_native(ProfitVerdict(True, {B: Fraction(200)}), g2).native == 50


def test_summarize_counts_toxic_overlap_once():
    sand = rec(100, 10, "sandwich", ("normal", "toxic"), ("0xa", "0xb"))
    arb = rec(30, 5, "arbitrage", ("front", "toxic"), ("0xb",))
    other = rec(20, 5, "arbitrage", ("back",), ("0xc",))
    s = summarize([sand, arb, other], failed_frontruns=2)
    assert s["arbitrages"] == 2 and s["sandwiches"] == 1 and s["toxic_overlap"] == 1
    assert s["mev_activities"] == 2 and s["failed_frontruns"] == 2
    assert s["revenue_native"] == "120" and s["profit_native"] == "105"
    assert s["arbitrage_front"] == 1 and s["arbitrage_back"] == 1 and s["sandwich_normal"] == 1


@pytest.mark.parametrize("make", [flashloan_arbitrage_block, conjoined_sandwich_block])
def test_fees_are_gas_plus_coinbase(registry, make):
    fx = make()
    res = process_block(fx.block, DetectConfig(registry), fx.oracle)
    assert res.records
    by_hash = {t.hash: t for t in fx.block.transactions}
    for r in res.records:
        txs = [by_hash[h] for h in r.txs]
        assert r.fees_native == sum(t.gas_used * t.effective_gas_price + t.coinbase_transfer for t in txs)
        assert r.builder == fx.block.producer
