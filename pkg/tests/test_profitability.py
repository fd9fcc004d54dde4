import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import TRADER, random_profit_instance, scaled, swap_tx
from oracles import brute_profitable
from mevlens.flowgraph import init_graph
from mevlens.profitability import assess_token_change, check_profitable, loss_ratio, parse_epsilon
from mevlens.ledger import TokenChange
from mevlens.registry import Swap, decode_swaps

A, B, C, D = (f"0x{0xA000 + i:040x}" for i in range(4))
P1, P2 = f"0x{0xC000:040x}", f"0x{0xC001:040x}"
OUT = f"0x{0xF00D:040x}"
EPS_CHOICES = [Fraction(0), Fraction(1, 100), Fraction(1, 10), Fraction(1, 2)]


def verdict(tx, registry, eps=Fraction(1, 100)):
    return check_profitable(tx, init_graph(decode_swaps(tx, registry)), eps)


def test_plain_cycle_is_profitable(registry):
    tx = swap_tx(1, TRADER, [(P1, A, 100, B, 300), (P2, B, 300, A, 110)])
    v = verdict(tx, registry)
    assert v.profitable and v.residual[A] == 10 and v.conversions == []


def test_loss_covered_with_headroom(registry):
    # B lost 5, A gained 20; B -> A rate is 1 via the second swap
    tx = swap_tx(1, TRADER, [(P1, A, 100, B, 300), (P2, B, 305, A, 120)])
    v = verdict(tx, registry)
    assert v.profitable
    (step,) = v.conversions
    assert (step.token_lost, step.token_gained) == (B, A)
    assert step.amount_gained == Fraction(5 * 120, 305)
    assert v.residual[B] == 0 and v.residual[A] == 20 - Fraction(600, 305)


def test_exactly_used_up_gain_is_not_profitable(registry):
    # cost of the A loss in B is exactly the B gain: no strict headroom
    tx = swap_tx(1, TRADER, [(P1, A, 10, B, 20)])
    assert not verdict(tx, registry).profitable
    tx = swap_tx(1, TRADER, [(P1, A, 10, B, 20)], extras=[(B, OUT, TRADER, 1)])
    assert verdict(tx, registry).profitable


def test_loss_with_high_swap_gain_ratio_is_not_converted(registry):
    # the trader swapped A for more A on net (ratio 1/2) yet ends short on A
    swaps = [(P1, A, 100, B, 100), (P2, B, 100, A, 150)]
    tx = swap_tx(1, TRADER, swaps, extras=[(A, TRADER, OUT, 60), (B, OUT, TRADER, 10**6)])
    v = verdict(tx, registry)
    assert not v.profitable
    assert v.residual[A] == -10
    # with a threshold above the ratio the same loss is paid for out of B
    assert verdict(tx, registry, Fraction(3, 4)).profitable


def test_loss_ratio_without_spend_is_minus_one():
    tc = TokenChange({A: -5}, {}, {})
    assert loss_ratio(tc, A) == -1
    assert loss_ratio(TokenChange({A: 0}, {A: 15}, {A: 10}), A) == Fraction(1, 2)


@pytest.mark.parametrize("text,value", [("1/100", Fraction(1, 100)), ("0.01", Fraction(1, 100)),
                                        ("0", Fraction(0))])
def test_parse_epsilon(text, value):
    assert parse_epsilon(text) == value


@pytest.mark.parametrize("text", ["1", "-0.1", "abc", "1/0"])
def test_parse_epsilon_rejects(text):
    with pytest.raises(ValueError):
        parse_epsilon(text)


@given(st.integers(0, 2**32), st.sampled_from(EPS_CHOICES))
@settings(max_examples=300)
def test_agrees_with_brute_force(registry, seed, eps):
    swaps, extras, net, fin, fout, edges = random_profit_instance(random.Random(seed))
    tx = swap_tx(1, TRADER, swaps, extras)
    assert verdict(tx, registry, eps).profitable == brute_profitable(net, fin, fout, edges, eps)


@given(st.integers(0, 2**32), st.integers(2, 10**12))
@settings(max_examples=200)
def test_verdict_is_scale_invariant(registry, seed, c):
    swaps, extras, *_ = random_profit_instance(random.Random(seed))
    base = verdict(swap_tx(1, TRADER, swaps, extras), registry).profitable
    s2, e2 = scaled(swaps, extras, c)
    assert verdict(swap_tx(1, TRADER, s2, e2), registry).profitable == base


@given(st.integers(0, 2**32), st.randoms(use_true_random=False))
@settings(max_examples=200)
def test_verdict_ignores_swap_order(registry, seed, rnd):
    swaps, extras, *_ = random_profit_instance(random.Random(seed))
    base = verdict(swap_tx(1, TRADER, swaps, extras), registry)
    shuffled = list(swaps)
    rnd.shuffle(shuffled)
    again = verdict(swap_tx(1, TRADER, shuffled, extras), registry)
    assert again.profitable == base.profitable


@given(st.integers(0, 2**32))
@settings(max_examples=200)
def test_profitable_residuals_are_non_negative(registry, seed):
    swaps, extras, *_ = random_profit_instance(random.Random(seed))
    v = verdict(swap_tx(1, TRADER, swaps, extras), registry)
    if v.profitable:
        assert all(x >= 0 for x in v.residual.values())
        for step in v.conversions:
            assert loss_ratio(v.token_change, step.token_lost) < Fraction(1, 100)


def test_small_loss_converted_at_best_route():
    # A: spent 100 on swaps, got 99 back (ratio -1/100); one A buys two B
    g = init_graph([Swap(P1, A, 100, B, 200, "0x" + "0" * 64, 0, "t")])
    tc = TokenChange({A: -1, B: 300}, {A: 99}, {A: 100})
    v = assess_token_change(tc, g)
    assert v.profitable and v.residual == {A: 0, B: 298}
    edges = [(A, B, 100, 200)]
    assert brute_profitable(tc.net, tc.flow_in, tc.flow_out, edges, Fraction(1, 100))


def test_gain_too_small_to_cover_loss():
    g = init_graph([Swap(P1, A, 1, B, 1, "0x" + "0" * 64, 0, "t")])
    v = assess_token_change(TokenChange({A: -10, B: 5}), g)
    assert not v.profitable and v.residual[A] == -10


def test_all_zero_nets_are_profitable():
    assert assess_token_change(TokenChange({A: 0, B: 0}), init_graph([])).profitable


def test_exhaustive_fallback_finds_cover_greedy_misses():
    # greedy pays the larger loss B out of the larger gain C first, which then
    # leaves no gain able to absorb A; assigning A->C and B->D works
    swaps = [Swap(P1, A, 1, C, 10, "0x" + "0" * 64, 0, "t"),
             Swap(P2, B, 1, C, 1, "0x" + "0" * 64, 1, "t"),
             Swap(f"0x{0xC002:040x}", B, 1, D, 1, "0x" + "0" * 64, 2, "t")]
    tc = TokenChange({A: -1, B: -2, C: 11, D: 3})
    edges = [(s.token_in, s.token_out, s.amount_in, s.amount_out) for s in swaps]
    v = assess_token_change(tc, init_graph(swaps))
    assert v.profitable == brute_profitable(tc.net, {}, {}, edges, Fraction(1, 100)) is True
    assert v.search == "exhaustive"
