import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import (
    addr,
    deposit_log,
    make_tx,
    transfer_log,
    v2_swap_log,
    vault_swap_log,
    words,
)
from mevlens.chain import NATIVE_TOKEN, WETH_ADDRESS, ZERO_ADDRESS, LogRecord
from mevlens.errors import DuplicateTopic
from mevlens.registry import (
    DEPOSIT_TOPIC,
    TRANSFER_TOPIC,
    WITHDRAWAL_TOPIC,
    SwapPattern,
    SwapRegistry,
    decode_swaps,
    decode_transfers,
    load_registry,
    parse_registry_lines,
)
from mevlens.replay.amm import AmmPool, sim_swap
from mevlens.replay.sim import (
    SWAP_V2_TOPIC,
    SWAP_V3_TOPIC,
    SYNC_TOPIC,
    TOKEN_EXCHANGE_TOPIC,
    SwapAction,
    TxProgram,
    UnwrapAction,
    WrapAction,
    execute,
)

TOKENS = [addr(0x100 + i) for i in range(4)]
POOL = addr(0x200)
TRADER = addr(0x300)


def _keccak(sig: str) -> str:
    keccak = pytest.importorskip("Crypto.Hash.keccak")
    k = keccak.new(digest_bits=256)
    k.update(sig.encode())
    return "0x" + k.hexdigest()


@pytest.mark.parametrize("sig,topic", [
    ("Transfer(address,address,uint256)", TRANSFER_TOPIC),
    ("Deposit(address,uint256)", DEPOSIT_TOPIC),
    ("Withdrawal(address,uint256)", WITHDRAWAL_TOPIC),
    ("Swap(address,uint256,uint256,uint256,uint256,address)", SWAP_V2_TOPIC),
    ("Swap(address,address,int256,int256,uint160,uint128,int24)", SWAP_V3_TOPIC),
    ("TokenExchange(address,int128,uint256,int128,uint256)", TOKEN_EXCHANGE_TOPIC),
    ("Sync(uint112,uint112)", SYNC_TOPIC),
])
def test_topic_constants_are_event_hashes(sig, topic):
    assert _keccak(sig) == topic


def test_bundled_topics_match_signatures(registry):
    sigs = {
        "vault_swap": "Swap(bytes32,address,address,uint256,uint256)",
        "order_fill": "LimitOrderFilled(bytes32,address,address,address,address,address,"
                      "uint128,uint128,uint128,uint256,bytes32)",
    }
    by_id = {p.pattern_id: p for p in registry}
    for pid, sig in sigs.items():
        assert by_id[pid].topic0 == _keccak(sig)


def test_duplicate_topic_with_other_map_rejected(registry):
    p = next(iter(registry))
    clash = SwapPattern.build("clash", p.topic0, {
        "pool": "emitter", "input_token": "topic[1]", "input_amount": "word[0]",
        "output_token": "topic[2]", "output_amount": "word[1]"})
    with pytest.raises(DuplicateTopic):
        SwapRegistry(list(registry) + [clash])
    SwapRegistry(list(registry) + [p])  # identical re-registration is fine


def test_bad_pattern_line_reports_location():
    with pytest.raises(ValueError, match="x.jsonl:2"):
        parse_registry_lines(["# c", '{"pattern_id": "p", "topic0": "0x12"}'], "x.jsonl")


def test_address_target_cannot_use_amount_source():
    with pytest.raises(ValueError):
        SwapPattern.build("p", "0x" + "1" * 64, {
            "pool": "signed_pair[0,1]", "input_token": "transfer_in", "input_amount": "word[0]",
            "output_token": "transfer_out", "output_amount": "word[1]"})


def test_user_pattern_file_extends_registry(tmp_path, registry):
    topic = "0x" + "42" * 32
    p = tmp_path / "extra.jsonl"
    p.write_text('{"pattern_id": "mine", "topic0": "%s", "field_map": {"pool": "emitter", '
                 '"input_token": "topic[1]", "input_amount": "word[0]", "output_token": "topic[2]", '
                 '"output_amount": "word[1]"}}\n' % topic)
    reg = load_registry([p])
    assert len(reg) == len(registry) + 1
    lg = LogRecord(POOL, (topic, "0x" + "0" * 24 + TOKENS[0][2:], "0x" + "0" * 24 + TOKENS[1][2:]),
                   words(7, 9), 0)
    (s,) = decode_swaps(make_tx(1, [lg]), reg)
    assert (s.token_in, s.amount_in, s.token_out, s.amount_out) == (TOKENS[0], 7, TOKENS[1], 9)


def test_inline_pattern_decodes(registry):
    tx = make_tx(1, [vault_swap_log(POOL, TOKENS[0], TOKENS[1], 100, 250, 0)])
    (s,) = decode_swaps(tx, registry)
    assert (s.pool, s.token_in, s.amount_in, s.token_out, s.amount_out) == (POOL, TOKENS[0], 100, TOKENS[1], 250)
    assert s.pattern_id == "vault_swap"


def test_companion_transfer_prefers_exact_amount(registry):
    # two inbound transfers into the pool; the one matching the event amount is the input
    logs = [
        transfer_log(TOKENS[2], TRADER, POOL, 5, 0),
        transfer_log(TOKENS[0], TRADER, POOL, 100, 1),
        transfer_log(TOKENS[1], POOL, TRADER, 90, 2),
        v2_swap_log(POOL, TRADER, TRADER, 100, 0, 0, 90, 3),
    ]
    (s,) = decode_swaps(make_tx(1, logs), registry)
    assert (s.token_in, s.amount_in, s.token_out) == (TOKENS[0], 100, TOKENS[1])


def test_missing_companion_is_reported_and_skipped(registry):
    errs = []
    tx = make_tx(1, [v2_swap_log(POOL, TRADER, TRADER, 100, 0, 0, 90, 0)])
    assert decode_swaps(tx, registry, errs) == []
    assert len(errs) == 1 and errs[0].log_index == 0


def test_short_data_reported(registry):
    errs = []
    lg = vault_swap_log(POOL, TOKENS[0], TOKENS[1], 1, 2, 0)
    tx = make_tx(1, [LogRecord(lg.emitter, lg.topics, lg.data[:66], 0)])
    assert decode_swaps(tx, registry, errs) == []
    assert "words" in str(errs[0])


def test_failed_tx_has_no_swaps_or_transfers(registry):
    tx = make_tx(1, [vault_swap_log(POOL, TOKENS[0], TOKENS[1], 1, 2, 0)], status="failed")
    assert decode_swaps(tx, registry) == [] and decode_transfers(tx) == []


def test_weth_deposit_is_swap_and_mint(registry):
    tx = make_tx(1, [deposit_log(WETH_ADDRESS, TRADER, 5, 0)])
    (s,) = decode_swaps(tx, registry)
    assert (s.token_in, s.token_out, s.amount_in, s.amount_out) == (NATIVE_TOKEN, WETH_ADDRESS, 5, 5)
    (t,) = decode_transfers(tx)
    assert (t.token, t.sender, t.to, t.amount) == (WETH_ADDRESS, ZERO_ADDRESS, TRADER, 5)


def test_deposit_from_other_emitter_ignored(registry):
    tx = make_tx(1, [deposit_log(addr(0x999), TRADER, 5, 0)])
    assert decode_swaps(tx, registry) == [] and decode_transfers(tx) == []


# --- simulator round trip ----------------------------------------------------

STYLES = ["v2", "v3", "multiasset"]


def _pools(styles):
    pools = {}
    pairs = [(0, 1), (1, 2), (2, 3), (3, 0)]
    for n, ((a, b), style) in enumerate(zip(pairs, styles)):
        p = addr(0x400 + n)
        t0, t1 = sorted([TOKENS[a], TOKENS[b]])
        pools[p] = AmmPool(p, t0, t1, 10**24, 3 * 10**24, 997, 1000, style)
    w = addr(0x4FF)
    t0, t1 = sorted([WETH_ADDRESS, TOKENS[0]])
    pools[w] = AmmPool(w, t0, t1, 10**22, 10**22, 997, 1000, styles[0])
    return pools


@st.composite
def programs(draw):
    styles = draw(st.lists(st.sampled_from(STYLES), min_size=4, max_size=4))
    pools = _pools(styles)
    addrs = list(pools)
    actions = []
    for _ in range(draw(st.integers(1, 5))):
        kind = draw(st.sampled_from(["swap", "swap", "swap", "wrap", "unwrap"]))
        if kind == "wrap":
            actions.append(WrapAction(draw(st.integers(1, 10**20))))
        elif kind == "unwrap":
            actions.append(UnwrapAction(draw(st.integers(1, 10**20))))
        else:
            p = pools[draw(st.sampled_from(addrs))]
            tin = draw(st.sampled_from([p.token0, p.token1]))
            actions.append(SwapAction(p.pool_address, tin, draw(st.integers(1, 10**23))))
    return pools, TxProgram(TRADER, addr(0x301), tuple(actions), holder=addr(0x301))


@given(programs())
@settings(max_examples=150)
def test_decoded_swaps_equal_simulator_truth(registry, prog):
    pools, program = prog
    res = execute(program, pools, tx_hash="0x" + "1" * 64, block_number=1, tx_index=0, producer=addr(0xB0))
    decoded = [(s.pool, s.token_in, s.amount_in, s.token_out, s.amount_out)
               for s in decode_swaps(res.record, registry)]
    assert decoded == res.swap_truth


def test_round_trip_on_one_pool_pairs_each_event_with_its_own_transfers(registry):
    # both legs pay 3 into the same pool, so only log position tells the inputs apart
    w = addr(0x4FF)
    t0, t1 = sorted([WETH_ADDRESS, TOKENS[0]])
    pools = {w: AmmPool(w, t0, t1, 10**22, 10**22, 997, 1000, "v2")}
    out1, after = sim_swap(pools[w], TOKENS[0], 3)
    out2, _ = sim_swap(after, WETH_ADDRESS, 3)
    prog = TxProgram(TRADER, addr(0x301), (SwapAction(w, TOKENS[0], 3), SwapAction(w, WETH_ADDRESS, 3)),
                     holder=addr(0x301))
    res = execute(prog, pools, tx_hash="0x" + "1" * 64, block_number=1, tx_index=0, producer=addr(0xB0))
    decoded = [(s.pool, s.token_in, s.amount_in, s.token_out, s.amount_out)
               for s in decode_swaps(res.record, registry)]
    assert decoded == res.swap_truth == [(w, TOKENS[0], 3, WETH_ADDRESS, out1), (w, WETH_ADDRESS, 3, TOKENS[0], out2)]
