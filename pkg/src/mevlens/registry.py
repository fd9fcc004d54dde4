"""Swap-event pattern registry and log decoding.

A pattern tells the decoder where each of the five swap fields lives. Sources
use a small grammar::

    emitter              address of the log emitter
    topic[i]             indexed topic i (address = low 20 bytes, amount = uint)
    word[i]              32-byte data word i
    transfer_in          companion ERC-20 Transfer into the pool (token / amount)
    transfer_out         companion ERC-20 Transfer out of the pool (token / amount)
    signed_pair[i,j]     int256 words i and j; positive = paid in, negative = paid out
    nonzero_pair[i,j]    first non-zero uint among words i and j
    native               the native pseudo-token

Registry files hold one JSON object per line with ``pattern_id``, ``topic0``,
``field_map`` and an optional ``emitters`` allow-list. Lines starting with
``#`` are comments.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from mevlens.chain import (
    NATIVE_TOKEN,
    WETH_ADDRESS,
    ZERO_ADDRESS,
    TransactionRecord,
    to_address,
    word_to_address,
    word_to_int,
)
from mevlens.errors import DecodeError, DuplicateTopic

log = logging.getLogger(__name__)

TRANSFER_TOPIC = "0xddf252ad1be2c89b69c2b068fc378daa952ba7f163c4a11628f55a4df523b3ef"
DEPOSIT_TOPIC = "0xe1fffcc4923d04b559f4d29a8bfc6cda04eb5b0d3c460751c2402c5c5cc9109c"
WITHDRAWAL_TOPIC = "0x7fcf532c15f0a6db0bd6d0e038bea71d30d808c7d98cb3bf7268a95bf5081b65"

TARGETS = ("pool", "input_token", "input_amount", "output_token", "output_amount")
_ADDRESS_TARGETS = {"pool", "input_token", "output_token"}

_SOURCE_RE = re.compile(
    r"^(?:(?P<plain>emitter|transfer_in|transfer_out|native)"
    r"|(?P<idx>topic|word)\[(?P<i>\d+)\]"
    r"|(?P<pair>signed_pair|nonzero_pair)\[(?P<a>\d+),\s*(?P<b>\d+)\])$"
)


@dataclass(frozen=True, slots=True)
class Source:
    kind: str
    args: tuple[int, ...] = ()

    @classmethod
    def parse(cls, text: str) -> "Source":
        m = _SOURCE_RE.match(text.strip())
        if not m:
            raise ValueError(f"unknown field source {text!r}")
        if m["plain"]:
            return cls(m["plain"])
        if m["idx"]:
            return cls(m["idx"], (int(m["i"]),))
        return cls(m["pair"], (int(m["a"]), int(m["b"])))

    def __str__(self) -> str:
        if not self.args:
            return self.kind
        return f"{self.kind}[{','.join(map(str, self.args))}]"


@dataclass(frozen=True, slots=True)
class SwapPattern:
    pattern_id: str
    topic0: str
    field_map: tuple[tuple[str, Source], ...]
    emitters: Optional[frozenset[str]] = None

    @classmethod
    def build(cls, pattern_id, topic0, field_map: dict, emitters=None) -> "SwapPattern":
        topic0 = topic0.lower()
        if not re.match(r"^0x[0-9a-f]{64}$", topic0):
            raise ValueError(f"{pattern_id}: topic0 must be a 32-byte hex word")
        missing = [t for t in TARGETS if t not in field_map]
        extra = [k for k in field_map if k not in TARGETS]
        if missing or extra:
            raise ValueError(f"{pattern_id}: field_map missing {missing} / unknown {extra}")
        parsed = {}
        for target in TARGETS:
            src = field_map[target]
            src = src if isinstance(src, Source) else Source.parse(src)
            if target in _ADDRESS_TARGETS and src.kind in ("signed_pair", "nonzero_pair"):
                raise ValueError(f"{pattern_id}: {target} cannot come from {src}")
            if target not in _ADDRESS_TARGETS and src.kind in ("emitter", "native"):
                raise ValueError(f"{pattern_id}: {target} cannot come from {src}")
            if target == "pool" and src.kind.startswith("transfer"):
                raise ValueError(f"{pattern_id}: pool cannot come from a companion transfer")
            parsed[target] = src
        ems = frozenset(to_address(e) for e in emitters) if emitters else None
        return cls(pattern_id, topic0, tuple((t, parsed[t]) for t in TARGETS), ems)

    def source(self, target: str) -> Source:
        for t, s in self.field_map:
            if t == target:
                return s
        raise KeyError(target)

    def to_dict(self) -> dict:
        d = {"pattern_id": self.pattern_id, "topic0": self.topic0,
             "field_map": {t: str(s) for t, s in self.field_map}}
        if self.emitters:
            d["emitters"] = sorted(self.emitters)
        return d


@dataclass(frozen=True, slots=True)
class Swap:
    pool: str
    token_in: str
    amount_in: int
    token_out: str
    amount_out: int
    tx_hash: str
    log_index: int
    pattern_id: str

    @property
    def direction(self) -> tuple[str, str, str]:
        return (self.pool, self.token_in, self.token_out)


@dataclass(frozen=True, slots=True)
class TransferRecord:
    token: str
    sender: str
    to: str
    amount: int
    log_index: int  # -1 for records synthesised from call traces


class SwapRegistry:
    """Topic0-indexed collection of swap patterns."""

    def __init__(self, patterns: Iterable[SwapPattern] = ()):
        self._by_topic: dict[str, SwapPattern] = {}
        for p in patterns:
            self.register(p)

    def register(self, p: SwapPattern) -> "SwapRegistry":
        have = self._by_topic.get(p.topic0)
        if have is not None and have != p:
            raise DuplicateTopic(
                f"topic0 {p.topic0} already registered as {have.pattern_id!r} with a different field map"
            )
        self._by_topic[p.topic0] = p
        return self

    def lookup(self, topic0: Optional[str]) -> Optional[SwapPattern]:
        return self._by_topic.get(topic0) if topic0 else None

    def __len__(self) -> int:
        return len(self._by_topic)

    def __iter__(self):
        return iter(self._by_topic.values())

    def __contains__(self, topic0) -> bool:
        return topic0 in self._by_topic


def parse_registry_lines(lines: Iterable[str], origin: str = "<registry>") -> list[SwapPattern]:
    out = []
    for n, line in enumerate(lines, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            d = json.loads(s)
            out.append(SwapPattern.build(d["pattern_id"], d["topic0"], d["field_map"], d.get("emitters")))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"{origin}:{n}: bad pattern line: {exc}") from None
    return out


def bundled_patterns() -> list[SwapPattern]:
    text = resources.files("mevlens").joinpath("data/patterns.jsonl").read_text(encoding="utf-8")
    return parse_registry_lines(text.splitlines(), "patterns.jsonl")


def load_registry(paths: Iterable = (), include_bundled: bool = True) -> SwapRegistry:
    """Build a registry from the bundled set plus user files, later files last."""
    reg = SwapRegistry(bundled_patterns() if include_bundled else ())
    for path in paths:
        p = Path(path)
        with p.open("r", encoding="utf-8") as fh:
            for pat in parse_registry_lines(fh, str(p)):
                reg.register(pat)
    return reg


# --- transfers -------------------------------------------------------------


def decode_transfers(tx: TransactionRecord, wrapped_native: frozenset = frozenset({WETH_ADDRESS}),
                     errors: Optional[list] = None) -> list[TransferRecord]:
    """ERC-20 transfers plus native value moved by non-reverted traces.

    Deposit/Withdrawal logs of wrapped-native contracts are read as mint/burn
    transfers, since WETH9 emits no Transfer event for them.
    """
    if not tx.succeeded:
        return []
    out: list[TransferRecord] = []
    for lg in tx.logs:
        t0 = lg.topic0
        if t0 == TRANSFER_TOPIC:
            if len(lg.topics) != 3 or len(lg.data) != 66:
                _report(errors, DecodeError("malformed Transfer log", tx.hash, lg.log_index, "erc20_transfer"))
                continue
            out.append(TransferRecord(lg.emitter, word_to_address(lg.topics[1]),
                                      word_to_address(lg.topics[2]), int(lg.data, 16), lg.log_index))
        elif (t0 == DEPOSIT_TOPIC or t0 == WITHDRAWAL_TOPIC) and lg.emitter in wrapped_native:
            if len(lg.topics) != 2 or len(lg.data) != 66:
                _report(errors, DecodeError("malformed wrap log", tx.hash, lg.log_index, "weth"))
                continue
            who = word_to_address(lg.topics[1])
            amount = int(lg.data, 16)
            if t0 == DEPOSIT_TOPIC:
                out.append(TransferRecord(lg.emitter, ZERO_ADDRESS, who, amount, lg.log_index))
            else:
                out.append(TransferRecord(lg.emitter, who, ZERO_ADDRESS, amount, lg.log_index))
    for tr in tx.traces:
        if tr.native_value and not tr.reverted:
            out.append(TransferRecord(NATIVE_TOKEN, tr.sender, tr.to, tr.native_value, -1))
    return out


def _report(errors, err: DecodeError):
    if errors is not None:
        errors.append(err)
    else:
        log.debug("%s (tx %s log %s)", err, err.tx_hash, err.log_index)


# --- swaps -----------------------------------------------------------------


def _companion(transfers, pool, log_index, inbound, want_amount, segment_start=-1):
    """Transfer backing one side of a swap event at ``log_index``.

    Preference: exact amount, then inside this swap's own segment (after the same
    pool's previous swap event, up to this one), then nearest by log distance with
    the preceding transfer winning a tie.
    """
    if inbound:
        cands = [t for t in transfers if t.to == pool and t.log_index >= 0]
    else:
        cands = [t for t in transfers if t.sender == pool and t.log_index >= 0]
    if want_amount is not None:
        exact = [t for t in cands if t.amount == want_amount]
        if exact:
            cands = exact
    if not cands:
        return None
    return min(cands, key=lambda t: (not segment_start < t.log_index < log_index,
                                     abs(t.log_index - log_index), t.log_index > log_index))


class _Bad(Exception):
    pass


def _decode_one(lg, pattern: SwapPattern, transfers, tx_hash, last_event=None) -> Swap:
    words = lg.data_words()
    if (len(lg.data) - 2) % 64:
        raise _Bad("data length is not a whole number of words")

    def word(i):
        if i >= len(words):
            raise _Bad(f"data has {len(words)} words, need word[{i}]")
        return words[i]

    def topic(i):
        if i >= len(lg.topics):
            raise _Bad(f"log has {len(lg.topics)} topics, need topic[{i}]")
        return lg.topics[i][2:]

    def address_of(src: Source):
        if src.kind == "emitter":
            return lg.emitter
        if src.kind == "native":
            return NATIVE_TOKEN
        if src.kind == "topic":
            return word_to_address(topic(src.args[0]))
        if src.kind == "word":
            return word_to_address(word(src.args[0]))
        raise _Bad(f"cannot read an address from {src}")

    def amount_of(src: Source, side):
        if src.kind == "topic":
            return int(topic(src.args[0]), 16)
        if src.kind == "word":
            return int(word(src.args[0]), 16)
        if src.kind == "nonzero_pair":
            a, b = (int(word(i), 16) for i in src.args)
            return a or b
        if src.kind == "signed_pair":
            a, b = (word_to_int("0x" + word(i)) for i in src.args)
            if not ((a > 0 > b) or (b > 0 > a)):
                raise _Bad("signed pair does not have one positive and one negative side")
            return max(a, b) if side == "in" else -min(a, b)
        raise _Bad(f"cannot read an amount from {src}")

    pool = address_of(pattern.source("pool"))
    segment_start = -1 if last_event is None else last_event.get(pool, -1)
    resolved = {}
    for side, tok_key, amt_key in (("in", "input_token", "input_amount"),
                                   ("out", "output_token", "output_amount")):
        tok_src, amt_src = pattern.source(tok_key), pattern.source(amt_key)
        amount = None if amt_src.kind.startswith("transfer") else amount_of(amt_src, side)
        token = None if tok_src.kind.startswith("transfer") else address_of(tok_src)
        comp = None
        for src in (tok_src, amt_src):
            if src.kind.startswith("transfer") and comp is None:
                inbound = src.kind == "transfer_in"
                comp = _companion(transfers, pool, lg.log_index, inbound, amount, segment_start)
                if comp is None:
                    raise _Bad(f"no companion transfer {'into' if inbound else 'out of'} pool {pool}")
        if token is None:
            token = comp.token
        if amount is None:
            amount = comp.amount
        resolved[side] = (token, amount)
    (tin, ain), (tout, aout) = resolved["in"], resolved["out"]
    if ain <= 0 or aout <= 0:
        raise _Bad("swap amounts must be positive")
    if tin == tout:
        raise _Bad("input and output token are identical")
    return Swap(pool, tin, ain, tout, aout, tx_hash, lg.log_index, pattern.pattern_id)


def decode_swaps(tx: TransactionRecord, registry: SwapRegistry, errors: Optional[list] = None,
                 transfers: Optional[list[TransferRecord]] = None) -> list[Swap]:
    """One Swap per log matching a registered pattern, in log order.

    Decode failures are appended to ``errors`` (or logged) and the log is skipped.
    """
    if not tx.succeeded:
        return []
    if transfers is None:
        transfers = decode_transfers(tx)
    swaps = []
    last_event: dict[str, int] = {}
    for lg in tx.logs:
        pattern = registry.lookup(lg.topic0)
        if pattern is None or (pattern.emitters is not None and lg.emitter not in pattern.emitters):
            continue
        try:
            sw = _decode_one(lg, pattern, transfers, tx.hash, last_event)
            swaps.append(sw)
            last_event[sw.pool] = lg.log_index
        except (_Bad, ValueError) as exc:
            _report(errors, DecodeError(str(exc), tx.hash, lg.log_index, pattern.pattern_id))
    return swaps
