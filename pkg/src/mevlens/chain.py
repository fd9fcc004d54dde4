"""Canonical chain data model and the line-delimited block corpus reader.

Addresses are kept as canonical ``0x``-prefixed lowercase hex strings. For a
fixed-width lowercase rendering, string equality is byte-wise equality, and
plain strings keep dictionaries and sets cheap in the hot detection loops.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from mevlens.errors import RangeEmpty, SchemaError

log = logging.getLogger(__name__)

UINT256_MAX = (1 << 256) - 1

ZERO_ADDRESS = "0x" + "0" * 40
DEAD_ADDRESS = "0x000000000000000000000000000000000000dead"
# Native ether shares the ledger with ERC-20 tokens under this sentinel.
NATIVE_TOKEN = "0x" + "e" * 40
# Mainnet WETH; used as the default wrapped-native token.
WETH_ADDRESS = "0xc02aaa39b223fe8d0a0e5c4f27ead9083c756cc2"

SUCCESS = "success"
FAILED = "failed"

_ADDRESS_RE = re.compile(r"^0x[0-9a-f]{40}$")
_WORD_RE = re.compile(r"^0x[0-9a-f]{64}$")
_HEX_RE = re.compile(r"^0x(?:[0-9a-f]{2})*$")


def is_address(value) -> bool:
    return isinstance(value, str) and _ADDRESS_RE.match(value) is not None


def to_address(value) -> str:
    """Normalise a hex string to the canonical address form, or raise ValueError."""
    if not isinstance(value, str):
        raise ValueError(f"address must be a hex string, got {type(value).__name__}")
    v = value.lower()
    if not _ADDRESS_RE.match(v):
        raise ValueError(f"not a 20-byte address: {value!r}")
    return v


def word_to_address(word: str) -> str:
    """Take the low 20 bytes of a 32-byte word."""
    return "0x" + word[-40:]


def address_to_word(address: str) -> str:
    return "0x" + "0" * 24 + address[2:]


def uint_to_word(value: int) -> str:
    if value < 0 or value > UINT256_MAX:
        raise OverflowError(f"value does not fit in 256 bits: {value}")
    return "0x%064x" % value


def int_to_word(value: int) -> str:
    """Two's complement encoding of a signed 256-bit integer."""
    if not -(1 << 255) <= value < (1 << 255):
        raise OverflowError(f"value does not fit in int256: {value}")
    return "0x%064x" % (value & UINT256_MAX)


def word_to_int(word_hex: str) -> int:
    v = int(word_hex, 16)
    return v - (1 << 256) if v >> 255 else v


def check_uint256(value: int) -> int:
    if value < 0 or value > UINT256_MAX:
        raise OverflowError(f"amount outside uint256 range: {value}")
    return value


@dataclass(frozen=True, slots=True)
class LogRecord:
    emitter: str
    topics: tuple[str, ...]
    data: str
    log_index: int

    @property
    def topic0(self) -> Optional[str]:
        return self.topics[0] if self.topics else None

    def data_words(self) -> list[str]:
        body = self.data[2:]
        return [body[i:i + 64] for i in range(0, len(body) - len(body) % 64, 64)]


@dataclass(frozen=True, slots=True)
class TraceRecord:
    sender: str
    to: str
    native_value: int
    call_depth: int = 0
    reverted: bool = False


@dataclass(frozen=True, slots=True)
class TransactionRecord:
    hash: str
    block_number: int
    tx_index: int
    sender: str
    to: Optional[str]
    status: str = SUCCESS
    gas_used: int = 21000
    effective_gas_price: int = 0
    logs: tuple[LogRecord, ...] = ()
    traces: tuple[TraceRecord, ...] = ()
    coinbase_transfer: int = 0

    @property
    def succeeded(self) -> bool:
        return self.status == SUCCESS

    @property
    def gas_fee(self) -> int:
        return self.gas_used * self.effective_gas_price


@dataclass(frozen=True, slots=True)
class Block:
    number: int
    producer: str
    transactions: tuple[TransactionRecord, ...] = field(default_factory=tuple)

    def tx(self, tx_hash: str) -> TransactionRecord:
        for t in self.transactions:
            if t.hash == tx_hash:
                return t
        raise KeyError(tx_hash)


def validate_block(b: Block) -> list[str]:
    """Return human-readable invariant violations; empty when the block is well formed."""
    problems: list[str] = []
    if not is_address(b.producer):
        problems.append(f"block {b.number}: producer is not an address")
    seen: set[int] = set()
    for pos, tx in enumerate(b.transactions):
        if tx.tx_index in seen:
            problems.append(f"block {b.number}: duplicate tx_index {tx.tx_index}")
            continue
        seen.add(tx.tx_index)
        if tx.tx_index != pos:
            problems.append(
                f"block {b.number}: tx_index {tx.tx_index} at position {pos} (gap or disorder)"
            )
        if tx.block_number != b.number:
            problems.append(f"block {b.number}: tx {tx.hash} claims block {tx.block_number}")
        if tx.status not in (SUCCESS, FAILED):
            problems.append(f"block {b.number}: tx {tx.hash} has unknown status {tx.status!r}")
        if tx.status == FAILED and tx.logs:
            problems.append(f"block {b.number}: failed tx {tx.hash} carries {len(tx.logs)} logs")
        last = -1
        for lg in tx.logs:
            if lg.log_index <= last:
                problems.append(f"block {b.number}: tx {tx.hash} log_index not increasing at {lg.log_index}")
                break
            last = lg.log_index
    return problems


# --- serialisation -------------------------------------------------------


def _quantity(v, name):
    if isinstance(v, bool):
        raise ValueError(f"{name}: boolean is not a quantity")
    if isinstance(v, int):
        out = v
    elif isinstance(v, str) and v.startswith("0x"):
        out = int(v, 16) if len(v) > 2 else 0
    elif isinstance(v, str) and v.isdigit():
        out = int(v)
    else:
        raise ValueError(f"{name}: expected integer quantity, got {v!r}")
    if out < 0:
        raise ValueError(f"{name}: negative quantity {out}")
    return check_uint256(out)


def _word(v, name):
    if not isinstance(v, str) or not _WORD_RE.match(v.lower()):
        raise ValueError(f"{name}: expected 32-byte hex word, got {v!r}")
    return v.lower()


def _req(d, key):
    try:
        return d[key]
    except KeyError:
        raise ValueError(f"missing field {key!r}") from None
    except TypeError:
        raise ValueError(f"expected object while reading {key!r}") from None


def _status(v):
    if v in (SUCCESS, 1, "0x1", True):
        return SUCCESS
    if v in (FAILED, 0, "0x0", False):
        return FAILED
    raise ValueError(f"status: expected 'success' or 'failed', got {v!r}")


def log_from_dict(d) -> LogRecord:
    topics = _req(d, "topics")
    if not isinstance(topics, list) or len(topics) > 4:
        raise ValueError("topics: expected list of at most 4 words")
    data = _req(d, "data")
    if not isinstance(data, str) or not _HEX_RE.match(data.lower()):
        raise ValueError(f"data: expected 0x-prefixed even-length hex, got {data!r}")
    return LogRecord(
        emitter=to_address(_req(d, "address")),
        topics=tuple(_word(t, "topics[]") for t in topics),
        data=data.lower(),
        log_index=_quantity(_req(d, "logIndex"), "logIndex"),
    )


def trace_from_dict(d) -> TraceRecord:
    reverted = d.get("reverted", False) if isinstance(d, dict) else None
    if not isinstance(reverted, bool):
        raise ValueError("reverted: expected boolean")
    return TraceRecord(
        sender=to_address(_req(d, "from")),
        to=to_address(_req(d, "to")),
        native_value=_quantity(_req(d, "value"), "value"),
        call_depth=_quantity(d.get("depth", 0), "depth"),
        reverted=reverted,
    )


def tx_from_dict(d) -> TransactionRecord:
    to = _req(d, "to")
    tx_hash = _word(_req(d, "hash"), "hash")
    logs = _req(d, "logs")
    traces = d.get("traces", [])
    if not isinstance(logs, list) or not isinstance(traces, list):
        raise ValueError("logs/traces must be lists")
    return TransactionRecord(
        hash=tx_hash,
        block_number=_quantity(_req(d, "blockNumber"), "blockNumber"),
        tx_index=_quantity(_req(d, "txIndex"), "txIndex"),
        sender=to_address(_req(d, "from")),
        to=None if to is None else to_address(to),
        status=_status(_req(d, "status")),
        gas_used=_quantity(_req(d, "gasUsed"), "gasUsed"),
        effective_gas_price=_quantity(_req(d, "effectiveGasPrice"), "effectiveGasPrice"),
        logs=tuple(log_from_dict(x) for x in logs),
        traces=tuple(trace_from_dict(x) for x in traces),
        coinbase_transfer=_quantity(d.get("coinbaseTransfer", 0), "coinbaseTransfer"),
    )


def block_from_dict(d) -> Block:
    txs = _req(d, "transactions")
    if not isinstance(txs, list):
        raise ValueError("transactions: expected list")
    return Block(
        number=_quantity(_req(d, "number"), "number"),
        producer=to_address(_req(d, "producer")),
        transactions=tuple(tx_from_dict(t) for t in txs),
    )


def _hexq(v: int) -> str:
    return hex(v)


def log_to_dict(lg: LogRecord) -> dict:
    return {"address": lg.emitter, "topics": list(lg.topics), "data": lg.data, "logIndex": lg.log_index}


def trace_to_dict(t: TraceRecord) -> dict:
    return {"from": t.sender, "to": t.to, "value": _hexq(t.native_value), "depth": t.call_depth,
            "reverted": t.reverted}


def tx_to_dict(tx: TransactionRecord) -> dict:
    return {
        "hash": tx.hash,
        "blockNumber": tx.block_number,
        "txIndex": tx.tx_index,
        "from": tx.sender,
        "to": tx.to,
        "status": tx.status,
        "gasUsed": tx.gas_used,
        "effectiveGasPrice": tx.effective_gas_price,
        "coinbaseTransfer": _hexq(tx.coinbase_transfer),
        "logs": [log_to_dict(lg) for lg in tx.logs],
        "traces": [trace_to_dict(t) for t in tx.traces],
    }


def block_to_dict(b: Block) -> dict:
    return {"number": b.number, "producer": b.producer,
            "transactions": [tx_to_dict(t) for t in b.transactions]}


def serialize_block(b: Block) -> str:
    return json.dumps(block_to_dict(b), separators=(",", ":"))


def parse_block(line: str, line_no: Optional[int] = None) -> Block:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", line=line_no) from None
    try:
        b = block_from_dict(raw)
    except (ValueError, OverflowError) as exc:
        number = raw.get("number") if isinstance(raw, dict) else None
        raise SchemaError(str(exc), line=line_no, block=number) from None
    problems = validate_block(b)
    if problems:
        raise SchemaError("; ".join(problems), line=line_no, block=b.number)
    return b


def parse_range(text: str) -> tuple[Optional[int], Optional[int]]:
    """Parse ``a:b`` (inclusive, either side optional) into a block interval."""
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"range must look like a:b, got {text!r}")
    return (int(lo) if lo.strip() else None, int(hi) if hi.strip() else None)


def load_blocks(path, block_range: Optional[tuple[Optional[int], Optional[int]]] = None
                ) -> Iterator[Block]:
    """Stream blocks from a line-delimited corpus, optionally restricted to ``[lo, hi]``.

    Raises SchemaError for malformed lines or out-of-order blocks, and RangeEmpty
    when the stream finishes without yielding a block.
    """
    lo, hi = block_range if block_range else (None, None)
    yielded = 0
    prev = None
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            b = parse_block(line, line_no)
            if prev is not None and b.number <= prev:
                raise SchemaError(f"block numbers not ascending ({prev} then {b.number})",
                                  line=line_no, block=b.number)
            prev = b.number
            if lo is not None and b.number < lo:
                continue
            if hi is not None and b.number > hi:
                break
            yielded += 1
            yield b
    if not yielded:
        raise RangeEmpty(f"no blocks in {path} for range {lo}:{hi}")


def write_blocks(path, blocks) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for b in blocks:
            fh.write(serialize_block(b))
            fh.write("\n")
