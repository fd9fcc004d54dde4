"""Block-by-block detection run: corpus in, findings and summary out."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Optional

from mevlens.chain import Block, load_blocks
from mevlens.detectors import (
    ArbitrageFinding,
    SandwichFinding,
    classify_running,
    detect_failed_frontrun,
    identify_arbitrage,
    identify_sandwiches,
    mark_toxic,
)
from mevlens.errors import MevLensError, PipelineError, ReplayUnavailable
from mevlens.flowgraph import DEFAULT_LIMITS, RouteLimits, exists_cycle, init_graph
from mevlens.profitability import DEFAULT_EPSILON
from mevlens.registry import SwapRegistry, decode_swaps, load_registry
from mevlens.replay.oracle import SimReplayOracle, read_sidecar
from mevlens.report import FindingRecord, summarize, summary_text, value_in_native

log = logging.getLogger(__name__)

FINDINGS_NAME = "findings.jsonl"
FAILED_NAME = "failed_frontruns.jsonl"
SUMMARY_NAME = "summary.txt"
TOTALS_NAME = "totals.json"


@dataclass
class DetectConfig:
    registry: SwapRegistry
    eps: Fraction = DEFAULT_EPSILON
    limits: RouteLimits = DEFAULT_LIMITS
    require_profit: bool = True


@dataclass
class BlockResult:
    block: int
    arbs: list[ArbitrageFinding] = field(default_factory=list)
    sands: list[SandwichFinding] = field(default_factory=list)
    failed_frontruns: list[str] = field(default_factory=list)
    records: list[FindingRecord] = field(default_factory=list)
    failed_records: list[dict] = field(default_factory=list)
    decode_warnings: int = 0


def process_block(block: Block, cfg: DetectConfig, oracle: Optional[SimReplayOracle] = None
                  ) -> BlockResult:
    """Run every detector on one block and build its finding records."""
    try:
        return _process(block, cfg, oracle)
    except MevLensError:
        raise
    except Exception as e:  # keep the block context on unexpected failures
        raise PipelineError(f"block {block.number}: {type(e).__name__}: {e}") from e


def _process(block: Block, cfg: DetectConfig, oracle) -> BlockResult:
    res = BlockResult(block.number)
    swaps_by_tx = {}
    decode_errs = {}
    for tx in block.transactions:
        errs: list = []
        swaps_by_tx[tx.hash] = decode_swaps(tx, cfg.registry, errs)
        if errs:
            decode_errs[tx.hash] = errs
            res.decode_warnings += len(errs)

    cyclic_non_arb = []
    for tx in block.transactions:
        if not tx.succeeded:
            continue
        f = identify_arbitrage(tx, cfg.registry, cfg.eps, block.producer, cfg.limits,
                               swaps=swaps_by_tx[tx.hash], require_profit=cfg.require_profit)
        if f is None:
            sw = swaps_by_tx[tx.hash]
            if len(sw) > 1 and exists_cycle(init_graph(sw)):
                cyclic_non_arb.append(tx)
            continue
        f.warnings = [f"decode: log {e.log_index}: {e}" for e in decode_errs.get(tx.hash, ())] + f.warnings
        if f.verdict.profitable:
            f.running_kind = classify_running(f, block, oracle, cfg.registry, cfg.eps, cfg.limits)
        res.arbs.append(f)

    res.sands = identify_sandwiches(block, cfg.registry, cfg.eps, cfg.limits, swaps_by_tx,
                                    require_profit=cfg.require_profit)

    if oracle is not None:
        candidates = [t for t in block.transactions if not t.succeeded] + cyclic_non_arb
        candidates.sort(key=lambda t: t.tx_index)
        for tx in candidates:
            try:
                if detect_failed_frontrun(tx, block, oracle, cfg.registry, cfg.eps, cfg.limits):
                    res.failed_frontruns.append(tx.hash)
            except ReplayUnavailable as e:
                log.debug("block %s tx %s: %s", block.number, tx.hash, e)

    mark_toxic(res.arbs, res.sands)
    res.records = build_records(block, res.arbs, res.sands, swaps_by_tx, cfg)
    by_hash = {t.hash: t for t in block.transactions}
    for h in res.failed_frontruns:
        tx = by_hash[h]
        res.failed_records.append({
            "id": f"ffr:{block.number}:{tx.tx_index}", "block": block.number, "tx": h,
            "builder": block.producer, "searcher": tx.to or tx.sender,
            "gas_used": tx.gas_used, "gas_price": str(tx.effective_gas_price),
            "fees_native": str(tx.gas_fee + tx.coinbase_transfer),
        })
    return res


def build_records(block: Block, arbs: Iterable[ArbitrageFinding], sands: Iterable[SandwichFinding],
                  swaps_by_tx: dict, cfg: DetectConfig) -> list[FindingRecord]:
    by_hash = {t.hash: t for t in block.transactions}
    out = []
    for f in arbs:
        tx = by_hash[f.tx]
        nv = value_in_native(f.verdict, init_graph(f.swaps), limits=cfg.limits)
        tags = [f.running_kind] + (["toxic"] if f.toxic else [])
        warnings = list(f.warnings)
        if nv.truncated:
            warnings.append("lower-bound: valuation route enumeration truncated")
        rec = FindingRecord(f"arb:{block.number}:{tx.tx_index}", "arbitrage", tags, block.number,
                            [tx.hash], nv.native, tx.gas_fee + tx.coinbase_transfer,
                            unpriced=nv.unpriced, warnings=warnings, builder=block.producer,
                            searcher=tx.to or tx.sender, gas_used=tx.gas_used,
                            gas_price=tx.effective_gas_price)
        f.profit_native = rec.profit_native
        out.append(rec)
    for s in sands:
        txs = [by_hash[h] for h in s.attack_txs]
        swaps = [sw for h in s.attack_txs for sw in swaps_by_tx[h]]
        nv = value_in_native(s.verdict, init_graph(swaps), limits=cfg.limits)
        tags = [s.kind] + (["toxic"] if s.toxic else [])
        warnings = list(s.warnings)
        if nv.truncated:
            warnings.append("lower-bound: valuation route enumeration truncated")
        gas = sum(t.gas_used for t in txs)
        fees = sum(t.gas_fee + t.coinbase_transfer for t in txs)
        out.append(FindingRecord(f"sw:{block.number}:{txs[0].tx_index}", "sandwich", tags,
                                 block.number, list(s.attack_txs), nv.native, fees,
                                 victims=list(s.victim_txs), unpriced=nv.unpriced, warnings=warnings,
                                 builder=block.producer, searcher=txs[0].to or txs[0].sender,
                                 gas_used=gas, gas_price=txs[0].effective_gas_price))
    out.sort(key=lambda r: (int(r.id.split(":")[2]), r.kind))
    return out


# --- orchestration ----------------------------------------------------------


@dataclass
class PipelineConfig:
    blocks: Path
    out: Path
    patterns: list[Path] = field(default_factory=list)
    eps: Fraction = DEFAULT_EPSILON
    limits: RouteLimits = DEFAULT_LIMITS
    replay: str = "none"
    sim_state: Optional[Path] = None
    workers: int = 1
    block_range: Optional[tuple] = None
    require_profit: bool = True


@dataclass
class PipelineResult:
    findings_path: Path
    failed_path: Path
    summary_path: Path
    totals_path: Path
    totals: dict


def _paired(blocks: Iterator[Block], sidecar) -> Iterator[tuple[Block, Optional[SimReplayOracle]]]:
    if sidecar is None:
        for b in blocks:
            yield b, None
        return
    pools, states = read_sidecar(sidecar)
    nxt = next(states, None)
    for b in blocks:
        while nxt is not None and nxt.number < b.number:
            nxt = next(states, None)
        if nxt is not None and nxt.number == b.number:
            yield b, SimReplayOracle(pools, {b.number: nxt})
        else:
            yield b, SimReplayOracle(pools, {})


def _work(args):
    block, cfg, oracle = args
    return process_block(block, cfg, oracle)


def iter_results(cfg: PipelineConfig, dcfg: DetectConfig) -> Iterator[BlockResult]:
    blocks = load_blocks(cfg.blocks, cfg.block_range)
    sidecar = None
    if cfg.replay == "sim":
        sidecar = cfg.sim_state or Path(cfg.blocks).with_name("simstate.jsonl")
        if not Path(sidecar).exists():
            raise FileNotFoundError(f"replay state file not found: {sidecar}")
    elif cfg.replay != "none":
        raise ValueError(f"unknown replay mode {cfg.replay!r}")
    jobs = ((b, dcfg, o) for b, o in _paired(blocks, sidecar))
    if cfg.workers <= 1:
        for job in jobs:
            yield _work(job)
        return
    with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
        # map keeps submission order, so output order matches the sequential run
        yield from ex.map(_work, jobs, chunksize=32)


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    registry = load_registry(cfg.patterns)
    dcfg = DetectConfig(registry, cfg.eps, cfg.limits, cfg.require_profit)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    fpath, ffpath = out / FINDINGS_NAME, out / FAILED_NAME
    records: list[FindingRecord] = []
    n_failed = n_blocks = n_warn = 0
    with fpath.open("w", encoding="utf-8") as fh, ffpath.open("w", encoding="utf-8") as ffh:
        for res in iter_results(cfg, dcfg):
            n_blocks += 1
            n_warn += res.decode_warnings
            for r in res.records:
                fh.write(json.dumps(r.to_json(), separators=(",", ":")) + "\n")
                records.append(r)
            for d in res.failed_records:
                ffh.write(json.dumps(d, separators=(",", ":")) + "\n")
                n_failed += 1
    totals = summarize(records, n_failed)
    totals["blocks"] = n_blocks
    totals["decode_warnings"] = n_warn
    spath, tpath = out / SUMMARY_NAME, out / TOTALS_NAME
    spath.write_text(f"blocks scanned             {n_blocks}\n" + summary_text(totals)
                     + f"decode warnings            {n_warn}\n", encoding="utf-8")
    tpath.write_text(json.dumps(totals, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("scanned %d blocks, %d findings", n_blocks, len(records))
    return PipelineResult(fpath, ffpath, spath, tpath, totals)


def read_findings(path) -> list[FindingRecord]:
    with open(path, encoding="utf-8") as fh:
        return [FindingRecord.from_json(json.loads(line)) for line in fh if line.strip()]
