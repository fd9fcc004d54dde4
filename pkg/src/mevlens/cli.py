"""Command line entry point: ``mevlens detect | generate | report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from mevlens.chain import parse_range
from mevlens.errors import MevLensError
from mevlens.flowgraph import RouteLimits
from mevlens.profitability import parse_epsilon

log = logging.getLogger("mevlens")


def _setup_logging():
    level = os.environ.get("MEVLENS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _positive(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _epsilon(text):
    try:
        return parse_epsilon(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mevlens", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="scan a block corpus for arbitrage and sandwich findings")
    d.add_argument("--blocks", required=True, type=Path, help="line-delimited block corpus")
    d.add_argument("--patterns", action="append", type=Path, default=[],
                   help="extra swap pattern file (repeatable); bundled patterns always load")
    d.add_argument("--epsilon", type=_epsilon, default="1/100", help="loss-ratio threshold (default 1/100)")
    d.add_argument("--max-hops", type=_positive, default=6)
    d.add_argument("--max-routes", type=_positive, default=10_000)
    d.add_argument("--replay", choices=("none", "sim"), default="none")
    d.add_argument("--sim-state", type=Path, help="simulator state file (default: next to --blocks)")
    d.add_argument("--range", dest="block_range", help="inclusive block interval a:b")
    d.add_argument("--workers", type=_positive, default=1)
    d.add_argument("--out", required=True, type=Path)

    g = sub.add_parser("generate", help="write a labelled synthetic corpus")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--specs", type=Path, help="injection specs (JSON array or JSON lines)")
    src.add_argument("--standard", type=_positive, metavar="SCALE",
                     help="built-in mix of every injection kind, 84 injections per unit")
    g.add_argument("--decoys", type=int, default=2000, help="unprofitable-cycle decoys with --standard")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--blocks", type=_positive, required=True)
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--no-self-check", action="store_true")

    r = sub.add_parser("report", help="expected profit, collusion scan and figures")
    r.add_argument("--findings", type=Path, required=True)
    r.add_argument("--ep", metavar="SR[:FG]", help="success rate (and optional fixed gas units)")
    r.add_argument("--collusion", action="store_true")
    r.add_argument("--thresholds", default="0.5/0.5", metavar="A/B",
                   help="collusion share thresholds for builder/searcher (default 0.5/0.5)")
    r.add_argument("--out", type=Path, help="output directory (default: next to --findings)")
    r.add_argument("--no-plots", action="store_true")
    return p


def cmd_detect(a) -> int:
    from mevlens.pipeline import PipelineConfig, run_pipeline
    for p in a.patterns:
        if not p.exists():
            print(f"error: pattern file not found: {p}", file=sys.stderr)
            return 1
    cfg = PipelineConfig(
        blocks=a.blocks, out=a.out, patterns=a.patterns, eps=a.epsilon,
        limits=RouteLimits(a.max_hops, a.max_routes), replay=a.replay, sim_state=a.sim_state,
        workers=a.workers, block_range=parse_range(a.block_range) if a.block_range else None,
    )
    res = run_pipeline(cfg)
    sys.stdout.write(res.summary_path.read_text(encoding="utf-8"))
    return 0


def cmd_generate(a) -> int:
    from mevlens.replay.generator import generate_corpus, parse_specs, standard_specs
    specs = parse_specs(a.specs) if a.specs else standard_specs(a.standard, a.decoys)
    res = generate_corpus(specs, a.seed, a.blocks, a.out, self_check=not a.no_self_check)
    print(json.dumps(res.manifest, indent=2, sort_keys=True))
    return 0


def cmd_report(a) -> int:
    from mevlens import report
    from mevlens.pipeline import read_findings
    records = read_findings(a.findings)
    out = a.out or a.findings.parent
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"findings                   {len(records)}"]
    ep_values = None
    sr = None
    if a.ep:
        sr, fg = report.parse_ep(a.ep)
        rows = report.ep_rows(records, sr, fg)
        with (out / "ep.jsonl").open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, separators=(",", ":")) + "\n")
        from fractions import Fraction
        ep_values = [Fraction(r["ep"]) for r in rows]
        positive = sum(1 for v in ep_values if v > 0)
        lines.append(f"expected profit > 0        {positive} of {len(rows)} at sr={sr}")
    if a.collusion:
        bt, st = report.parse_thresholds(a.thresholds)
        pairs = report.collusion_scan(records, bt, st)
        with (out / "collusion.jsonl").open("w", encoding="utf-8") as fh:
            for c in pairs:
                fh.write(json.dumps({
                    "builder": c.builder, "searcher": c.searcher, "tx_count": c.tx_count,
                    "share_builder": f"{c.share_builder.numerator}/{c.share_builder.denominator}",
                    "share_searcher": f"{c.share_searcher.numerator}/{c.share_searcher.denominator}",
                }, separators=(",", ":")) + "\n")
        lines.append(f"colluding pairs            {len(pairs)}")
    from mevlens.pipeline import FAILED_NAME
    failed = a.findings.parent / FAILED_NAME
    n_failed = 0
    if failed.exists():
        with failed.open(encoding="utf-8") as fh:
            n_failed = sum(1 for line in fh if line.strip())
    s = report.summarize(records, n_failed)
    text = "\n".join(lines) + "\n" + report.summary_text(s)
    (out / "report.txt").write_text(text, encoding="utf-8")
    if not a.no_plots:
        from mevlens import plotting
        figs = [plotting.counts_by_kind(records, out / "counts_by_kind.png"),
                plotting.profit_by_kind(records, out / "profit_by_kind.png")]
        if ep_values is not None:
            figs.append(plotting.ep_histogram(ep_values, out / "ep_hist.png", sr))
        if a.collusion:
            figs.append(plotting.builder_shares(records, out / "builder_shares.png"))
        text += "".join(f"figure                     {f}\n" for f in figs)
    sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    handler = {"detect": cmd_detect, "generate": cmd_generate, "report": cmd_report}[args.command]
    try:
        return handler(args)
    except (OSError, MevLensError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
