"""Command-line front end: ``bitprob run prog.hb --bits 8 --format json``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

from .bdd import node_count
from .core import OverflowDetected, ZeroEvidenceError
from .distributions import PIECE_KINDS
from .lang import Config, LangError, Result, evaluate, parse

EXIT_OK, EXIT_PROGRAM, EXIT_ZERO_EVIDENCE = 0, 1, 2


def _setting(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep or not name.isidentifier():
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{value!r} is not a number") from None
    return name, int(v) if v.is_integer() else v


class _Parser(argparse.ArgumentParser):
    # status 2 is reserved for zero evidence
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PROGRAM, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bitprob", description="Exact inference for bit-blasted hybrid programs.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="evaluate a .hb program and print its query")
    run.add_argument("file")
    run.add_argument("--bits", type=int, default=8)
    run.add_argument("--pieces", type=int, default=16)
    run.add_argument("--piece-kind", choices=PIECE_KINDS, default="exponential")
    run.add_argument("--format", choices=("json", "csv"), default="json")
    run.add_argument("--out", help="write the result here instead of stdout")
    run.add_argument("--stats", action="store_true", help="include flip and node counts, evidence weight and time")
    run.add_argument("--set", type=_setting, action="append", default=[], metavar="NAME=VALUE",
                     help="override a const declaration")
    return ap


def result_record(res: Result, cfg: Config, stats: dict | None = None) -> dict:
    rec: dict = {"query": res.kind,
                 "config": {"bits": cfg.bits, "pieces": cfg.pieces, "piece_kind": cfg.piece_kind}}
    if res.kind == "pr":
        rec["posterior"] = [{"value": v, "prob": p} for v, p in res.posterior]
    elif res.kind == "expectation":
        rec["expectation"] = res.expectation
    else:
        rec["variance"] = res.variance
    if stats is not None:
        rec["stats"] = stats
    return rec


def collect_stats(res: Result, millis: float) -> dict:
    ctx = res.ctx
    return {"flips": ctx.flip_count,
            "nodes_formula": node_count(ctx.store, res.target.bits),
            "nodes_evidence": node_count(ctx.store, [ctx.evidence]),
            "evidence_wmc": ctx.evidence_wmc(),
            "millis": round(millis, 3)}


def render(rec: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rec, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if rec["query"] == "pr":
        w.writerow(["value", "prob"])
        for row in rec["posterior"]:
            w.writerow([repr(row["value"]), repr(row["prob"])])
    else:
        w.writerow([rec["query"]])
        w.writerow([repr(rec[rec["query"]])])
    return buf.getvalue()


def run_file(args: argparse.Namespace) -> int:
    cfg = Config(bits=args.bits, pieces=args.pieces, piece_kind=args.piece_kind,
                 overrides=dict(args.set))
    try:
        with open(args.file, encoding="utf-8") as fh:
            src = fh.read()
    except OSError as err:
        print(f"bitprob: cannot read {args.file}: {err.strerror}", file=sys.stderr)
        return EXIT_PROGRAM
    start = time.perf_counter()
    try:
        res = evaluate(parse(src), cfg)
    except ZeroEvidenceError as err:
        print(f"bitprob: zero evidence: wmc(evidence) = {err.evidence_wmc}", file=sys.stderr)
        return EXIT_ZERO_EVIDENCE
    except LangError as err:
        print(f"{args.file}:{err}", file=sys.stderr)
        return EXIT_PROGRAM
    except (OverflowDetected, ValueError, ArithmeticError) as err:
        print(f"bitprob: {err}", file=sys.stderr)
        return EXIT_PROGRAM
    millis = (time.perf_counter() - start) * 1000.0
    stats = collect_stats(res, millis) if args.stats else None
    text = render(result_record(res, cfg, stats), args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return run_file(args)


if __name__ == "__main__":
    sys.exit(main())
