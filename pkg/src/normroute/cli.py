"""Command-line front end.

Exit codes: 0 success, 1 diagnostics or validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

from normroute.dsl import lint, parse_with_diagnostics
from normroute.engine import ENGINE_SCHEMA, explain
from normroute.errors import LookupFailure, NormRouteError, ReloadRejected
from normroute.matching import MatchQuery, select_scored
from normroute.metrics import Dimension, MetricParams
from normroute.profiles import PILOT_SIZES, GeneratorConfig, dumps_community, generate_synthetic, load_community
from normroute.sim import histogram, load_scenario, question_traces, run_scenario


def check_norms(text, filename: str) -> list[str]:
    norms, diags = parse_with_diagnostics(text)
    if not diags:
        diags = lint(norms, ENGINE_SCHEMA)
    return [d.format(filename) for d in diags]


def cmd_check(args) -> int:
    with open(args.norms, "rb") as fh:
        data = fh.read()
    lines = check_norms(data, args.norms)
    for line in lines:
        print(line)
    return 1 if lines else 0


def match_csv(query: MatchQuery, community, params: MetricParams | None = None) -> str:
    ranked, selected = select_scored(query, community, params)
    chosen = {m.candidate for m in selected}
    dims = [d for d in Dimension if d in query.requirements]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["candidate_id", *[d.value for d in dims], "aggregate", "tier", "selected"])
    for m in ranked:
        w.writerow([m.candidate, *[repr(m.scores[d]) for d in dims], repr(m.aggregate), m.tier,
                    int(m.candidate in chosen)])
    return buf.getvalue()


def cmd_match(args) -> int:
    community = load_community(args.community)
    with open(args.query, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if args.k is not None:
        raw["k"] = args.k
    query = MatchQuery.from_dict(raw)
    sys.stdout.write(match_csv(query, community, MetricParams(decay_length_km=args.decay_km)))
    return 0


def cmd_simulate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ReloadRejected as exc:
        for d in exc.diagnostics:
            print(d.format("norms"), file=sys.stderr)
        return 1
    try:
        report = run_scenario(scenario, seed=args.seed)
    except ReloadRejected as exc:
        for d in exc.diagnostics:
            print(d.format("norms"), file=sys.stderr)
        return 1
    text = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.histogram_csv:
        with open(args.histogram_csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.histogram.to_csv())
    return 0


def _load_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def cmd_report(args) -> int:
    rep = _load_report(args.report)
    summary = rep["summary"]
    print(f"seed: {rep['seed']}")
    print(f"questions: {summary['questions']}")
    print(f"selected profiles: {summary['selected_profiles']}")
    mean = summary["mean_aggregate"]
    print(f"mean matching score: {'n/a' if mean is None else f'{mean:.4f}'}")
    ks = sorted({q["k"] for q in rep["questions"]})
    print(f"dispatch sizes: {ks}")
    if rep["k_trajectory"]:
        print(f"suggested fan-out (latest): {rep['k_trajectory'][-1]}")
    h = histogram([m["aggregate"] for q in rep["questions"] for m in q["scores"]],
                  rep["histogram"]["bins"])
    if args.histogram:
        print("matching score histogram (bar length ~ 10*log10(count+1)):")
        print(h.render())
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(h.to_csv())
    return 0


def cmd_explain(args) -> int:
    rep = _load_report(args.report)
    try:
        traces = question_traces(rep, args.question)
        print(explain(traces, args.norm))
    except KeyError as exc:
        msg = str(exc) if isinstance(exc, LookupFailure) else f"unknown question {args.question!r}"
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


def cmd_generate(args) -> int:
    size = PILOT_SIZES[args.preset] if args.preset else args.size
    if size is None:
        print("error: give --size or --preset", file=sys.stderr)
        return 2
    cfg = GeneratorConfig(size, edge_probability=args.edge_probability,
                          community_id=args.preset or "synthetic")
    text = dumps_community(generate_synthetic(cfg, args.seed))
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="normroute", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="parse and lint a norm file")
    p.add_argument("norms")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("match", help="rank a community against a query; prints CSV")
    p.add_argument("community")
    p.add_argument("query")
    p.add_argument("--k", type=int)
    p.add_argument("--decay-km", type=float, default=50.0)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("simulate", help="replay a scenario and write a JSON report")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--histogram-csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="summarise a simulation report")
    p.add_argument("report")
    p.add_argument("--histogram", action="store_true")
    p.add_argument("--csv", help="write the histogram as CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("explain", help="explain a norm's verdict for one question")
    p.add_argument("report")
    p.add_argument("--question", required=True)
    p.add_argument("--norm", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("generate", help="write a synthetic community file")
    p.add_argument("--size", type=int)
    p.add_argument("--preset", choices=sorted(PILOT_SIZES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--edge-probability", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (OSError, NormRouteError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
