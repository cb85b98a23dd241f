"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 leakage guard,
4 gateway exhaustion, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import yaml

from .action_model import REFERENCE_SCORE_PERCENTAGES, GlobalTargets, ScoreDistribution, calibrate_sigmoid, format_table
from .errors import (
    AuthFailure,
    ConfigError,
    EmptyDataset,
    FeedbenchError,
    GatewayExhausted,
    InfeasibleCalibration,
    MissingAnchor,
    SchemaViolation,
    TestLeak,
    UnknownCase,
    UnknownDataset,
)
from .evaluation.aggregate import AggregateReport, NormalizationAnchors, build_report, render_table
from .evaluation.scoring import score_case
from .gateway import Gateway, GatewayProfile
from .runner import ExperimentSpec, generate_log, run
from .session import write_sessions
from .synthetic import mock_gateway, synthetic_cases
from .tasks import load_cases, save_cases

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_LEAK, EXIT_GATEWAY = 0, 1, 2, 3, 4

log = logging.getLogger("feedbench")


def make_gateway(cfg: dict | None) -> Gateway:
    """``{"kind": "mock"}`` gives the scripted offline gateway; anything else is an HTTP profile."""
    cfg = dict(cfg or {"kind": "mock"})
    if cfg.get("kind", "http") == "mock":
        return mock_gateway(parallelism=int(cfg.get("parallelism", 4)),
                            embedding_dim=int(cfg.get("embedding_dim", 8)),
                            transcript_path=cfg.get("transcript_path"))
    return Gateway(GatewayProfile.from_dict(cfg))


def _load_gateway_arg(path: str | None) -> Gateway:
    if not path or path == "mock":
        return make_gateway({"kind": "mock"})
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read gateway profile {path}: {exc}") from exc
    return make_gateway(data)


def _cases_for(spec: ExperimentSpec, synthetic: bool):
    if synthetic or not spec.cases_path:
        if not synthetic:
            raise ConfigError("spec has no cases_path; pass --synthetic to use the built-in fixtures")
        return synthetic_cases()
    return load_cases(spec.cases_path)


def cmd_run(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    if args.output:
        spec.output_dir = args.output
    cases = _cases_for(spec, args.synthetic)
    gateway = make_gateway(spec.gateway)
    result = run(spec, cases, gateway)
    print(render_table([result.report]))
    for s in result.steps:
        print(f"step {s.step}: sessions={s.ingested_sessions} entries={s.entry_count} "
              f"score={s.report.overall_minmax:.4f}")
    t = result.manifest.timing
    mem = "-" if t["memory_time"] is None else f"{t['memory_time']:.4f}s"
    print(f"memory_time={mem} predict_time={t['predict_time']:.4f}s")
    print(f"report_hash={result.manifest.report_hash}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cases = synthetic_cases() if args.synthetic else load_cases(args.cases)
    spec = ExperimentSpec(partition=args.partition, datasets=tuple(args.datasets or ()), max_turns=args.max_turns,
                          split_seed=args.seed, action_seed=args.action_seed, cap=args.cap)
    gateway = _load_gateway_arg(args.gateway)
    flog = generate_log(spec, cases, gateway)
    n = write_sessions(args.out, flog.all())
    print(f"wrote {n} sessions to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    """Score precomputed responses (JSONL of {case_id, response}) into a report."""
    cases = {c.case_id: c for c in (synthetic_cases() if args.synthetic else load_cases(args.cases))}
    gateway = _load_gateway_arg(args.gateway)
    scores = {}
    with Path(args.responses).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            cid = str(rec["case_id"])
            if cid not in cases:
                raise UnknownCase(f"line {lineno}: unknown case {cid!r}")
            scores[cid] = score_case(cases[cid], rec["response"], gateway)
    test = [cases[cid] for cid in scores]
    if args.anchors and Path(args.anchors).exists():
        anchors = NormalizationAnchors.load(args.anchors)
    else:
        raw: dict[str, list[float]] = {}
        for c in test:
            raw.setdefault(c.dataset_id, []).append(scores[c.case_id].raw_value)
        anchors = NormalizationAnchors.from_scores(raw)
        if args.anchors:
            anchors.save(args.anchors)
    report = build_report(args.system, args.partition, test, scores, anchors)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_report(args) -> int:
    reports = []
    for p in args.reports:
        path = Path(p)
        if path.is_dir():
            path = path / "report.json"
        reports.append(AggregateReport.from_dict(json.loads(path.read_text(encoding="utf-8"))))
    print(render_table(reports, args.value))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    dist = ScoreDistribution.from_percentages(args.distribution)
    targets = GlobalTargets(args.feedback_rate, args.like_share)
    model = calibrate_sigmoid(dist, targets, args.k_like, args.s0_like, args.k_dislike, args.s0_dislike)
    print(f"targets: P(like)={targets.p_like_global:.4f} P(dislike)={targets.p_dislike_global:.4f}")
    print(format_table(model))
    return EXIT_OK


def cmd_synthetic(args) -> int:
    cases = synthetic_cases(args.per_dataset, args.seed)
    save_cases(args.out, cases)
    print(f"wrote {len(cases)} cases to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="feedbench", description="Continual-learning evaluation harness")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec")
    r.add_argument("--spec", required=True)
    r.add_argument("--output", help="override the spec's output_dir")
    r.add_argument("--synthetic", action="store_true", help="use the built-in synthetic cases")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("simulate", help="generate a feedback log for the training split")
    s.add_argument("--cases")
    s.add_argument("--synthetic", action="store_true")
    s.add_argument("--partition", default="custom")
    s.add_argument("--datasets", nargs="*")
    s.add_argument("--gateway", help="gateway profile file, or 'mock'")
    s.add_argument("--max-turns", type=int, default=3)
    s.add_argument("--seed", type=int, default=42, help="split seed")
    s.add_argument("--action-seed", type=int, default=0)
    s.add_argument("--cap", type=int, default=250)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="score precomputed responses")
    e.add_argument("--cases")
    e.add_argument("--synthetic", action="store_true")
    e.add_argument("--responses", required=True)
    e.add_argument("--anchors", help="anchor file; created from these scores if missing")
    e.add_argument("--gateway", help="gateway profile for judge metrics, or 'mock'")
    e.add_argument("--system", default="system")
    e.add_argument("--partition", default="custom")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    rep = sub.add_parser("report", help="tabulate saved reports")
    rep.add_argument("reports", nargs="+", help="report.json files or run directories")
    rep.add_argument("--value", default="overall_minmax", choices=["overall_minmax", "overall_z"])
    rep.set_defaults(func=cmd_report)

    c = sub.add_parser("calibrate", help="calibrate the sigmoid action model")
    c.add_argument("--distribution", type=float, nargs=10, default=list(REFERENCE_SCORE_PERCENTAGES),
                   metavar="PCT", help="score distribution in percent for S=1..10")
    c.add_argument("--feedback-rate", type=float, default=0.065)
    c.add_argument("--like-share", type=float, default=0.86)
    c.add_argument("--k-like", type=float, default=1.5)
    c.add_argument("--s0-like", type=float, default=7.5)
    c.add_argument("--k-dislike", type=float, default=1.5)
    c.add_argument("--s0-dislike", type=float, default=4.5)
    c.set_defaults(func=cmd_calibrate)

    syn = sub.add_parser("synthetic", help="write the synthetic case fixtures")
    syn.add_argument("--out", required=True)
    syn.add_argument("--per-dataset", type=int, default=10)
    syn.add_argument("--seed", type=int, default=0)
    syn.set_defaults(func=cmd_synthetic)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TestLeak as exc:
        print(f"leakage guard: {exc}", file=sys.stderr)
        return EXIT_LEAK
    except (GatewayExhausted, AuthFailure) as exc:
        print(f"gateway: {exc}", file=sys.stderr)
        return EXIT_GATEWAY
    except (ConfigError, SchemaViolation, EmptyDataset, UnknownCase, UnknownDataset, MissingAnchor,
            InfeasibleCalibration, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FeedbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
