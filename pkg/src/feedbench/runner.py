"""Experiment protocols: off-policy, stepwise off-policy and on-policy.

All three share the same phases. The declarative corpus is ingested once
per distinct corpus, training feedback sessions are ingested (all at once,
batch by batch from a log, or batch by batch from live simulation), and the
full test set is answered and scored after each ingestion phase. Memory is
frozen while the test set is evaluated; entry counts are compared before and
after every evaluation pass.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Iterator, Literal, Sequence

import yaml

from .action_model import ActionPolicy
from .errors import ConfigError, FeedbenchError, GatewayExhausted, MissingAnchor, SystemFailure
from .evaluation.aggregate import Anchor, AggregateReport, NormalizationAnchors, build_report
from .evaluation.metrics import MetricScore
from .evaluation.scoring import metric_floor, score_case
from .memory.systems import DEFAULT_BUDGET, MemorySystem, VanillaSystem, make_system
from .presets import PARTITION_MEMBERS
from .session import FeedbackSession, write_sessions
from .tasks import FeedbackLog, Partition, PartitionSplit, TaskCase, build_partition, check_no_leak, training_batches
from .user_simulator import SimulatorConfig, UserSimulator

if TYPE_CHECKING:
    from .gateway import Gateway

logger = logging.getLogger(__name__)

Protocol = Literal["off_policy", "on_policy", "stepwise_off_policy"]
PROTOCOLS = ("off_policy", "on_policy", "stepwise_off_policy")


class InvariantViolation(FeedbenchError, AssertionError):
    """Memory changed while the test set was being evaluated."""


@dataclass
class ExperimentSpec:
    protocol: Protocol = "off_policy"
    partition: str = "custom"
    system: str = "bm25-s"
    datasets: tuple[str, ...] = ()  # empty: use the preset named by ``partition``
    batch_size: int = 100
    max_turns: int = 3
    split_seed: int = 42
    shuffle_seed: int = 0
    action_seed: int = 0
    cap: int = 250
    test_ratio: float = 0.2
    top_k: int = 5
    context_token_budget: int = DEFAULT_BUDGET
    steps: int | None = None  # on-policy step limit; None runs until the pool is exhausted
    eval_subsample: int | None = None  # interim on-policy evaluation on a test subsample (not the reference protocol)
    parallelism: int = 1
    cases_path: str | None = None
    log_path: str | None = None
    anchors_path: str | None = None
    output_dir: str | None = None
    gateway: dict = field(default_factory=dict)

    def __post_init__(self):
        self.datasets = tuple(self.datasets)
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; choose from {PROTOCOLS}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_turns < 1:
            raise ConfigError("max_turns must be >= 1")
        if self.steps is not None and self.steps < 1:
            raise ConfigError("steps must be >= 1 when given")
        if self.eval_subsample is not None and self.protocol != "on_policy":
            raise ConfigError("eval_subsample only applies to the on_policy protocol")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")

    def dataset_ids(self, cases: Sequence[TaskCase] = ()) -> tuple[str, ...]:
        if self.datasets:
            return self.datasets
        if self.partition in PARTITION_MEMBERS:
            return PARTITION_MEMBERS[self.partition]
        seen: dict[str, None] = {}
        for c in cases:
            seen.setdefault(c.dataset_id)
        if not seen:
            raise ConfigError(f"partition {self.partition!r} is not a preset and no datasets were listed")
        return tuple(seen)

    def partition_spec(self, cases: Sequence[TaskCase] = ()) -> Partition:
        return Partition(self.partition, self.dataset_ids(cases), self.cap, self.test_ratio, self.split_seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["datasets"] = list(self.datasets)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown experiment spec field(s): {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentSpec":
        """Read a YAML or JSON spec file; relative paths resolve against the file's directory."""
        p = Path(path)
        try:
            data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read spec {p}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"spec {p} must be a mapping")
        for key in ("cases_path", "log_path", "anchors_path", "output_dir"):
            if data.get(key) and not Path(data[key]).is_absolute():
                data[key] = str((p.parent / data[key]).resolve())
        return cls.from_dict(data)


@dataclass(frozen=True)
class TimingRecord:
    case_id: str
    memory_time: float | None = None
    predict_time: float | None = None

    def __post_init__(self):
        for v in (self.memory_time, self.predict_time):
            if v is not None and v < 0:
                raise ValueError("timings must be non-negative")


@dataclass
class Timer:
    """Accumulates monotonic wall-clock seconds per label."""

    totals: dict[str, float] = field(default_factory=dict)

    @contextmanager
    def section(self, label: str) -> Iterator[None]:
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.totals[label] = self.totals.get(label, 0.0) + (time.perf_counter() - t0)


def time_section(label: str, thunk: Callable[[], Any]) -> tuple[Any, dict[str, float]]:
    t0 = time.perf_counter()
    out = thunk()
    return out, {label: time.perf_counter() - t0}


def timing_summary(records: Sequence[TimingRecord]) -> dict[str, Any]:
    def mean(vals):
        vals = [v for v in vals if v is not None]
        return math.fsum(vals) / len(vals) if vals else None

    return {
        "cases": len(records),
        "memory_time": mean(r.memory_time for r in records),
        "predict_time": mean(r.predict_time for r in records),
        "note": "wall-clock per case; averages under parallel execution are indicative",
    }


@dataclass
class StepResult:
    step: int
    ingested_sessions: int
    entry_count: int
    report: AggregateReport
    scores: dict[str, MetricScore]
    subsampled: bool = False

    def summary(self) -> dict:
        return {
            "step": self.step,
            "ingested_sessions": self.ingested_sessions,
            "entry_count": self.entry_count,
            "overall_minmax": self.report.overall_minmax,
            "failed_cases": list(self.report.failed_cases),
            "report_hash": self.report.digest(),
            "subsampled": self.subsampled,
        }


@dataclass
class RunManifest:
    spec: dict
    partition_hash: str
    anchor_hash: str
    log_hash: str | None
    steps: list[dict]
    timing: dict
    report_hash: str

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class RunResult:
    report: AggregateReport
    manifest: RunManifest
    steps: list[StepResult]
    timings: list[TimingRecord]
    split: PartitionSplit
    log: FeedbackLog
    anchors: NormalizationAnchors


def log_digest(sessions: Sequence[FeedbackSession]) -> str:
    h = hashlib.sha256()
    for s in sessions:
        h.update(s.to_json().encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


class Experiment:
    """Shared state of one run: partition, memory system, anchors and timing ledger."""

    def __init__(self, spec: ExperimentSpec, cases: Sequence[TaskCase], gateway: "Gateway",
                 system: MemorySystem | None = None, anchors: NormalizationAnchors | None = None,
                 policy: ActionPolicy | None = None):
        self.spec = spec
        self.gateway = gateway
        self.split = build_partition(cases, spec.partition_spec(cases))
        self.system = system or make_system(spec.system, gateway, spec.top_k, spec.context_token_budget)
        self.anchors = anchors
        if self.anchors is None and spec.anchors_path and Path(spec.anchors_path).exists():
            self.anchors = NormalizationAnchors.load(spec.anchors_path)
        self.fixed_anchors = self.anchors is not None
        self.policy = policy or ActionPolicy.default()
        self.memory_time: dict[str, float] = {}
        self.predict_time: dict[str, float] = {}
        self._corpora: set[str] = set()
        self.out = Path(spec.output_dir) if spec.output_dir else None
        if self.out:
            self.out.mkdir(parents=True, exist_ok=True)

    @property
    def tracks_memory(self) -> bool:
        return self.system.uses_memory

    def _charge(self, case_ids: Sequence[str], seconds: float) -> None:
        if not self.tracks_memory or not case_ids:
            return
        share = seconds / len(case_ids)
        for cid in case_ids:
            self.memory_time[cid] = self.memory_time.get(cid, 0.0) + share

    def ingest_corpora(self, cases: Sequence[TaskCase]) -> int:
        """Ingest each distinct declarative corpus once; time is shared by the cases using it."""
        users: dict[str, list[TaskCase]] = {}
        for c in cases:
            if c.corpus_key is not None:
                users.setdefault(c.corpus_key, []).append(c)
        added = 0
        for key, members in users.items():
            if key in self._corpora:
                continue
            t0 = time.perf_counter()
            added += self.system.ingest_corpus(members[0].context, key)
            self._charge([c.case_id for c in members], time.perf_counter() - t0)
            self._corpora.add(key)
        return added

    def ingest_feedback(self, sessions: Sequence[FeedbackSession]) -> int:
        usable = [s for s in sessions if s.ok]
        if len(usable) < len(sessions):
            logger.info("skipping %d errored session(s) at ingestion", len(sessions) - len(usable))
        if not usable:
            return 0
        t0 = time.perf_counter()
        self.system.ingest_sessions(usable)
        self._charge(sorted({s.case_id for s in usable}), time.perf_counter() - t0)
        return len(usable)

    def _predict(self, case: TaskCase) -> tuple[MetricScore | None, float, Exception | None]:
        t0 = time.perf_counter()
        try:
            response = self.system.answer(case.query, self.gateway, case.context)
        except Exception as exc:  # failure isolation: one case never aborts the run
            return None, time.perf_counter() - t0, exc
        elapsed = time.perf_counter() - t0
        try:
            return score_case(case, response, self.gateway), elapsed, None
        except Exception as exc:
            return None, elapsed, exc

    def evaluate(self, test: Sequence[TaskCase]) -> dict[str, MetricScore]:
        before = self.system.entry_count()
        if self.spec.parallelism > 1:
            with ThreadPoolExecutor(max_workers=self.spec.parallelism) as pool:
                results = list(pool.map(self._predict, test))
        else:
            results = [self._predict(c) for c in test]
        after = self.system.entry_count()
        if before != after:
            raise InvariantViolation(f"memory changed during evaluation: {before} -> {after} entries")

        failures = [(c, exc) for c, (_, _, exc) in zip(test, results) if exc is not None]
        if test and len(failures) == len(test) and all(isinstance(e, GatewayExhausted) for _, e in failures):
            raise GatewayExhausted(f"all {len(test)} test cases failed on the gateway: {failures[0][1]}")

        scores: dict[str, MetricScore] = {}
        for case, (ms, elapsed, exc) in zip(test, results):
            self.predict_time[case.case_id] = elapsed
            if exc is not None:
                logger.warning("case %s failed: %s", case.case_id, exc)
                continue
            scores[case.case_id] = ms
        if not self.fixed_anchors:
            raw: dict[str, list[float]] = {}
            for c in test:
                if c.case_id in scores:
                    raw.setdefault(c.dataset_id, []).append(scores[c.case_id].raw_value)
            derived = NormalizationAnchors.from_scores(raw)
            if self.anchors is None:
                self.anchors = derived
            else:  # a dataset is anchored by the first evaluation that covers it
                for d, a in derived.anchors.items():
                    self.anchors.anchors.setdefault(d, a)
        for case, (_, _, exc) in zip(test, results):
            if exc is None:
                continue
            floor = self._failure_value(case)
            scores[case.case_id] = MetricScore(case.case_id, case.metric, floor, _direction(case), failed=True)
        return {c.case_id: scores[c.case_id] for c in test}

    def _failure_value(self, case: TaskCase) -> float:
        anchors = self.anchors
        if anchors is not None and case.dataset_id in anchors:
            return anchors[case.dataset_id].min
        floor = metric_floor(case)
        if anchors is not None and not self.fixed_anchors:
            anchors.anchors[case.dataset_id] = Anchor(floor, floor)
        return floor

    def step(self, step: int, ingested: int, test: Sequence[TaskCase] | None = None,
             subsampled: bool = False) -> StepResult:
        test = list(self.split.test if test is None else test)
        scores = self.evaluate(test)
        assert self.anchors is not None
        report = build_report(self.system.name, self.spec.partition, test, scores, self.anchors)
        return StepResult(step, ingested, self.system.entry_count(), report, scores, subsampled)

    def timings(self) -> list[TimingRecord]:
        ids = [c.case_id for c in self.split.train + self.split.test]
        out = []
        for cid in ids:
            mem = self.memory_time.get(cid) if self.tracks_memory else None
            if self.tracks_memory and mem is None and cid in self.predict_time:
                mem = 0.0
            if mem is None and cid not in self.predict_time:
                continue
            out.append(TimingRecord(cid, mem, self.predict_time.get(cid)))
        return out

    def finish(self, steps: list[StepResult], log: FeedbackLog, log_sessions: Sequence[FeedbackSession]) -> RunResult:
        assert self.anchors is not None
        final = steps[-1]
        timings = self.timings()
        anchor_hash = self.anchors.digest()
        manifest = RunManifest(
            spec=self.spec.to_dict(),
            partition_hash=self.split.manifest_hash,
            anchor_hash=anchor_hash,
            log_hash=log_digest(log_sessions) if log_sessions else None,
            steps=[s.summary() for s in steps],
            timing=timing_summary(timings),
            report_hash=final.report.digest(),
        )
        if self.spec.anchors_path and not Path(self.spec.anchors_path).exists():
            self.anchors.save(self.spec.anchors_path)
        if self.out:
            self._persist(steps, timings, manifest)
        return RunResult(final.report, manifest, steps, timings, self.split, log, self.anchors)

    def _persist(self, steps: list[StepResult], timings: list[TimingRecord], manifest: RunManifest) -> None:
        out = self.out
        assert out is not None and self.anchors is not None
        (out / "partition.json").write_text(json.dumps(self.split.manifest, indent=2, sort_keys=True) + "\n",
                                            encoding="utf-8")
        self.anchors.save(out / "anchors.json")
        with (out / "scores.jsonl").open("w", encoding="utf-8") as fh:
            for s in steps:
                for ms in s.scores.values():
                    fh.write(json.dumps({"step": s.step, **ms.to_dict()}) + "\n")
        (out / "report.json").write_text(json.dumps(steps[-1].report.to_dict(), indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
        with (out / "reports.jsonl").open("w", encoding="utf-8") as fh:
            for s in steps:
                fh.write(json.dumps({"step": s.step, **s.report.to_dict()}, sort_keys=True) + "\n")
        with (out / "timings.jsonl").open("w", encoding="utf-8") as fh:
            for t in timings:
                fh.write(json.dumps(asdict(t)) + "\n")
        manifest.save(out / "manifest.json")


def _direction(case: TaskCase) -> str:
    from .evaluation.metrics import METRICS

    return METRICS[case.metric].direction


def _ordered_log(log: FeedbackLog, train: Sequence[TaskCase], batch_size: int, seed: int) -> list[list[FeedbackSession]]:
    """Batches of logged sessions in shuffled training order; the flattened order does not depend on batch size."""
    covered = [c for c in train if c.case_id in log.sessions]
    return [log.for_cases(c.case_id for c in batch) for batch in training_batches(covered, batch_size, seed)]


def generate_log(spec: ExperimentSpec, cases: Sequence[TaskCase], gateway: "Gateway",
                 policy: ActionPolicy | None = None, system: MemorySystem | None = None) -> FeedbackLog:
    """Pre-generate a feedback log for the training split with the memoryless backbone."""
    split = build_partition(cases, spec.partition_spec(cases))
    sim = UserSimulator(gateway, policy or ActionPolicy.default(), SimulatorConfig(max_turns=spec.max_turns))
    backbone = system or VanillaSystem(spec.context_token_budget)
    log = FeedbackLog(provenance="generated")
    for case in split.train:
        try:
            log.add(sim.simulate(case, backbone, spec.action_seed))
        except SystemFailure as exc:
            logger.warning("log generation: case %s skipped: %s", case.case_id, exc)
    return log


def _prepare_log(exp: Experiment, log: FeedbackLog | None, cases: Sequence[TaskCase]) -> FeedbackLog:
    from .tasks import import_feedback_log

    if log is None and exp.spec.log_path and Path(exp.spec.log_path).exists():
        log = import_feedback_log(exp.spec.log_path, exp.split.train, exp.split.test)
    if log is None:
        log = generate_log(exp.spec, cases, exp.gateway, exp.policy)
        if exp.out:
            write_sessions(exp.out / "feedback_log.jsonl", log.all())
    check_no_leak(log.case_ids(), exp.split.test)
    return log


def run_off_policy(spec: ExperimentSpec, cases: Sequence[TaskCase], gateway: "Gateway",
                   log: FeedbackLog | None = None, system: MemorySystem | None = None,
                   anchors: NormalizationAnchors | None = None) -> RunResult:
    exp = Experiment(spec, cases, gateway, system, anchors)
    log = _prepare_log(exp, log, cases)
    exp.ingest_corpora(exp.split.train + exp.split.test)
    sessions = [s for batch in _ordered_log(log, exp.split.train, max(1, len(exp.split.train)), spec.shuffle_seed)
                for s in batch]
    ingested = exp.ingest_feedback(sessions)
    return exp.finish([exp.step(1, ingested)], log, sessions)


def run_stepwise_off_policy(spec: ExperimentSpec, cases: Sequence[TaskCase], gateway: "Gateway",
                            log: FeedbackLog | None = None, system: MemorySystem | None = None,
                            anchors: NormalizationAnchors | None = None) -> RunResult:
    exp = Experiment(spec, cases, gateway, system, anchors)
    log = _prepare_log(exp, log, cases)
    exp.ingest_corpora(exp.split.train + exp.split.test)
    batches = _ordered_log(log, exp.split.train, spec.batch_size, spec.shuffle_seed)
    steps: list[StepResult] = []
    total = 0
    sessions: list[FeedbackSession] = []
    for i, batch in enumerate(batches, 1):
        total += exp.ingest_feedback(batch)
        sessions.extend(batch)
        steps.append(exp.step(i, total))
    if not steps:  # empty log: baseline only
        steps.append(exp.step(0, 0))
    return exp.finish(steps, log, sessions)


def run_on_policy(spec: ExperimentSpec, cases: Sequence[TaskCase], gateway: "Gateway",
                  system: MemorySystem | None = None, anchors: NormalizationAnchors | None = None,
                  policy: ActionPolicy | None = None) -> RunResult:
    exp = Experiment(spec, cases, gateway, system, anchors, policy)
    exp.ingest_corpora(exp.split.train + exp.split.test)
    sim = UserSimulator(gateway, exp.policy, SimulatorConfig(max_turns=spec.max_turns))
    batches = training_batches(exp.split.train, spec.batch_size, spec.shuffle_seed)
    if spec.steps is not None:
        batches = batches[:spec.steps]
    log = FeedbackLog(provenance="on_policy")
    all_sessions: list[FeedbackSession] = []
    steps: list[StepResult] = []
    total = 0
    for i, batch in enumerate(batches, 1):
        live: list[FeedbackSession] = []
        for case in batch:
            try:
                s = sim.simulate(case, exp.system, spec.action_seed)
            except SystemFailure as exc:
                logger.warning("step %d: case %s not simulated: %s", i, case.case_id, exc)
                continue
            live.append(s)
            log.add(s)
        check_no_leak(log.case_ids(), exp.split.test)
        if exp.out:
            write_sessions(exp.out / "feedback_log.jsonl", live, append=i > 1)
        total += exp.ingest_feedback(live)
        all_sessions.extend(live)
        test = exp.split.test
        interim = spec.eval_subsample is not None and i < len(batches)
        if interim:
            test = test[:spec.eval_subsample]
        steps.append(exp.step(i, total, test, subsampled=interim))
    if not steps:
        steps.append(exp.step(0, 0))
    return exp.finish(steps, log, all_sessions)


def run(spec: ExperimentSpec, cases: Sequence[TaskCase], gateway: "Gateway", **kw) -> RunResult:
    fn = {"off_policy": run_off_policy, "stepwise_off_policy": run_stepwise_off_policy,
          "on_policy": run_on_policy}[spec.protocol]
    return fn(spec, cases, gateway, **kw)


__all__ = [
    "ExperimentSpec", "TimingRecord", "RunManifest", "RunResult", "StepResult", "Experiment",
    "InvariantViolation", "time_section", "timing_summary", "generate_log", "run_off_policy",
    "run_stepwise_off_policy", "run_on_policy", "run", "MissingAnchor",
]
