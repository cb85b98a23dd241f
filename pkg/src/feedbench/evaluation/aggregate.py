"""Min-max normalization against persisted anchors, z-scores, and per-system aggregation."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ..errors import IncompleteCoverage, MissingAnchor
from .metrics import MetricScore


@dataclass(frozen=True)
class Anchor:
    min: float
    max: float

    def __post_init__(self):
        # floats throughout so saved files and digests survive a reload
        object.__setattr__(self, "min", float(self.min))
        object.__setattr__(self, "max", float(self.max))
        if self.max < self.min:
            raise ValueError(f"anchor max {self.max} < min {self.min}")


@dataclass
class NormalizationAnchors:
    anchors: dict[str, Anchor] = field(default_factory=dict)

    def __getitem__(self, dataset: str) -> Anchor:
        try:
            return self.anchors[dataset]
        except KeyError:
            raise MissingAnchor(f"no normalization anchor for dataset {dataset!r}") from None

    def __contains__(self, dataset: str) -> bool:
        return dataset in self.anchors

    @classmethod
    def from_scores(cls, raw_by_dataset: Mapping[str, Iterable[float]]) -> "NormalizationAnchors":
        out = {}
        for d, values in raw_by_dataset.items():
            vals = list(values)
            if vals:
                out[d] = Anchor(min(vals), max(vals))
        return cls(out)

    def to_dict(self) -> dict:
        return {d: {"min": a.min, "max": a.max} for d, a in sorted(self.anchors.items())}

    @classmethod
    def from_dict(cls, d: Mapping[str, Mapping[str, float]]) -> "NormalizationAnchors":
        return cls({k: Anchor(float(v["min"]), float(v["max"])) for k, v in d.items()})

    def save(self, path: str | Path) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        Path(path).write_text(text + "\n", encoding="utf-8")
        return self.digest()

    @classmethod
    def load(cls, path: str | Path) -> "NormalizationAnchors":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def min_max_normalize(values: Iterable[float], anchor: Anchor, direction: str = "higher_better") -> list[float]:
    span = anchor.max - anchor.min
    out = []
    for x in values:
        if span == 0:
            v = 0.5
        else:
            v = min(1.0, max(0.0, (x - anchor.min) / span))
        if direction == "lower_better":
            v = 1.0 - v
        out.append(v)
    return out


def z_score(values: Sequence[float]) -> list[float]:
    """Population z-scores; degenerate groups (n < 2 or zero variance) map to 0."""
    n = len(values)
    if n < 2:
        return [0.0] * n
    mean = math.fsum(values) / n
    var = math.fsum((x - mean) ** 2 for x in values) / n
    if var <= 0:
        return [0.0] * n
    sd = math.sqrt(var)
    return [(x - mean) / sd for x in values]


def aggregate(normalized: Mapping[str, float], test_cases: Sequence) -> tuple[float, dict[str, float]]:
    """Unweighted mean over test cases, plus per-dataset means.

    ``test_cases`` items need ``case_id`` and ``dataset_id`` attributes.
    """
    missing = [c.case_id for c in test_cases if c.case_id not in normalized]
    if missing:
        raise IncompleteCoverage(missing)
    if not test_cases:
        return float("nan"), {}
    per_dataset: dict[str, list[float]] = {}
    for c in test_cases:
        per_dataset.setdefault(c.dataset_id, []).append(normalized[c.case_id])
    overall = math.fsum(normalized[c.case_id] for c in test_cases) / len(test_cases)
    return overall, {d: math.fsum(v) / len(v) for d, v in per_dataset.items()}


@dataclass
class AggregateReport:
    system: str
    partition: str
    n_cases: int
    dataset_raw_mean: dict[str, float]
    dataset_normalized_mean: dict[str, float]
    overall_minmax: float
    overall_z: float | None = None
    failed_cases: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AggregateReport":
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(_rounded(self.to_dict()), sort_keys=True).encode()).hexdigest()


def _rounded(obj):
    if isinstance(obj, float):
        return round(obj, 12)
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_rounded(v) for v in obj]
    return obj


def z_scores_across_systems(
    scores: Mapping[str, Mapping[str, MetricScore]], dataset_of: Mapping[str, str]
) -> dict[str, dict[str, float]]:
    """Standardize raw scores of all systems and cases together within each dataset."""
    groups: dict[str, list[tuple[str, str, float]]] = {}
    for system, per_case in scores.items():
        for cid, ms in per_case.items():
            raw = -ms.raw_value if ms.direction == "lower_better" else ms.raw_value
            groups.setdefault(dataset_of[cid], []).append((system, cid, raw))
    out: dict[str, dict[str, float]] = {s: {} for s in scores}
    for members in groups.values():
        for (system, cid, _), z in zip(members, z_score([m[2] for m in members])):
            out[system][cid] = z
    return out


def build_report(
    system: str,
    partition: str,
    test_cases: Sequence,
    scores: Mapping[str, MetricScore],
    anchors: NormalizationAnchors,
    z_scores: Mapping[str, float] | None = None,
) -> AggregateReport:
    missing = [c.case_id for c in test_cases if c.case_id not in scores]
    if missing:
        raise IncompleteCoverage(missing)
    normalized: dict[str, float] = {}
    raw_by_dataset: dict[str, list[float]] = {}
    for c in test_cases:
        ms = scores[c.case_id]
        normalized[c.case_id] = min_max_normalize([ms.raw_value], anchors[c.dataset_id], ms.direction)[0]
        raw_by_dataset.setdefault(c.dataset_id, []).append(ms.raw_value)
    overall, per_dataset = aggregate(normalized, test_cases)
    overall_z = None
    if z_scores is not None:
        zs = [z_scores[c.case_id] for c in test_cases]
        overall_z = math.fsum(zs) / len(zs) if zs else None
    return AggregateReport(
        system=system,
        partition=partition,
        n_cases=len(test_cases),
        dataset_raw_mean={d: math.fsum(v) / len(v) for d, v in raw_by_dataset.items()},
        dataset_normalized_mean=per_dataset,
        overall_minmax=overall,
        overall_z=overall_z,
        failed_cases=sorted(c.case_id for c in test_cases if scores[c.case_id].failed),
    )


def render_table(reports: Sequence[AggregateReport], value: str = "overall_minmax") -> str:
    """Systems as rows, partitions as columns, in first-seen order."""
    systems: list[str] = []
    partitions: list[str] = []
    cells: dict[tuple[str, str], float | None] = {}
    for r in reports:
        if r.system not in systems:
            systems.append(r.system)
        if r.partition not in partitions:
            partitions.append(r.partition)
        cells[(r.system, r.partition)] = getattr(r, value)
    w0 = max([len("LLMsys")] + [len(s) for s in systems])
    widths = [max(9, len(p)) for p in partitions]
    header = f"{'LLMsys':<{w0}} | " + " | ".join(f"{p:>{w}}" for p, w in zip(partitions, widths))
    lines = [header, "-" * len(header)]
    for s in systems:
        row = []
        for p, w in zip(partitions, widths):
            v = cells.get((s, p))
            row.append(f"{'-':>{w}}" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:>{w}.4f}")
        lines.append(f"{s:<{w0}} | " + " | ".join(row))
    return "\n".join(lines)
