"""Satisfaction-score to user-action probability models.

Three models map a 1-10 satisfaction score to like/dislike/no-action
probabilities (plus an independent copy side-action):

* ``GeneralSigmoidModel`` -- scaled logistic curves, used for judge-scored
  datasets and, with its own constants, for F1-scored datasets.
* ``BinaryActionModel`` -- two-point mapping for datasets scored only as
  correct (9) / incorrect (3).

Scaling constants are solved in closed form so that the expected like and
dislike rates under a score distribution hit global targets.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import InfeasibleCalibration

SCORES = tuple(range(1, 11))
LONG_OUTPUT_FORMATS = frozenset({"SiLo", "LiLo"})
COPY_MULTIPLIER = 4.0
_UNDERFLOW = 1e-12

Primary = Literal["like", "dislike", "none"]


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def check_score(s: int) -> int:
    if isinstance(s, bool) or int(s) != s or not 1 <= s <= 10:
        raise ValueError(f"satisfaction score must be an integer in [1, 10], got {s!r}")
    return int(s)


@dataclass(frozen=True)
class ScoreDistribution:
    """Probability mass over satisfaction scores 1..10."""

    mass: tuple[float, ...]

    def __post_init__(self):
        mass = tuple(float(m) for m in self.mass)
        if len(mass) != 10:
            raise ValueError(f"expected 10 masses, got {len(mass)}")
        if any(m < 0 for m in mass):
            raise ValueError("masses must be non-negative")
        if abs(sum(mass) - 1.0) > 1e-9:
            raise ValueError(f"masses must sum to 1, got {sum(mass)!r}")
        object.__setattr__(self, "mass", mass)

    def __getitem__(self, score: int) -> float:
        return self.mass[check_score(score) - 1]

    @classmethod
    def from_percentages(cls, percents: Sequence[float]) -> "ScoreDistribution":
        total = sum(percents)
        return cls(tuple(p / total for p in percents))

    @classmethod
    def from_scores(cls, scores: Iterable[int]) -> "ScoreDistribution":
        counts = Counter(check_score(s) for s in scores)
        n = sum(counts.values())
        if n == 0:
            raise ValueError("cannot build a distribution from zero scores")
        return cls(tuple(counts.get(s, 0) / n for s in SCORES))

    @classmethod
    def point(cls, score: int) -> "ScoreDistribution":
        check_score(score)
        return cls(tuple(1.0 if s == score else 0.0 for s in SCORES))


# Empirical distribution of LLM-generated satisfaction scores (percent).
REFERENCE_SCORE_PERCENTAGES = (0.02, 0.93, 3.06, 1.93, 0.40, 2.56, 17.5, 32.12, 41.05, 0.43)
REFERENCE_DISTRIBUTION = ScoreDistribution.from_percentages(REFERENCE_SCORE_PERCENTAGES)


@dataclass(frozen=True)
class GlobalTargets:
    """Overall explicit-feedback rate and its like share."""

    feedback_rate: float = 0.065
    like_share: float = 0.86
    p_like_global: float = field(init=False)
    p_dislike_global: float = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.feedback_rate <= 1.0:
            raise ValueError("feedback_rate must be in [0, 1]")
        if not 0.0 <= self.like_share <= 1.0:
            raise ValueError("like_share must be in [0, 1]")
        object.__setattr__(self, "p_like_global", self.feedback_rate * self.like_share)
        object.__setattr__(self, "p_dislike_global", self.feedback_rate * (1.0 - self.like_share))

    @classmethod
    def from_probabilities(cls, p_like: float, p_dislike: float) -> "GlobalTargets":
        rate = p_like + p_dislike
        return cls(feedback_rate=rate, like_share=p_like / rate if rate > 0 else 0.0)


@dataclass(frozen=True)
class ActionProbabilities:
    p_like: float
    p_dislike: float
    p_copy: float = 0.0
    p_none: float = field(init=False)

    def __post_init__(self):
        for name in ("p_like", "p_dislike", "p_copy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v!r}")
        p_none = 1.0 - self.p_like - self.p_dislike
        if p_none < -1e-12:
            raise ValueError("p_like + p_dislike exceeds 1")
        object.__setattr__(self, "p_none", max(0.0, p_none))


@dataclass(frozen=True)
class UserAction:
    primary: Primary = "none"
    copied: bool = False

    def __post_init__(self):
        if self.primary not in ("like", "dislike", "none"):
            raise ValueError(f"unknown primary action {self.primary!r}")

    def to_dict(self) -> dict:
        return {"primary": self.primary, "copied": self.copied}

    @classmethod
    def from_dict(cls, d: dict) -> "UserAction":
        return cls(primary=d["primary"], copied=bool(d.get("copied", False)))


def copy_probability(p_like: float, task_format: str | None) -> float:
    if task_format in LONG_OUTPUT_FORMATS:
        return min(1.0, COPY_MULTIPLIER * p_like)
    return 0.0


@dataclass(frozen=True)
class GeneralSigmoidModel:
    k_like: float = 1.5
    s0_like: float = 7.5
    k_dislike: float = 1.5
    s0_dislike: float = 4.5
    c_like: float = 0.0
    c_dislike: float = 0.0

    def __post_init__(self):
        if self.k_like <= 0 or self.k_dislike <= 0:
            raise ValueError("steepness must be positive")
        if not (1 <= self.s0_like <= 10 and 1 <= self.s0_dislike <= 10):
            raise ValueError("midpoints must lie in [1, 10]")
        if not (0 <= self.c_like <= 1 and 0 <= self.c_dislike <= 1):
            raise ValueError("scaling constants must lie in [0, 1]")
        for s in SCORES:
            if self.p_like(s) + self.p_dislike(s) > 1.0 + 1e-12:
                raise ValueError(f"P(like|{s}) + P(dislike|{s}) exceeds 1")

    def p_like(self, s: int) -> float:
        return self.c_like * sigmoid(self.k_like * (s - self.s0_like))

    def p_dislike(self, s: int) -> float:
        return self.c_dislike * sigmoid(-self.k_dislike * (s - self.s0_dislike))

    def probabilities(self, s: int, task_format: str | None = None) -> ActionProbabilities:
        return sigmoid_probabilities(self, s, task_format)

    def table(self) -> list[tuple[int, float, float, float]]:
        """(score, P(like), P(dislike), P(none)) for every score."""
        rows = []
        for s in SCORES:
            p = self.probabilities(s)
            rows.append((s, p.p_like, p.p_dislike, p.p_none))
        return rows


def sigmoid_probabilities(model: GeneralSigmoidModel, s: int, task_format: str | None = None) -> ActionProbabilities:
    s = check_score(s)
    p_like = model.p_like(s)
    return ActionProbabilities(
        p_like=p_like,
        p_dislike=model.p_dislike(s),
        p_copy=copy_probability(p_like, task_format),
    )


def calibrate_sigmoid(
    dist: ScoreDistribution,
    targets: GlobalTargets = GlobalTargets(),
    k_like: float = 1.5,
    s0_like: float = 7.5,
    k_dislike: float = 1.5,
    s0_dislike: float = 4.5,
) -> GeneralSigmoidModel:
    """Solve the scaling constants so expected like/dislike rates equal the targets.

    The expected like rate is linear in ``c_like``, so
    ``c_like = P(L) / sum_S P(S) * sigmoid(k_like * (S - s0_like))`` and
    likewise for dislikes.
    """
    if k_like <= 0 or k_dislike <= 0:
        raise ValueError("steepness must be positive")
    like_mass = math.fsum(dist[s] * sigmoid(k_like * (s - s0_like)) for s in SCORES)
    dislike_mass = math.fsum(dist[s] * sigmoid(-k_dislike * (s - s0_dislike)) for s in SCORES)
    c_like = _solve_scale(targets.p_like_global, like_mass, "like")
    c_dislike = _solve_scale(targets.p_dislike_global, dislike_mass, "dislike")
    try:
        return GeneralSigmoidModel(k_like, s0_like, k_dislike, s0_dislike, c_like, c_dislike)
    except ValueError as exc:
        raise InfeasibleCalibration(str(exc)) from exc


def _solve_scale(target: float, mass: float, label: str) -> float:
    if mass < _UNDERFLOW:
        raise InfeasibleCalibration(f"{label} denominator underflows ({mass:.3e})")
    c = target / mass
    if c > 1.0:
        raise InfeasibleCalibration(f"{label} scaling constant {c:.6f} exceeds 1")
    return c


@dataclass(frozen=True)
class BinaryActionModel:
    p_like_given_high: float
    p_dislike_given_low: float
    high_score: int = 9
    low_score: int = 3

    def __post_init__(self):
        for v in (self.p_like_given_high, self.p_dislike_given_low):
            if not 0.0 <= v <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        check_score(self.high_score)
        check_score(self.low_score)

    def probabilities(self, s: int, task_format: str | None = None) -> ActionProbabilities:
        s = check_score(s)
        p_like = self.p_like_given_high if s == self.high_score else 0.0
        p_dislike = self.p_dislike_given_low if s == self.low_score else 0.0
        return ActionProbabilities(p_like, p_dislike, copy_probability(p_like, task_format))


def calibrate_binary(
    dist: ScoreDistribution,
    targets: GlobalTargets = GlobalTargets(),
    high_score: int = 9,
    low_score: int = 3,
) -> BinaryActionModel:
    p_like = _ratio(targets.p_like_global, dist[high_score], high_score)
    p_dislike = _ratio(targets.p_dislike_global, dist[low_score], low_score)
    if p_like > 1.0 or p_dislike > 1.0:
        raise InfeasibleCalibration(f"conditional probability exceeds 1 (like={p_like:.4f}, dislike={p_dislike:.4f})")
    return BinaryActionModel(p_like, p_dislike, high_score, low_score)


def _ratio(target: float, mass: float, score: int) -> float:
    if mass <= 0:
        if target == 0:
            return 0.0
        raise InfeasibleCalibration(f"score distribution has no mass at S={score}")
    return target / mass


_F1_BANDS = ((0.9, 10), (0.8, 9), (0.7, 8), (0.6, 7), (0.5, 6), (0.4, 5), (0.3, 4), (0.2, 3), (0.1, 2))


def f1_to_satisfaction(f1: float) -> int:
    if not 0.0 <= f1 <= 1.0:
        raise ValueError(f"F1 must be in [0, 1], got {f1!r}")
    for threshold, score in _F1_BANDS:
        if f1 >= threshold:
            return score
    return 1


def binary_satisfaction(correct: bool) -> int:
    return 9 if correct else 3


def sample_action(probs: ActionProbabilities, rng: np.random.Generator | int) -> UserAction:
    """Draw one action. Always consumes exactly two uniforms so replays stay aligned."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    u_primary, u_copy = rng.random(2)
    if u_primary < probs.p_like:
        primary: Primary = "like"
    elif u_primary < probs.p_like + probs.p_dislike:
        primary = "dislike"
    else:
        primary = "none"
    return UserAction(primary=primary, copied=bool(u_copy < probs.p_copy))


# Reference conditional probabilities for the binary model, used until a run has
# its own score statistics to calibrate from.
REFERENCE_BINARY = BinaryActionModel(p_like_given_high=0.099, p_dislike_given_low=0.021)


@dataclass(frozen=True)
class ActionPolicy:
    """Chooses the action model by how the score was produced."""

    general: GeneralSigmoidModel
    f1: GeneralSigmoidModel
    binary: BinaryActionModel

    @classmethod
    def default(cls, targets: GlobalTargets = GlobalTargets(), **sigmoid_params) -> "ActionPolicy":
        general = calibrate_sigmoid(REFERENCE_DISTRIBUTION, targets, **sigmoid_params)
        return cls(general=general, f1=general, binary=REFERENCE_BINARY)

    def with_f1_distribution(self, dist: ScoreDistribution, targets: GlobalTargets = GlobalTargets()) -> "ActionPolicy":
        g = self.general
        f1_model = calibrate_sigmoid(dist, targets, g.k_like, g.s0_like, g.k_dislike, g.s0_dislike)
        return ActionPolicy(self.general, f1_model, self.binary)

    def with_binary_distribution(self, dist: ScoreDistribution, targets: GlobalTargets = GlobalTargets()) -> "ActionPolicy":
        return ActionPolicy(self.general, self.f1, calibrate_binary(dist, targets))

    def probabilities(self, s: int, metric: str | None, task_format: str | None) -> ActionProbabilities:
        if metric == "accuracy":
            return self.binary.probabilities(s, task_format)
        if metric == "f1":
            return self.f1.probabilities(s, task_format)
        return self.general.probabilities(s, task_format)


def format_table(model: GeneralSigmoidModel) -> str:
    """Fixed-width conditional probability table, one row per score."""
    header = f"{'Score (S)':>9}  {'Like Prob. P(L|S)':>18}  {'Dislike Prob. P(D|S)':>21}  {'No Action Prob. P(N|S)':>23}"
    lines = [header, "-" * len(header)]
    for s, pl, pd, pn in model.table():
        lines.append(f"{s:>9}  {pl * 100:>17.3f}%  {pd * 100:>20.3f}%  {pn * 100:>22.3f}%")
    lines.append("")
    lines.append(f"c_like={model.c_like:.6f}  c_dislike={model.c_dislike:.6f}  "
                 f"k_like={model.k_like:g}  s0_like={model.s0_like:g}  "
                 f"k_dislike={model.k_dislike:g}  s0_dislike={model.s0_dislike:g}")
    return "\n".join(lines)
