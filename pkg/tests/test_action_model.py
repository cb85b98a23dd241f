from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feedbench.action_model import (
    REFERENCE_BINARY,
    REFERENCE_DISTRIBUTION,
    ActionPolicy,
    ActionProbabilities,
    GeneralSigmoidModel,
    GlobalTargets,
    ScoreDistribution,
    UserAction,
    binary_satisfaction,
    calibrate_binary,
    calibrate_sigmoid,
    copy_probability,
    f1_to_satisfaction,
    format_table,
    sample_action,
    sigmoid,
)
from feedbench.errors import InfeasibleCalibration

# reference action table (percent): like, dislike, none for S = 1..10
ACTION_TABLE = [
    (0.000, 15.091, 84.909), (0.002, 14.821, 85.177), (0.010, 13.723, 86.267), (0.045, 10.303, 89.652),
    (0.197, 4.867, 94.936), (0.817, 1.446, 97.737), (2.748, 0.349, 96.903), (5.818, 0.079, 94.103),
    (7.749, 0.018, 92.233), (8.369, 0.004, 91.627),
]


@pytest.fixture(scope="module")
def model():
    return calibrate_sigmoid(REFERENCE_DISTRIBUTION, GlobalTargets())


def test_score_distribution_validation():
    with pytest.raises(ValueError):
        ScoreDistribution.from_percentages([10] * 9)
    with pytest.raises(ValueError):
        ScoreDistribution((0.2,) * 10)
    # percentages are renormalized, so rounding in published tables is tolerated
    assert abs(sum(ScoreDistribution.from_percentages([10] * 9 + [5]).mass) - 1) < 1e-12
    with pytest.raises(ValueError):
        ScoreDistribution((1.1, -0.1) + (0.0,) * 8)
    d = ScoreDistribution.from_scores([9, 9, 3, 10])
    assert d[9] == 0.5 and d[3] == 0.25 and d[10] == 0.25
    assert ScoreDistribution.point(4)[4] == 1.0


def test_targets_identity():
    t = GlobalTargets(0.1, 0.3)
    assert abs(t.p_like_global - 0.03) < 1e-12
    assert abs(t.p_dislike_global - 0.07) < 1e-12
    with pytest.raises(ValueError):
        GlobalTargets(1.5, 0.5)


def test_constants_invert_table_rows(model):
    # c_like from the S=10 like cell, c_dislike from the S=1 dislike cell
    c_like_from_table = 0.08369 / sigmoid(1.5 * (10 - 7.5))
    c_dislike_from_table = 0.15091 / sigmoid(-1.5 * (1 - 4.5))
    assert abs(model.c_like - c_like_from_table) < 5e-5
    assert abs(model.c_dislike - c_dislike_from_table) < 5e-5
    assert round(model.c_like, 4) == 0.0857
    assert round(model.c_dislike, 4) == 0.1517


def test_row_s8_and_s9(model):
    p8 = model.probabilities(8)
    assert abs(p8.p_like * 100 - 5.818) < 1e-3
    assert abs(p8.p_dislike * 100 - 0.079) < 1e-3
    p9 = model.probabilities(9)
    assert abs(p9.p_like * 100 - 7.749) < 1e-3
    assert abs(p9.p_dislike * 100 - 0.018) < 1e-3
    p1 = model.probabilities(1)
    assert abs(p1.p_none * 100 - 84.909) < 5e-3


def test_single_point_distribution_forces_constant():
    k, s0 = 1.5, 7.5
    target = sigmoid(k * (10 - s0)) * 0.5
    m = calibrate_sigmoid(ScoreDistribution.point(10), GlobalTargets.from_probabilities(target, 0.0), k, s0)
    assert abs(m.c_like - 0.5) < 1e-12


def test_infeasible_calibration():
    # all mass at S=1 makes the like denominator tiny, so c_like would exceed 1
    with pytest.raises(InfeasibleCalibration):
        calibrate_sigmoid(ScoreDistribution.point(1), GlobalTargets())
    with pytest.raises(InfeasibleCalibration):
        calibrate_sigmoid(ScoreDistribution.point(1), GlobalTargets(), k_like=40.0)


def test_monotone(model):
    likes = [model.p_like(s) for s in range(1, 11)]
    dislikes = [model.p_dislike(s) for s in range(1, 11)]
    assert all(a < b for a, b in zip(likes, likes[1:]))
    assert all(a > b for a, b in zip(dislikes, dislikes[1:]))


def test_model_invariants():
    with pytest.raises(ValueError):
        GeneralSigmoidModel(k_like=0)
    with pytest.raises(ValueError):
        GeneralSigmoidModel(s0_like=11)
    with pytest.raises(ValueError):
        GeneralSigmoidModel(c_like=0.9, c_dislike=0.9, s0_like=1, s0_dislike=10)


def test_copy_probability(model):
    p = model.probabilities(8, "LiLo")
    assert abs(p.p_copy * 100 - 23.272) < 4e-3
    assert model.probabilities(8, "SiSo").p_copy == 0.0
    assert copy_probability(0.3, "SiLo") == 1.0
    assert copy_probability(0.3, "LiSo") == 0.0


def test_action_probabilities_sum():
    with pytest.raises(ValueError):
        ActionProbabilities(0.7, 0.5)
    p = ActionProbabilities(0.2, 0.3)
    assert abs(p.p_like + p.p_dislike + p.p_none - 1) < 1e-12


def test_user_action_roundtrip():
    a = UserAction("like", True)
    assert UserAction.from_dict(a.to_dict()) == a
    with pytest.raises(ValueError):
        UserAction("love", False)


def test_binary_calibration():
    dist = ScoreDistribution.from_percentages([0, 0, 43.33, 0, 0, 0, 0, 0, 56.46, 0.21])
    b = calibrate_binary(dist, GlobalTargets())
    assert abs(b.p_like_given_high - 0.099) < 5e-4
    assert abs(b.p_dislike_given_low - 0.021) < 5e-4
    assert abs(calibrate_binary(ScoreDistribution.point(9), GlobalTargets.from_probabilities(0.0559, 0.0)
                                ).p_like_given_high - 0.0559) < 1e-12
    half = ScoreDistribution.from_percentages([0, 0, 50, 0, 0, 0, 0, 0, 50, 0])
    assert abs(calibrate_binary(half, GlobalTargets.from_probabilities(0.1, 0.25)).p_dislike_given_low - 0.5) < 1e-12
    with pytest.raises(InfeasibleCalibration):
        calibrate_binary(ScoreDistribution.point(9), GlobalTargets())


def test_reference_binary_implies_binary_distribution():
    # P(L)/0.099 + P(D)/0.021 should nearly exhaust the probability mass
    t = GlobalTargets()
    implied = t.p_like_global / REFERENCE_BINARY.p_like_given_high + t.p_dislike_global / REFERENCE_BINARY.p_dislike_given_low
    assert abs(implied - 1.0) < 0.01


def test_binary_model_probabilities():
    p9 = REFERENCE_BINARY.probabilities(9)
    p3 = REFERENCE_BINARY.probabilities(3)
    assert (p9.p_like, p9.p_dislike) == (0.099, 0.0)
    assert (p3.p_like, p3.p_dislike) == (0.0, 0.021)


def test_policy_routes_by_metric():
    pol = ActionPolicy.default()
    assert pol.probabilities(9, "accuracy", "LiSo").p_like == 0.099
    assert pol.probabilities(9, "f1", "LiSo") == pol.general.probabilities(9, "LiSo")
    f1_dist = ScoreDistribution.from_percentages([30, 5, 5, 5, 5, 10, 10, 10, 10, 10])
    pol2 = pol.with_f1_distribution(f1_dist)
    assert pol2.f1.c_like != pol.f1.c_like
    total = sum(f1_dist[s] * pol2.f1.p_like(s) for s in range(1, 11))
    assert abs(total - 0.0559) < 1e-9


def test_f1_mapping_anchors():
    assert f1_to_satisfaction(0.92) == 10
    assert f1_to_satisfaction(0.9) == 10
    assert f1_to_satisfaction(0.85) == 9
    assert f1_to_satisfaction(0.55) == 6
    assert f1_to_satisfaction(0.5) == 6
    assert f1_to_satisfaction(0.0) == 1
    with pytest.raises(ValueError):
        f1_to_satisfaction(1.2)


def test_binary_satisfaction():
    assert binary_satisfaction(True) == 9
    assert binary_satisfaction(False) == 3
    assert [binary_satisfaction(True) for _ in range(3)] == [9, 9, 9]


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_f1_mapping_monotone_property(a, b):
    lo, hi = sorted((a, b))
    assert f1_to_satisfaction(lo) <= f1_to_satisfaction(hi)


def test_sample_degenerate():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = sample_action(ActionProbabilities(1.0, 0.0, 0.0), rng)
        assert a == UserAction("like", False)
    assert all(not sample_action(ActionProbabilities(0.3, 0.3, 0.0), rng).copied for _ in range(200))


def test_sample_seed_determinism(model):
    p = model.probabilities(8, "LiLo")
    a = [sample_action(p, np.random.default_rng(7)) for _ in range(3)]
    assert a[0] == a[1] == a[2]
    assert sample_action(p, 7) == a[0]


def test_sampler_s8_like_frequency(model):
    # 10^6 draws; like frequency within 3 binomial sigma of the reference value
    p = model.probabilities(8)
    rng = np.random.default_rng(2024)
    n = 1_000_000
    u = rng.random((n, 2))  # same two-uniform scheme as sample_action, vectorized
    likes = int(np.sum(u[:, 0] < p.p_like))
    sigma = math.sqrt(n * 0.05818 * (1 - 0.05818))
    assert abs(likes - n * 0.05818) < 3 * sigma + n * 1e-5
    # the scalar sampler agrees with the vectorized scheme draw for draw
    rng2 = np.random.default_rng(2024)
    first = [sample_action(p, rng2) for _ in range(1000)]
    assert sum(a.primary == "like" for a in first) == int(np.sum(u[:1000, 0] < p.p_like))


def test_format_table(model):
    text = format_table(model)
    lines = text.splitlines()
    assert "Like Prob. P(L|S)" in lines[0]
    assert lines[2].split()[:4] == ["1", "0.000%", "15.093%", "84.907%"]
    assert "5.818%" in lines[9]
    assert len(lines) == 2 + 10 + 2


@pytest.mark.parametrize("s", range(1, 11))
def test_action_table_row(model, s):
    like, dislike, none = ACTION_TABLE[s - 1]
    p = model.probabilities(s)
    assert abs(p.p_like * 100 - like) < 0.1
    assert abs(p.p_dislike * 100 - dislike) < 0.1
    assert abs(p.p_none * 100 - none) < 0.1
