"""feedbench: evaluate how memory-augmented LLM systems improve from simulated user feedback."""

from __future__ import annotations

from .action_model import (
    ActionPolicy,
    ActionProbabilities,
    BinaryActionModel,
    GeneralSigmoidModel,
    GlobalTargets,
    ScoreDistribution,
    UserAction,
    binary_satisfaction,
    calibrate_binary,
    calibrate_sigmoid,
    f1_to_satisfaction,
    sample_action,
)
from .gateway import ChatRequest, Gateway, GatewayProfile, ScriptedBackend
from .runner import ExperimentSpec, run, run_off_policy, run_on_policy, run_stepwise_off_policy
from .session import DialogTurn, FeedbackSession
from .synthetic import mock_gateway, synthetic_cases
from .tasks import FeedbackLog, Partition, TaskCase, build_partition, load_cases
from .user_simulator import UserSimulator, simulate_session

__version__ = "0.1.0"

__all__ = [
    "ActionPolicy", "ActionProbabilities", "BinaryActionModel", "GeneralSigmoidModel", "GlobalTargets",
    "ScoreDistribution", "UserAction", "binary_satisfaction", "calibrate_binary", "calibrate_sigmoid",
    "f1_to_satisfaction", "sample_action", "ChatRequest", "Gateway", "GatewayProfile", "ScriptedBackend",
    "ExperimentSpec", "run", "run_off_policy", "run_on_policy", "run_stepwise_off_policy", "DialogTurn",
    "FeedbackSession", "FeedbackLog", "Partition", "TaskCase", "build_partition", "load_cases",
    "UserSimulator", "simulate_session", "mock_gateway", "synthetic_cases",
]
