"""Operator-attention queueing for robot teams: simulation, balking-policy
learning and the experiment harness around them."""

from .estimator import BalkingQLearner
from .experiments import NoiseSpec, Schedule, reproduce_figure, run_test_phase, summarize
from .learning import Action, LearningParams, Model, QTable
from .queue_core import Discipline, EventCatalog, EventType, OperatorQueue, Request, naor_threshold
from .sim_kernel import SimConfig, run_episode
from .training import train

__all__ = [
    "Action",
    "BalkingQLearner",
    "Discipline",
    "EventCatalog",
    "EventType",
    "LearningParams",
    "Model",
    "NoiseSpec",
    "OperatorQueue",
    "QTable",
    "Request",
    "Schedule",
    "SimConfig",
    "naor_threshold",
    "reproduce_figure",
    "run_episode",
    "run_test_phase",
    "summarize",
    "train",
]

__version__ = "0.1.0"
