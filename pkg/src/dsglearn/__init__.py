"""Learning leader strategies in layered dynamic Stackelberg games with an unknown follower."""

from .game import Dsg, FollowerOracle, best_response, load_dsg, save_dsg, validate
from .learner import LearnerConfig, RunResult, VersionSpace, get_policy, run_anytime, run_learning
from .planning import evaluate_policy_exact, evaluate_policy_mc, hindsight_policy

__all__ = [
    "Dsg",
    "FollowerOracle",
    "LearnerConfig",
    "RunResult",
    "VersionSpace",
    "best_response",
    "evaluate_policy_exact",
    "evaluate_policy_mc",
    "get_policy",
    "hindsight_policy",
    "load_dsg",
    "run_anytime",
    "run_learning",
    "save_dsg",
    "validate",
]
__version__ = "0.1.0"
