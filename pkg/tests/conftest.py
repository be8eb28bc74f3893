import numpy as np
import pytest

from dsglearn.game import FollowerOracle
from dsglearn.learner import LearnerConfig, run_learning
from dsglearn.scenarios import RandomDsgSpec, random_dsg

VERDICTS: list[str] = []


def verdict(name: str, ok: bool, detail: str = "") -> None:
    """Record a one-line PASS/FAIL for the acceptance summary, then assert."""
    line = f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else "")
    VERDICTS.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def learning_runs():
    """Twenty small instances (ten with p=2, ten with p=3) run for 50 episodes."""
    runs = []
    for i in range(20):
        p = 2 if i < 10 else 3
        dsg, theta = random_dsg(RandomDsgSpec((1, 2, 2), n=4, m=4, p=p, seed=1000 + i))
        oracle = FollowerOracle(theta)
        run = run_learning(dsg, oracle, LearnerConfig(T=50, seed=i))
        runs.append((dsg, theta, oracle, run))
    return runs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
