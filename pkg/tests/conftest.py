import random

import pytest

from trajeval.emotion import EmotionTrajectory


def random_trajectories(count: int, seed: int = 20240611):
    """Seeded ``(trajectory, N)`` pairs with N in 2..6 and T in 5..100."""
    rnd = random.Random(seed)
    out = []
    for _ in range(count):
        n = rnd.randint(2, 6)
        t = rnd.randint(5, 100)
        out.append((EmotionTrajectory([rnd.random() for _ in range(t + 1)]), n))
    return out


def increasing_trajectories(count: int, seed: int = 7):
    rnd = random.Random(seed)
    out = []
    for _ in range(count):
        t = rnd.randint(1, 60)
        values = sorted({rnd.random() for _ in range(t + 1)})
        out.append(EmotionTrajectory(values))
    return out


@pytest.fixture(scope="session")
def trajectories():
    return random_trajectories(1000)


# filled by tests/test_acceptance.py, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
