import pytest

from sensq.core import MatchedStudy
from sensq.scores import ScoreMatrix


def random_study(rng, n_sets, sizes=(2, 5), scale=1.0):
    """Random normal-outcome study with set sizes drawn from ``sizes`` (inclusive)."""
    ns = rng.integers(sizes[0], sizes[1] + 1, size=n_sets)
    outcomes = [rng.normal(size=n) * scale for n in ns]
    treated = [int(rng.integers(0, n)) for n in ns]
    return MatchedStudy.from_arrays(outcomes, treated)


def random_pair_scores(rng, n_pairs):
    per_set = [rng.normal(size=2).round(2) for _ in range(n_pairs)]
    return ScoreMatrix.from_sets(per_set, rng.integers(0, 2, size=n_pairs))


@pytest.fixture
def sign_study_scores():
    """Five pairs with scores (1, 0), treated unit always the one scoring 1."""
    return ScoreMatrix.from_sets([[1.0, 0.0]] * 5, [0] * 5)


#: lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
