import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gapstat.model import Alphabet, GapPenalty, LetterDist, ScoreMatrix, ScoringModel

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def binary_model(match=1.0, mismatch=-2.0):
    alpha = Alphabet(("A", "B"))
    return ScoringModel(alpha, LetterDist.uniform(alpha), ScoreMatrix.match_mismatch(2, match, mismatch))


@pytest.fixture(scope="session")
def dna():
    """Uniform 4-letter alphabet, +1 match / -1 mismatch."""
    return ScoringModel.uniform("ACGT", 1, -1)


@pytest.fixture(scope="session")
def binary():
    """Uniform binary alphabet, +1 match / -2 mismatch."""
    return binary_model()


@pytest.fixture(scope="session")
def reference_gap():
    return GapPenalty.affine(8, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def g2_moment_sum(model, g, theta, cutoff):
    """Sum over 2 <= m, n <= cutoff of E exp(theta G_2(x_m, y_n)) by full enumeration.

    Written independently of the DP: with two matches and the first pinned
    at (1, 1), G_2 = K(x1, y1) + max over the second match (i, j) of
    K(xi, yj) - g(i-2) - g(j-2) - g(m-i) - g(n-j).
    """
    from itertools import product

    from gapstat.model import eval_gap

    K = model.scores.array
    p = model.dist.array
    A = len(p)
    total = 0.0
    seqs = {L: np.array(list(product(range(A), repeat=L))) for L in range(2, cutoff + 1)}
    for m in range(2, cutoff + 1):
        X = seqs[m]
        px = np.prod(p[X], axis=1)
        for n in range(2, cutoff + 1):
            Y = seqs[n]
            py = np.prod(p[Y], axis=1)
            best = np.full((len(X), len(Y)), -np.inf)
            for i in range(2, m + 1):
                for j in range(2, n + 1):
                    pen = eval_gap(g, i - 2) + eval_gap(g, j - 2) + eval_gap(g, m - i) + eval_gap(g, n - j)
                    np.maximum(best, K[X[:, i - 1][:, None], Y[:, j - 1][None, :]] - pen, out=best)
            G = K[X[:, 0][:, None], Y[:, 0][None, :]] + best
            total += float(px @ np.exp(theta * G) @ py)
    return total


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
