import numpy as np
import pytest

from hetcal.score_model import Dataset, DiscreteDistribution


def make_dist(p0, p1, partition=None):
    """Distribution from label-conditional score masses ``{score: mass}`` with balanced labels."""
    rows = [(s, 0, 0.5 * m) for s, m in p0.items()] + [(s, 1, 0.5 * m) for s, m in p1.items()]
    s, y, w = zip(*rows)
    part = np.zeros(len(s), dtype=int) if partition is None else partition
    return DiscreteDistribution(np.array(s, float), part, y, w, normalize=True)


def pair_count_auc(scores, labels):
    """O(n^2) reference AUC with ties at one half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    pos, neg = s[y == 1], s[y == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (pos.size * neg.size)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_data():
    X = np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [1.0, 1.0]])
    return Dataset(X, [0, 1, 0, 1], [-1.0, 2.0, 0.0, 1.5], "train")


#: criterion id -> (passed, detail); filled by test_acceptance
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, (ok, detail) in sorted(ACCEPTANCE_RESULTS.items(), key=lambda kv: kv[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {cid}: {detail}")
