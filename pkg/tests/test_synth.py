import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from hetcal import metrics, synth
from hetcal.synth import gen_heterogeneous, gen_overconfident, true_auc_heterogeneous


def closed_form_auc(w, sd=2.0, acc=0.75):
    """Sum of pairwise normal comparisons over the two mixture components per label."""
    w1 = [(1 + w, acc), (1.0, 1 - acc)]
    w0 = [(-1.0, acc), (-1 + w, 1 - acc)]
    return sum(a * b * norm.cdf((m1 - m0) / (sd * math.sqrt(2))) for m1, a in w1 for m0, b in w0)


class TestTrueAuc:
    @pytest.mark.parametrize("w", [0.0, 0.7, 1.8, 3.6, 6.0, -2.0])
    def test_matches_closed_form(self, w):
        assert true_auc_heterogeneous(w, 0.3) == pytest.approx(closed_form_auc(w), abs=1e-9)

    def test_w_zero(self):
        assert true_auc_heterogeneous(0.0, 0.0) == pytest.approx(norm.cdf(2 / math.sqrt(2 * 4.0)), abs=1e-9)

    def test_anchors(self):
        assert true_auc_heterogeneous(1.8, -0.9) == pytest.approx(0.83, abs=0.01)
        assert true_auc_heterogeneous(3.6, -1.8) == pytest.approx(0.85, abs=0.01)

    @pytest.mark.parametrize("w", [0.0, 1.8, 3.6])
    def test_shift_invariant(self, w):
        assert abs(true_auc_heterogeneous(w, -5.0) - true_auc_heterogeneous(w, 4.0)) < 1e-9

    def test_sigma_choice(self):
        assert synth.pick_sigma_base() == 2.0
        assert abs(true_auc_heterogeneous(1.8, -0.9, math.sqrt(2)) - 0.83) > 0.05

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            true_auc_heterogeneous(1.0, 0.0, 0.0)


class TestSweep:
    def test_shape_and_order(self):
        rows = synth.figure2_sweep(np.arange(0, 6.01, 0.2))
        assert rows.shape == (31, 2)
        auc = dict(zip(np.round(rows[:, 0], 6), rows[:, 1]))
        assert auc[3.6] > auc[1.8] > auc[0.0]

    def test_unimodal(self):
        a = synth.figure2_sweep(np.arange(0, 12.01, 0.2))[:, 1]
        peak = int(np.argmax(a))
        assert np.all(np.diff(a[:peak + 1]) > 0) and np.all(np.diff(a[peak:]) < 0)

    def test_empty(self):
        with pytest.raises(ValueError):
            synth.figure2_sweep([])

    def test_csv(self, tmp_path):
        synth.write_sweep_csv(synth.figure2_sweep([0.0, 1.0]), tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "w,auc" and len(lines) == 3


class TestGenHeterogeneous:
    def test_agreement_rate(self):
        n = 40000
        d = gen_heterogeneous(n, 1.0, 0.0, seed=1)
        agree = np.mean(d.features[:, 0] == d.labels)
        assert abs(agree - 0.75) < 2 / math.sqrt(n)
        assert abs(d.labels.mean() - 0.5) < 2 / math.sqrt(n)

    def test_score_formula(self):
        a = gen_heterogeneous(100, 0.0, 0.0, seed=4)
        b = gen_heterogeneous(100, 2.5, -1.0, seed=4)
        np.testing.assert_allclose(b.scores, a.scores + 2.5 * a.features[:, 0] - 1.0, atol=1e-12)

    def test_deterministic(self):
        a, b = gen_heterogeneous(50, 1.8, -0.9, seed=9), gen_heterogeneous(50, 1.8, -0.9, seed=9)
        np.testing.assert_array_equal(a.scores, b.scores)

    @pytest.mark.parametrize("w", [0.0, 1.8, 3.6])
    def test_monte_carlo_matches_integral(self, w):
        d = gen_heterogeneous(1_000_000, w, -w / 2, seed=17)
        assert abs(metrics.empirical_auc(d) - true_auc_heterogeneous(w, -w / 2)) < 0.003

    def test_large_w_limit(self):
        d = gen_heterogeneous(200_000, 200.0, 0.0, seed=3)
        # only within-tie base ordering survives: 3/4 feature AUC plus half the tie mass re-ranked by base score
        tie = 2 * 0.75 * 0.25
        want = 0.75 * 0.75 + tie * norm.cdf(2 / math.sqrt(8))
        assert metrics.empirical_auc(d) == pytest.approx(want, abs=0.005)

    def test_too_small(self):
        with pytest.raises(ValueError):
            gen_heterogeneous(1, 0.0, 0.0, seed=0)


class TestOverconfident:
    def test_density_integrates_to_one(self):
        for label in (0, 1):
            val, _ = integrate.quad(lambda s: float(synth.overconfident_train_density(s, label)), -np.inf, np.inf,
                                    points=None)
            assert val == pytest.approx(1.0, abs=1e-9)

    def test_acceptance_accounting(self):
        rng = np.random.default_rng(0)
        _, acc, prop = synth.sample_overconfident_train(rng, 400_000, 1)
        assert abs(acc / prop - 0.75) < 1e-3 + 3 * math.sqrt(0.75 * 0.25 / prop)

    def test_train_sharper_than_test(self):
        train, test = gen_overconfident(100_000, seed=2)
        assert metrics.empirical_auc(train) > metrics.empirical_auc(test) + 0.02

    def test_balanced_and_deterministic(self):
        train, test = gen_overconfident(1001, seed=5)
        for d in (train, test):
            assert abs(d.labels.mean() - 0.5) < 2 / math.sqrt(1001)
        again, _ = gen_overconfident(1001, seed=5)
        np.testing.assert_array_equal(train.scores, again.scores)

    def test_train_matches_density(self):
        rng = np.random.default_rng(8)
        x, _, _ = synth.sample_overconfident_train(rng, 200_000, 1)
        # mass below the mean: 2/3 * 1/2
        assert np.mean(x < 1.0) == pytest.approx(1 / 3, abs=0.005)
        assert np.mean((x > 1.0) & (x < 3.0)) == pytest.approx(4 / 3 * (norm.cdf(1.0) - 0.5), abs=0.005)
