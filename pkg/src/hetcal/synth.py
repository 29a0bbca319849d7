"""Toy score distributions: an over-confident model and an under-used binary feature.

Base scores are normal with mean -1 (label 0) or +1 (label 1) and standard
deviation ``SIGMA_BASE``. A heterogeneous binary feature agrees with the
label with probability 3/4 and is added to the score with weight ``w``.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .score_model import Dataset

#: standard deviation of the base score; the one of {sqrt(2), 2} that puts the
#: w=1.8 AUC closest to 0.83, see ``pick_sigma_base``
SIGMA_BASE = 2.0
FEATURE_ACCURACY = 0.75


@dataclass(frozen=True)
class ToyModelSpec:
    sigma_base: float = SIGMA_BASE
    accuracy: float = FEATURE_ACCURACY
    w: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if not self.sigma_base > 0:
            raise ValueError("sigma_base must be positive")
        if not (math.isfinite(self.w) and math.isfinite(self.b)):
            raise ValueError("w and b must be finite")


def _normal_pdf(x, mu, sd):
    return np.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))


def true_auc_heterogeneous(w: float, b: float = 0.0, sigma_base: float = SIGMA_BASE,
                           accuracy: float = FEATURE_ACCURACY) -> float:
    """Population AUC of ``base + w*x + b`` by numerical integration.

    Label-1 scores follow ``acc*N(1+w+b) + (1-acc)*N(1+b)``, label-0 scores
    ``acc*N(-1+b) + (1-acc)*N(-1+w+b)``. The AUC is the integral of the
    label-1 survival function against the label-0 density.
    """
    if not sigma_base > 0:
        raise ValueError("sigma_base must be positive")
    m1 = (1 + w + b, 1 + b)
    m0 = (-1 + b, -1 + w + b)
    wt = (accuracy, 1 - accuracy)
    sd = sigma_base

    def integrand(T):
        surv = wt[0] * ndtr((m1[0] - T) / sd) + wt[1] * ndtr((m1[1] - T) / sd)
        dens = wt[0] * _normal_pdf(T, m0[0], sd) + wt[1] * _normal_pdf(T, m0[1], sd)
        return surv * dens

    lo = min(m0 + m1) - 10 * sd
    hi = max(m0 + m1) + 10 * sd
    val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-11, epsrel=1e-11, limit=200, points=sorted(set(m0)))
    return float(val)


def pick_sigma_base(target: float = 0.83, w: float = 1.8, b: float = -0.9,
                    candidates=(math.sqrt(2), 2.0)) -> float:
    """Candidate spread whose population AUC at (w, b) lands nearest ``target``."""
    return min(candidates, key=lambda sd: abs(true_auc_heterogeneous(w, b, sd) - target))


def figure2_sweep(w_grid, sigma_base: float = SIGMA_BASE) -> np.ndarray:
    """Rows of (w, auc) over ``w_grid``."""
    grid = np.asarray(list(w_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("w grid is empty")
    return np.column_stack([grid, [true_auc_heterogeneous(w, 0.0, sigma_base) for w in grid]])


def write_sweep_csv(rows: np.ndarray, path) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["w", "auc"])
        for w, a in rows:
            out.writerow([repr(float(w)), repr(float(a))])
    os.replace(tmp, path)


def gen_heterogeneous(n: int, w: float, b: float, seed: int, sigma_base: float = SIGMA_BASE,
                      n_het: int = 1, n_noise: int = 2, accuracy: float = FEATURE_ACCURACY) -> Dataset:
    """Sample the heterogeneous-feature toy.

    Labels are fair coin flips. Each of ``n_het`` binary features equals the
    label with probability ``accuracy``, independently given the label, and
    adds ``w`` to the score when set. ``n_noise`` uniform features carry no
    signal. Columns are ``het0.. , noise0..``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    base = rng.normal(np.where(y == 1, 1.0, -1.0), sigma_base)
    agree = rng.random((n, n_het)) < accuracy
    het = np.where(agree, y[:, None], 1 - y[:, None]).astype(float)
    noise = rng.random((n, n_noise))
    score = base + w * het.sum(axis=1) + b
    names = [f"het{j}" for j in range(n_het)] + [f"noise{j}" for j in range(n_noise)]
    return Dataset(np.hstack([het, noise]), y, score, "synthetic", names)


def overconfident_train_density(s, label: int, sigma_base: float = SIGMA_BASE):
    """Training-score density of the over-confident toy.

    For label 1: ``4/3 N(s; 1, sigma_base)`` for s >= 1 and ``2/3 N(s; 1, 1)``
    below; label 0 is the mirror image around 0.
    """
    s = np.asarray(s, dtype=float)
    d = s - 1.0 if label == 1 else -(s + 1.0)
    return np.where(d >= 0, (4 / 3) * _normal_pdf(d, 0.0, sigma_base), (2 / 3) * _normal_pdf(d, 0.0, 1.0))


def sample_overconfident_train(rng: np.random.Generator, n: int, label: int, sigma_base: float = SIGMA_BASE):
    """Rejection sampler for :func:`overconfident_train_density`.

    Proposal is the test law ``N(+-1, sigma_base)`` with envelope constant
    4/3. Returns ``n`` samples plus the accepted and proposed counts over all
    rounds; ``accepted / proposed`` estimates 3/4.
    """
    if sigma_base < 1:
        raise ValueError("envelope needs sigma_base >= 1")
    envelope = 4 / 3
    centre = 1.0 if label == 1 else -1.0
    kept = []
    accepted = proposed = 0
    while accepted < n:
        m = int(1.5 * (n - accepted)) + 16
        cand = rng.normal(centre, sigma_base, size=m)
        ratio = overconfident_train_density(cand, label, sigma_base) / (envelope * _normal_pdf(cand, centre, sigma_base))
        acc = cand[rng.random(m) < ratio]
        kept.append(acc)
        accepted += acc.size
        proposed += m
    return np.concatenate(kept)[:n], accepted, proposed


def gen_overconfident(n: int, seed: int, sigma_base: float = SIGMA_BASE) -> tuple[Dataset, Dataset]:
    """(train, test) score datasets of ``n`` rows each, balanced labels, no features.

    Test scores follow the true law; train scores the sharper training law.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)
    n1 = n // 2
    out = []
    for kind in ("train", "test"):
        y = np.concatenate([np.zeros(n - n1, dtype=np.int8), np.ones(n1, dtype=np.int8)])
        if kind == "train":
            s0, *_ = sample_overconfident_train(rng, n - n1, 0, sigma_base)
            s1, *_ = sample_overconfident_train(rng, n1, 1, sigma_base)
            s = np.concatenate([s0, s1])
        else:
            s = rng.normal(np.where(y == 1, 1.0, -1.0), sigma_base)
        perm = rng.permutation(n)
        out.append(Dataset(np.empty((n, 0)), y[perm], s[perm], kind, []))
    return out[0], out[1]
