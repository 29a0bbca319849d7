"""Ground truth for the optimality results on small finite distributions.

The optimal per-partition transform is computed directly from the atom
masses and compared against exhaustive search over every weak ordering of
the (score, partition) keys. Ordering equivalence is checked in exact
rational arithmetic.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import metrics
from .calibrators import Table
from .score_model import DiscreteDistribution

MAX_BRUTE_KEYS = 8


def _key_masses(dist: DiscreteDistribution):
    score, part, j0, j1 = dist.keys()
    m0, m1 = dist.label_mass(0), dist.label_mass(1)
    c0 = j0 / m0 if m0 > 0 else np.zeros_like(j0)
    c1 = j1 / m1 if m1 > 0 else np.zeros_like(j1)
    return score, part, c0, c1, j0, j1


def optimal_transform(dist: DiscreteDistribution) -> Table:
    """``p1 / (p1 + p0)`` per key from label-conditional masses; 0 where both vanish."""
    score, part, c0, c1, _, _ = _key_masses(dist)
    tot = c0 + c1
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.where(tot > 0, c1 / tot, 0.0)
    return Table({(float(s), int(p)): float(v) for s, p, v in zip(score, part, val)})


def posterior_transform(dist: DiscreteDistribution) -> Table:
    """P(y=1 | score, partition) per key; 0 where the key has no mass."""
    score, part, _, _, j0, j1 = _key_masses(dist)
    tot = j0 + j1
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.where(tot > 0, j1 / tot, 0.0)
    return Table({(float(s), int(p)): float(v) for s, p, v in zip(score, part, val)})


@lru_cache(maxsize=None)
def weak_orderings(k: int) -> np.ndarray:
    """Every weak ordering of ``k`` items as rows of ranks (ties share a rank).

    Built as set partitions (restricted growth strings) times orderings of
    their blocks, so the row count is the ordered Bell number of ``k``.
    """
    if k == 0:
        return np.zeros((1, 0), dtype=np.int8)
    rows = []

    def rgs(prefix, m):
        if len(prefix) == k:
            blocks = np.asarray(prefix)
            perms = np.asarray(list(itertools.permutations(range(m))), dtype=np.int8)
            rows.append(perms[:, blocks])
            return
        for b in range(m + 1):
            rgs(prefix + [b], max(m, b + 1))

    rgs([0], 1)
    out = np.concatenate(rows)
    out.setflags(write=False)
    return out


def _ordering_aucs(ranks: np.ndarray, c0: np.ndarray, c1: np.ndarray) -> np.ndarray:
    w = np.outer(c0, c1)  # w[k, l] = p0(key k) * p1(key l)
    tie = metrics.TIE_WEIGHT
    out = np.empty(ranks.shape[0])
    step = 65536
    for lo in range(0, ranks.shape[0], step):
        r = ranks[lo:lo + step].astype(np.int16)
        above = r[:, None, :] > r[:, :, None]
        same = r[:, None, :] == r[:, :, None]
        out[lo:lo + step] = np.einsum("fkl,kl->f", above + tie * same, w)
    return out


class BruteForceResult(NamedTuple):
    max_auc: float
    ranks: tuple
    keys: tuple


def brute_force_max_auc(dist: DiscreteDistribution) -> BruteForceResult:
    """Maximum partition-calibrated AUC over all weak orderings of the keys.

    The search scores every ordering in bulk; the winning ordering is then
    realised as an integer-valued table transform and re-scored with
    :func:`metrics.partition_calibrated_auc`.
    """
    score, part, c0, c1, _, _ = _key_masses(dist)
    k = score.size
    if k > MAX_BRUTE_KEYS:
        raise ValueError(f"brute force supports at most {MAX_BRUTE_KEYS} keys, got {k}")
    ranks = weak_orderings(k)
    best = int(np.argmax(_ordering_aucs(ranks, c0, c1)))
    keys = tuple((float(s), int(p)) for s, p in zip(score, part))
    witness = tuple(int(r) for r in ranks[best])
    t = Table({key: float(r) for key, r in zip(keys, witness)}, is_probability=False)
    return BruteForceResult(metrics.partition_calibrated_auc(dist, t), witness, keys)


def _exact_key_masses(dist: DiscreteDistribution):
    score, part, j0, j1 = dist.keys()
    f0 = [Fraction(float(v)) for v in j0]
    f1 = [Fraction(float(v)) for v in j1]
    return list(zip(score.tolist(), part.tolist())), f0, f1, sum(f0), sum(f1)


def _cmp(a, b) -> int:
    return (a > b) - (a < b)


def find_ordering_violation(dist: DiscreteDistribution):
    """First key pair whose likelihood-ratio order differs from its posterior order, else None."""
    keys, f0, f1, M0, M1 = _exact_key_masses(dist)
    lr, post = [], []
    for a, b in zip(f0, f1):
        tot = a + b
        if a == 0:
            lr.append(math.inf if b > 0 else None)
        else:
            lr.append((b / M1) / (a / M0))
        post.append(b / tot if tot > 0 else None)
    live = [i for i in range(len(keys)) if post[i] is not None]
    for i, j in itertools.combinations(live, 2):
        if _cmp(lr[i], lr[j]) != _cmp(post[i], post[j]):
            return keys[i], keys[j]
    return None


def check_ordering_equivalence(dist: DiscreteDistribution) -> bool:
    """Likelihood ratio p1/p0 (infinite where p0 = 0) and P(y=1 | key) order keys identically."""
    return find_ordering_violation(dist) is None


def coarsen(dist: DiscreteDistribution, coarse_of) -> DiscreteDistribution:
    """Relabel partitions through ``coarse_of``.

    ``coarse_of`` is either a mapping fine id -> coarse id or a per-atom
    array of coarse ids. A per-atom array must send every fine id to a single
    coarse id, otherwise the fine partition does not refine the coarse one.
    """
    if isinstance(coarse_of, Mapping):
        missing = set(np.unique(dist.partition).tolist()) - set(coarse_of)
        if missing:
            raise ValueError(f"no coarse partition given for fine ids {sorted(missing)}")
        coarse = np.asarray([coarse_of[int(p)] for p in dist.partition], dtype=np.int64)
    else:
        coarse = np.asarray(coarse_of, dtype=np.int64)
        if coarse.shape != dist.partition.shape:
            raise ValueError("per-atom coarse assignment has the wrong length")
        for fid in np.unique(dist.partition):
            if np.unique(coarse[dist.partition == fid]).size > 1:
                raise ValueError(f"fine partition {int(fid)} straddles coarse partitions; not a refinement")
    return DiscreteDistribution(dist.score, coarse, dist.label, dist.prob)


def check_refinement_monotonicity(dist: DiscreteDistribution, coarse_of, tol: float = 1e-12) -> bool:
    """Optimal AUC on the fine partition is at least the optimal AUC on the coarse one."""
    coarse = coarsen(dist, coarse_of)
    fine_auc = metrics.partition_calibrated_auc(dist, optimal_transform(dist))
    coarse_auc = metrics.partition_calibrated_auc(coarse, optimal_transform(coarse))
    return fine_auc >= coarse_auc - tol


def pair_terms(values: Sequence[float]) -> np.ndarray:
    """T[i, j] = 1{v_i > v_j} + tie * 1{v_i = v_j}: the pair comparison inside the AUC."""
    v = np.asarray(values, dtype=float)
    return (v[:, None] > v[None, :]) + metrics.TIE_WEIGHT * (v[:, None] == v[None, :])


# --------------------------------------------------------------------------
# random instances


def random_instance(rng: np.random.Generator, max_keys: int = 6, max_partitions: int = 3,
                    n_scores: int = 4, alpha: float = 1.0) -> DiscreteDistribution:
    """Random distribution on 2..max_keys keys and 1..max_partitions partitions.

    Scores come from a small integer grid so partitions share score values.
    Each key carries each label with probability 0.75; masses are symmetric
    Dirichlet(``alpha``) over the present atoms.
    """
    n_part = int(rng.integers(1, max_partitions + 1))
    grid = [(s, p) for s in range(n_scores) for p in range(n_part)]
    n_keys = int(rng.integers(2, min(max_keys, len(grid)) + 1))
    keys = [grid[i] for i in rng.choice(len(grid), size=n_keys, replace=False)]
    has = rng.random((n_keys, 2)) < 0.75
    has[~has.any(axis=1), rng.integers(0, 2)] = True
    for lab in (0, 1):
        if not has[:, lab].any():
            has[rng.integers(0, n_keys), lab] = True
    atoms = [(s, p, lab) for (s, p), h in zip(keys, has) for lab in (0, 1) if h[lab]]
    prob = rng.dirichlet(np.full(len(atoms), alpha))
    s, p, y = zip(*atoms)
    return DiscreteDistribution(np.asarray(s, float), p, y, prob, normalize=True)


def random_table(rng: np.random.Generator, dist: DiscreteDistribution, levels: int | None = None) -> Table:
    """Arbitrary transform on the keys of ``dist``; ``levels`` draws integer values to force ties."""
    score, part, _, _ = dist.keys()
    if levels is None:
        vals = rng.random(score.size)
    else:
        vals = rng.integers(0, levels, size=score.size).astype(float)
    return Table({(float(s), int(p)): float(v) for s, p, v in zip(score, part, vals)}, is_probability=False)


def random_refinement(rng: np.random.Generator, dist: DiscreteDistribution) -> dict:
    """Random merge of the fine partition ids into coarse ones."""
    fine = np.unique(dist.partition)
    n_coarse = int(rng.integers(1, fine.size + 1))
    return {int(f): int(rng.integers(0, n_coarse)) for f in fine}


# --------------------------------------------------------------------------
# property suite


def dist_to_dict(dist: DiscreteDistribution) -> dict:
    return {"score": dist.score.tolist(), "partition": dist.partition.tolist(),
            "label": dist.label.tolist(), "prob": dist.prob.tolist()}


def _table_dict(t: Table) -> list:
    return t.to_dict()["entries"]


def _perturbed_posterior(rng, dist, post: Table) -> Table:
    score, part, _, _ = dist.keys()
    base = post(score, part)
    noise = rng.normal(0.0, 0.2, size=base.size) if rng.random() < 0.5 else rng.uniform(-1, 1, size=base.size)
    vals = np.clip(base + noise, 0.0, 1.0)
    return Table({(float(s), int(p)): float(v) for s, p, v in zip(score, part, vals)})


def _check_optimal_equals_brute(rng, dist, tol):
    best = brute_force_max_auc(dist).max_auc
    got = metrics.partition_calibrated_auc(dist, optimal_transform(dist))
    return abs(best - got) <= tol, {"brute_force": best, "optimal_transform": got}


def _check_ordering(rng, dist, tol):
    bad = find_ordering_violation(dist)
    return bad is None, {"keys": bad}


def _check_roc_area(rng, dist, tol):
    t = random_table(rng, dist, levels=int(rng.integers(2, 5)) if rng.random() < 0.5 else None)
    area = metrics.roc_curve(dist, t).area()
    direct = metrics.partition_calibrated_auc(dist, t)
    return abs(area - direct) <= tol, {"transform": _table_dict(t), "roc_area": area, "auc": direct}


def _check_roc_containment(rng, dist, tol):
    t = random_table(rng, dist, levels=int(rng.integers(2, 5)) if rng.random() < 0.5 else None)
    star = optimal_transform(dist)
    c_star, c_t = metrics.roc_curve(dist, star), metrics.roc_curve(dist, t)
    grid = np.unique(np.concatenate([c_star.fpr, c_t.fpr, np.linspace(0, 1, 201)]))
    gap = float(np.min(c_star.tpr_at(grid) - c_t.tpr_at(grid)))
    pr_star, pr_t = metrics.pr_auc(dist, star), metrics.pr_auc(dist, t)
    ok = gap >= -tol and pr_star >= pr_t - tol
    return ok, {"transform": _table_dict(t), "min_tpr_gap": gap, "pr_auc_optimal": pr_star, "pr_auc_other": pr_t}


def _check_log_loss(rng, dist, tol, perturbations=100):
    post = posterior_transform(dist)
    best = metrics.log_loss(dist, post)
    for _ in range(perturbations):
        t = _perturbed_posterior(rng, dist, post)
        other = metrics.log_loss(dist, t)
        if other < best - tol:
            return False, {"transform": _table_dict(t), "log_loss_posterior": best, "log_loss_other": other}
    return True, {}


def _check_refinement(rng, dist, tol):
    coarse_of = random_refinement(rng, dist)
    return check_refinement_monotonicity(dist, coarse_of, tol), {"coarse_of": {str(k): v for k, v in coarse_of.items()}}


def _check_pair_terms(rng, dist, tol):
    score, part, _, _ = dist.keys()
    t = random_table(rng, dist, levels=int(rng.integers(1, 4)))
    T = pair_terms(t(score, part))
    err = float(np.max(np.abs(T + T.T - 1.0)))
    return err <= tol, {"transform": _table_dict(t), "max_error": err}


PROPERTIES = {
    "optimal_transform_attains_brute_force_max": _check_optimal_equals_brute,
    "likelihood_ratio_and_posterior_orders_agree": _check_ordering,
    "roc_area_equals_auc": _check_roc_area,
    "optimal_roc_contains_others_and_pr_auc_optimal": _check_roc_containment,
    "posterior_minimises_log_loss": _check_log_loss,
    "refinement_never_lowers_optimal_auc": _check_refinement,
    "pair_terms_sum_to_one": _check_pair_terms,
}


def property_suite(seed: int = 0, trials: int = 200, max_keys: int = 6, tol: float = 1e-12,
                   properties=None) -> dict:
    """Run each property on ``trials`` random instances; stop a property at its first failure.

    Every property draws from its own generator spawned from ``seed``, so
    results do not depend on which other properties run.
    """
    names = list(PROPERTIES) if properties is None else list(properties)
    children = dict(zip(PROPERTIES, np.random.default_rng(seed).spawn(len(PROPERTIES))))
    results = {}
    for name in names:
        rng = children[name]
        check = PROPERTIES[name]
        entry = {"passed": True, "checked": 0, "counterexample": None}
        for trial in range(trials):
            dist = random_instance(rng, max_keys=max_keys)
            ok, detail = check(rng, dist, tol)
            entry["checked"] += 1
            if not ok:
                entry["passed"] = False
                entry["counterexample"] = {"trial": trial, "distribution": dist_to_dict(dist), **detail}
                break
        results[name] = entry
    return {"seed": seed, "trials": trials, "max_keys": max_keys, "tie_weight": metrics.TIE_WEIGHT,
            "passed": all(r["passed"] for r in results.values()), "properties": results}
