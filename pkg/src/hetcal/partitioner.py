"""Axis-aligned decision trees whose leaves partition the feature space.

Two split criteria are supported: Gini impurity (plain CART) and
``auc_gaussian``, which scores a split by the AUC obtained after Platt
calibrating each side, with per-label score distributions on each side
approximated by normals fitted from running sums.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate
from scipy.special import logit, ndtr

from .score_model import PROB_CLAMP, Dataset

VAR_FLOOR = 1e-12
CRITERIA = ("gini", "auc_gaussian")


@dataclass(frozen=True)
class TreeConfig:
    criterion: str = "gini"
    max_depth: int = 3
    min_samples_leaf: int = 1
    #: half-width of the two-point solve around logit(p) for auc_gaussian
    eps: float = 0.1
    #: "mass" weights each side's mixture component by its label count;
    #: "rate" uses p_l / (p_l + p_r) literally
    mixture_weights: str = "mass"
    #: features examined per split; None means all
    max_features: int | None = None

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        if self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("max_depth and min_samples_leaf must be >= 1")
        if self.mixture_weights not in ("mass", "rate"):
            raise ValueError("mixture_weights must be 'mass' or 'rate'")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class LeafStats:
    """Label counts and per-label score moments of the training rows in a node."""

    n: int
    n_pos: int
    mu0: float = 0.0
    var0: float = 0.0
    mu1: float = 0.0
    var1: float = 0.0

    @property
    def n_neg(self) -> int:
        return self.n - self.n_pos

    @property
    def p(self) -> float:
        return self.n_pos / self.n if self.n else 0.0

    @classmethod
    def from_scores(cls, scores, labels) -> "LeafStats":
        s = np.asarray(scores, dtype=float)
        y = np.asarray(labels) == 1
        s0, s1 = s[~y], s[y]
        return cls(int(s.size), int(y.sum()),
                   float(s0.mean()) if s0.size else 0.0, float(s0.var()) if s0.size else 0.0,
                   float(s1.mean()) if s1.size else 0.0, float(s1.var()) if s1.size else 0.0)


@dataclass
class Node:
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    leaf_id: int = -1
    stats: LeafStats | None = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf_id >= 0


class PartitionTree:
    """Fitted tree. Rows go left iff ``x[feature] <= threshold``.

    Leaves carry ids ``0 .. n_leaves-1`` in depth-first, left-first order.
    """

    def __init__(self, nodes: Sequence[Node], n_features: int, config: TreeConfig):
        self.nodes = list(nodes)
        self.n_features = n_features
        self.config = config
        self._leaf_nodes = sorted((n for n in self.nodes if n.is_leaf), key=lambda n: n.leaf_id)

    @property
    def n_leaves(self) -> int:
        return len(self._leaf_nodes)

    def leaf_stats(self, leaf_id: int) -> LeafStats:
        return self._leaf_nodes[leaf_id].stats

    @property
    def depth(self) -> int:
        def d(i):
            n = self.nodes[i]
            return 0 if n.is_leaf else 1 + max(d(n.left), d(n.right))
        return d(0)

    def assign(self, features) -> np.ndarray | int:
        """Leaf id of one feature vector or of each row of a 2-d array."""
        x = np.asarray(features, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[1]}")
        out = np.empty(x.shape[0], dtype=np.int64)
        stack = [(0, np.arange(x.shape[0]))]
        while stack:
            i, rows = stack.pop()
            node = self.nodes[i]
            if node.is_leaf:
                out[rows] = node.leaf_id
                continue
            go_left = x[rows, node.feature] <= node.threshold
            stack.append((node.left, rows[go_left]))
            stack.append((node.right, rows[~go_left]))
        return int(out[0]) if single else out

    def to_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            if n.is_leaf:
                nodes.append({"leaf": n.leaf_id, "stats": asdict(n.stats)})
            else:
                nodes.append({"feature": n.feature, "threshold": float(n.threshold), "left": n.left, "right": n.right})
        return {"n_features": self.n_features, "config": asdict(self.config), "nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionTree":
        nodes = []
        for nd in d["nodes"]:
            if "leaf" in nd:
                nodes.append(Node(leaf_id=int(nd["leaf"]), stats=LeafStats(**nd["stats"])))
            else:
                nodes.append(Node(int(nd["feature"]), float(nd["threshold"]), int(nd["left"]), int(nd["right"])))
        return cls(nodes, int(d["n_features"]), TreeConfig(**d["config"]))

    def __repr__(self):
        return f"PartitionTree(leaves={self.n_leaves}, depth={self.depth}, criterion={self.config.criterion!r})"


# --------------------------------------------------------------------------
# split criteria


def _gini(n, n_pos):
    n = np.asarray(n, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(n > 0, n_pos / n, 0.0)
    return 2.0 * p * (1.0 - p)


def gini_gain(parent, left, right) -> float:
    """Impurity decrease of a split; each argument is ``(n_pos, n_neg)``."""
    (pp, pn), (lp, ln), (rp, rn) = parent, left, right
    n, nl, nr = pp + pn, lp + ln, rp + rn
    if nl + nr != n:
        raise ValueError("children do not add up to the parent")
    return float(_gini(n, pp) - (nl / n) * _gini(nl, lp) - (nr / n) * _gini(nr, rp))


class PlattParams(NamedTuple):
    a: float
    b: float
    fallback: bool


def _platt_params_vec(mu0, var0, mu1, var1, p, eps):
    """Vectorised two-point solve; returns (a, b, fallback)."""
    mu0, var0, mu1, var1, p = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (mu0, var0, mu1, var1, p)))
    var0 = np.maximum(var0, VAR_FLOOR)
    var1 = np.maximum(var1, VAR_FLOOR)
    pc = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    # calibrated score s as a function of raw score z solves g(z) = s + L
    L = np.log((1 - pc) * np.sqrt(var1) / (pc * np.sqrt(var0)))
    A = 0.5 * (1.0 / var0 - 1.0 / var1)
    B = mu1 / var1 - mu0 / var0
    C = 0.5 * mu0 ** 2 / var0 - 0.5 * mu1 ** 2 / var1
    centre = logit(pc)
    ok = np.ones(A.shape, dtype=bool)
    zs = []
    for s in (centre - eps, centre + eps):
        c = C - s - L
        D = B * B - 4 * A * c
        ok &= D > 0
        rD = np.sqrt(np.maximum(D, 0.0))
        den = B + rD
        with np.errstate(invalid="ignore", divide="ignore"):
            # increasing-branch root, written to stay finite as A -> 0
            z = np.where(den > 0, -2 * c / den, (-B + rD) / (2 * A))
        ok &= np.isfinite(z)
        zs.append(z)
    with np.errstate(invalid="ignore", divide="ignore"):
        a = (2 * eps) / (zs[1] - zs[0])
    ok &= np.isfinite(a) & (a > 0)
    b = (centre - eps) - a * zs[0]
    vp = 0.5 * (var0 + var1)
    a_fb = (mu1 - mu0) / vp
    b_fb = centre - a_fb * 0.5 * (mu0 + mu1)
    return np.where(ok, a, a_fb), np.where(ok, b, b_fb), ~ok


def gaussian_platt_params(mu0: float, sigma0: float, mu1: float, sigma1: float, p: float,
                          eps: float = 0.1) -> PlattParams:
    """Platt parameters that calibrate a two-Gaussian score model.

    With label-0 scores ~ N(mu0, sigma0^2), label-1 scores ~ N(mu1, sigma1^2)
    and positive rate ``p``, finds (a, b) such that ``a*z + b`` equals the
    true log-odds at the two calibrated scores ``logit(p) -/+ eps``. The
    root on the increasing branch (a > 0) is returned. When none exists the
    pooled-variance linear discriminant is returned with ``fallback=True``.
    """
    if not (sigma0 > 0 and sigma1 > 0 and 0 < p < 1):
        raise ValueError("need sigma0, sigma1 > 0 and 0 < p < 1")
    a, b, fb = _platt_params_vec(mu0, sigma0 ** 2, mu1, sigma1 ** 2, p, eps)
    return PlattParams(float(a), float(b), bool(fb))


def _pair_prob(m1, s1, m0, s0):
    """P(X1 > X0) + P(X1 = X0)/2 for independent normals (sd 0 = point mass)."""
    sd = np.sqrt(s1 * s1 + s0 * s0)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = ndtr((m1 - m0) / sd)
    step = np.where(m1 > m0, 1.0, np.where(m1 == m0, 0.5, 0.0))
    return np.where(sd > 0, z, step)


def _side_components(n0, S0, Q0, n1, S1, Q1, eps):
    """Calibrated (mean, sd) of each label's scores on one side."""
    n0 = np.asarray(n0, float)
    n1 = np.asarray(n1, float)
    with np.errstate(invalid="ignore", divide="ignore"):
        mu0 = np.where(n0 > 0, S0 / n0, 0.0)
        mu1 = np.where(n1 > 0, S1 / n1, 0.0)
        v0 = np.where(n0 > 0, Q0 / n0 - mu0 ** 2, 0.0)
        v1 = np.where(n1 > 0, Q1 / n1 - mu1 ** 2, 0.0)
        p = n1 / (n0 + n1)
    point = (n0 == 0) | (n1 == 0) | (v0 < VAR_FLOOR) | (v1 < VAR_FLOOR)
    a, b, _ = _platt_params_vec(mu0, v0, mu1, v1, np.where(point, 0.5, p), eps)
    const = logit(np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP))
    m0 = np.where(point, const, a * mu0 + b)
    m1 = np.where(point, const, a * mu1 + b)
    s0 = np.where(point, 0.0, np.abs(a) * np.sqrt(np.maximum(v0, VAR_FLOOR)))
    s1 = np.where(point, 0.0, np.abs(a) * np.sqrt(np.maximum(v1, VAR_FLOOR)))
    return m0, s0, m1, s1, p


def _mixture_weights(nL0, nL1, nR0, nR1, pL, pR, how):
    nL0, nL1, nR0, nR1 = (np.asarray(v, float) for v in (nL0, nL1, nR0, nR1))
    with np.errstate(invalid="ignore", divide="ignore"):
        if how == "mass":
            w1 = nL1 / (nL1 + nR1)
            w0 = nL0 / (nL0 + nR0)
        else:
            w1 = pL / (pL + pR)
            w0 = (1 - pL) / ((1 - pL) + (1 - pR))
    return np.nan_to_num(w1, nan=0.5), np.nan_to_num(w0, nan=0.5)


def _split_auc_vec(left, right, eps, how):
    """Calibrated-mixture AUC of candidate splits; ``left``/``right`` are
    tuples of running sums (n0, S0, Q0, n1, S1, Q1)."""
    mL0, sL0, mL1, sL1, pL = _side_components(*left, eps)
    mR0, sR0, mR1, sR1, pR = _side_components(*right, eps)
    w1, w0 = _mixture_weights(left[0], left[3], right[0], right[3], pL, pR, how)

    def term(w, pp):
        # empty sides carry NaN components with zero weight
        return np.where(w > 0, w * pp, 0.0)

    return (term(w1 * w0, _pair_prob(mL1, sL1, mL0, sL0))
            + term(w1 * (1 - w0), _pair_prob(mL1, sL1, mR0, sR0))
            + term((1 - w1) * w0, _pair_prob(mR1, sR1, mL0, sL0))
            + term((1 - w1) * (1 - w0), _pair_prob(mR1, sR1, mR0, sR0)))


def _sums(st: LeafStats):
    n0, n1 = st.n_neg, st.n_pos
    return (n0, st.mu0 * n0, (st.var0 + st.mu0 ** 2) * n0, n1, st.mu1 * n1, (st.var1 + st.mu1 ** 2) * n1)


def gaussian_calibrated_auc(left: LeafStats, right: LeafStats, eps: float = 0.1,
                            mixture_weights: str = "mass", method: str = "closed_form") -> float:
    """AUC of the union of two sides after each is Platt calibrated.

    Each side's per-label scores are modelled as normals; after the affine
    Platt map they stay normal, so each label's calibrated scores form a
    two-component mixture. ``method="closed_form"`` sums the pairwise normal
    comparisons; ``method="quadrature"`` integrates TPR against the label-0
    density numerically. A side with one label or zero score variance
    becomes a point mass at ``logit(p_side)``.
    """
    if method == "closed_form":
        return float(_split_auc_vec(_sums(left), _sums(right), eps, mixture_weights))
    if method != "quadrature":
        raise ValueError("method must be 'closed_form' or 'quadrature'")
    L, R = _sums(left), _sums(right)
    mL0, sL0, mL1, sL1, pL = (float(v) for v in _side_components(*L, eps))
    mR0, sR0, mR1, sR1, pR = (float(v) for v in _side_components(*R, eps))
    if min(sL0, sL1, sR0, sR1) <= 0:
        return float(_split_auc_vec(L, R, eps, mixture_weights))
    w1, w0 = (float(v) for v in _mixture_weights(L[0], L[3], R[0], R[3], pL, pR, mixture_weights))

    def tpr(T):
        return w1 * ndtr((mL1 - T) / sL1) + (1 - w1) * ndtr((mR1 - T) / sR1)

    def dens0(T):
        return (w0 * math.exp(-0.5 * ((T - mL0) / sL0) ** 2) / (sL0 * math.sqrt(2 * math.pi))
                + (1 - w0) * math.exp(-0.5 * ((T - mR0) / sR0) ** 2) / (sR0 * math.sqrt(2 * math.pi)))

    sd = max(sL0, sL1, sR0, sR1)
    lo = min(mL0, mL1, mR0, mR1) - 10 * sd
    hi = max(mL0, mL1, mR0, mR1) + 10 * sd
    val, _ = integrate.quad(lambda T: tpr(T) * dens0(T), lo, hi, epsabs=1e-9, epsrel=1e-9, limit=200,
                            points=sorted({mL0, mR0}))
    return float(val)


# --------------------------------------------------------------------------
# growing


def _best_split_feature(x, y, s, cfg: TreeConfig):
    """Best (gain, threshold) on one feature; gain is -inf when no candidate."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = xs.size
    k = cfg.min_samples_leaf
    pos = np.arange(1, n)  # left size at each cut
    valid = (xs[1:] != xs[:-1]) & (pos >= k) & (n - pos >= k)
    if not valid.any():
        return -math.inf, 0.0
    cut = np.flatnonzero(valid)
    nl = cut + 1
    if cfg.criterion == "gini":
        cpos = np.cumsum(ys)[cut]
        tot = ys.sum()
        gain = _gini(n, tot) - nl / n * _gini(nl, cpos) - (n - nl) / n * _gini(n - nl, tot - cpos)
    else:
        ss = s[order]
        sums = []
        for lab in (0, 1):
            m = (ys == lab).astype(float)
            sums.append([np.cumsum(m)[cut], np.cumsum(m * ss)[cut], np.cumsum(m * ss * ss)[cut],
                         m.sum(), (m * ss).sum(), (m * ss * ss).sum()])
        left = (sums[0][0], sums[0][1], sums[0][2], sums[1][0], sums[1][1], sums[1][2])
        right = tuple(tot - part for tot, part in
                      zip((sums[0][3], sums[0][4], sums[0][5], sums[1][3], sums[1][4], sums[1][5]), left))
        gain = _split_auc_vec(left, right, cfg.eps, cfg.mixture_weights)
    j = int(np.argmax(gain))
    return float(gain[j]), float(0.5 * (xs[cut[j]] + xs[cut[j] + 1]))


def _node_score(y, s, cfg):
    """Criterion value of leaving the node unsplit."""
    if cfg.criterion == "gini":
        return 0.0
    y = np.asarray(y)
    st = LeafStats.from_scores(s, y)
    s0 = _sums(st)
    empty = (0.0,) * 6
    return float(_split_auc_vec(s0, empty, cfg.eps, cfg.mixture_weights))


def fit_tree(data: Dataset, cfg: TreeConfig = TreeConfig(), features: Sequence[int] | None = None,
             rng: np.random.Generator | None = None) -> PartitionTree:
    """Greedy top-down growth.

    Candidate thresholds are midpoints between consecutive distinct values.
    Gini splits are taken whenever the node is impure and the best gain is
    non-negative; ``auc_gaussian`` splits need the calibrated AUC to beat
    the unsplit node. Ties go to the lowest feature index, then the lowest
    threshold. ``features`` restricts the usable columns; with
    ``cfg.max_features`` each split examines a random subset drawn from ``rng``.
    """
    if len(data) == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    X, y, s = data.features, data.labels.astype(np.int64), data.scores
    allowed = np.arange(data.n_features) if features is None else np.asarray(sorted(features), dtype=np.int64)
    if cfg.max_features is not None and rng is None:
        rng = np.random.default_rng(0)
    nodes: list[Node] = []
    n_leaves = 0

    def grow(rows, depth):
        nonlocal n_leaves
        idx = len(nodes)
        nodes.append(Node())
        yr = y[rows]
        best = None
        can_split = depth < cfg.max_depth and rows.size >= 2 * cfg.min_samples_leaf and allowed.size
        if cfg.criterion == "gini":
            can_split = can_split and 0 < yr.sum() < yr.size
        if can_split:
            feats = allowed
            if cfg.max_features is not None and cfg.max_features < allowed.size:
                feats = np.sort(rng.choice(allowed, size=cfg.max_features, replace=False))
            base = _node_score(yr, s[rows], cfg)
            for f in feats:
                gain, thr = _best_split_feature(X[rows, f], yr, s[rows], cfg)
                gain -= base
                if best is None or gain > best[0]:
                    best = (gain, int(f), thr)
            if best is not None:
                ok = best[0] >= -1e-12 if cfg.criterion == "gini" else best[0] > 0
                if not ok or not math.isfinite(best[0]):
                    best = None
        if best is None:
            nodes[idx] = Node(leaf_id=n_leaves, stats=LeafStats.from_scores(s[rows], yr))
            n_leaves += 1
            return idx
        _, f, thr = best
        go_left = X[rows, f] <= thr
        left = grow(rows[go_left], depth + 1)
        right = grow(rows[~go_left], depth + 1)
        nodes[idx] = Node(feature=f, threshold=thr, left=left, right=right)
        return idx

    grow(np.arange(len(data)), 0)
    return PartitionTree(nodes, data.n_features, cfg)


def fit_forest(data: Dataset, cfg: TreeConfig = TreeConfig(), n_trees: int = 10, seed: int = 0,
               bootstrap: bool = True) -> list[PartitionTree]:
    """Bagged trees with sqrt(d) features examined per split.

    Each tree is grown on a bootstrap resample (``bootstrap=True``) using its
    own child generator spawned from ``seed``.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if len(data) == 0:
        raise ValueError("cannot fit a forest on an empty dataset")
    k = max(1, int(math.isqrt(data.n_features))) if data.n_features else None
    tcfg = replace(cfg, max_features=k if cfg.max_features is None else cfg.max_features)
    trees = []
    for child in np.random.default_rng(seed).spawn(n_trees):
        sample = data.subset(child.integers(0, len(data), len(data))) if bootstrap else data
        trees.append(fit_tree(sample, tcfg, rng=child))
    return trees
