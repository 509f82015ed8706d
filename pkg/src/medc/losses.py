"""The four training objectives and per-expert variance-target construction.

Total objective: lambda1 * sum_e L_mu + lambda2 * sum_e L_cls +
lambda3 * sum_e L_sigma, summed over experts.
"""

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .model import INVERSE, LONG_TAILED, UNIFORM
from .sampling import reversed_frequencies


@dataclass
class LossWeights:
    lambda1: float = 0.8
    lambda2: float = 1.0
    lambda3: float = 0.4

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.lambda1 == self.lambda2 == self.lambda3 == 0:
            raise ValueError("at least one loss weight must be positive")


def gamma_targets(stats, expert_kind, a=0.01, b=1.0, uniform_const=0.5):
    """Per-class variance targets for one expert.

    Uniform expert: constant. Long-tailed expert: min-max normalization of
    the label frequencies into [a, b], so head classes get large regions.
    Inverse expert: same normalization applied to the reversed frequencies.
    Degenerate all-equal frequencies fall back to (a+b)/2.
    """
    if not b > a > 0:
        raise ValueError(f"need b > a > 0, got ({a}, {b})")
    C = len(stats.frequencies)
    if expert_kind == UNIFORM:
        return np.full(C, uniform_const)
    if expert_kind == LONG_TAILED:
        w = stats.frequencies
    elif expert_kind == INVERSE:
        w = reversed_frequencies(stats.frequencies)
    else:
        raise ValueError(f"unknown expert kind {expert_kind!r}")
    lo, hi = w.min(), w.max()
    if hi == lo:
        return np.full(C, (a + b) / 2.0)
    return a + (b - a) * (w - lo) / (hi - lo)


def mean_contrastive_loss(mus, labels, tau=1.0):
    """InfoNCE-style loss pulling same-class mean estimates together.

    For each anchor with at least one in-batch positive (>= 1 shared label)
    and one negative (disjoint labels): the positive is the nearest one by
    dot product, the negatives are all label-disjoint rows; rows with
    partial label overlap join neither set. Returns the mean of
    -log softmax over eligible anchors, 0 if none are eligible.
    """
    labels = np.asarray(labels).astype(bool)
    B = labels.shape[0]
    if B < 2:
        return Tensor(0.0)
    overlap = (labels.astype(np.int64) @ labels.T.astype(np.int64)) > 0
    share = overlap.copy()
    np.fill_diagonal(share, False)
    disjoint = ~overlap
    eligible = share.any(axis=1) & disjoint.any(axis=1)
    if not eligible.any():
        return Tensor(0.0)

    sims = ag.matmul(mus, ag.transpose(mus))
    sv = sims.data
    # nearest positive by dot product; argmax breaks ties by lowest index
    best = np.where(share, sv, -np.inf).argmax(axis=1)

    rows = np.flatnonzero(eligible)
    mask = disjoint[rows].astype(np.float64)
    mask[np.arange(rows.size), best[rows]] = 1.0
    # constant per-anchor shift keeps exp bounded without touching gradients
    shift = np.where(mask > 0, sv[rows], -np.inf).max(axis=1, keepdims=True)
    z = ag.mul(ag.sub(sims[rows], Tensor(shift)), 1.0 / tau)
    e = ag.mul(ag.exp(z), Tensor(mask))
    lse = ag.add(ag.log(ag.sum_along(e, axis=1)), Tensor(shift[:, 0] / tau))
    pos = ag.mul(sims[rows, best[rows]], 1.0 / tau)
    return ag.mean_along(ag.sub(lse, pos))


def classification_loss(p, y, strict_positive_only=False):
    """Multi-label binary cross-entropy, averaged over classes and samples.

    strict_positive_only keeps only the positive-label term (the degenerate
    form; for fidelity experiments only).
    """
    y = np.asarray(y, dtype=np.float64)
    pc = ag.clamp(p, 1e-7, 1.0 - 1e-7)
    pos = ag.mul(Tensor(y), ag.log(pc))
    if strict_positive_only:
        return ag.mul(ag.mean_along(pos), -1.0)
    neg = ag.mul(Tensor(1.0 - y), ag.log(ag.sub(1.0, pc)))
    return ag.mul(ag.mean_along(ag.add(pos, neg)), -1.0)


def variance_region_loss(sigmas, labels, gamma):
    """Squared deviation of per-dimension variance from the class target.

    Mean over samples, their positive labels, and embedding dimensions of
    (sigma_j^2 - gamma_c)^2.
    """
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels[None, :]
    rows, cols = np.nonzero(labels)
    if rows.size == 0:
        return Tensor(0.0)
    sq = ag.square(sigmas if sigmas.ndim == 2 else ag.reshape(sigmas, (1, -1)))
    sel = sq[rows]                              # (P, d)
    targets = Tensor(np.asarray(gamma)[cols][:, None])
    return ag.mean_along(ag.square(ag.sub(sel, targets)))


def total_loss(per_expert_terms, weights):
    """weights-weighted sum of per-expert (L_mu, L_cls, L_sigma) triples."""
    l_mu = l_cls = l_sig = None
    for (m, c, s) in per_expert_terms:
        l_mu = m if l_mu is None else ag.add(l_mu, m)
        l_cls = c if l_cls is None else ag.add(l_cls, c)
        l_sig = s if l_sig is None else ag.add(l_sig, s)
    return ag.add(ag.add(ag.mul(l_mu, weights.lambda1), ag.mul(l_cls, weights.lambda2)),
                  ag.mul(l_sig, weights.lambda3))
