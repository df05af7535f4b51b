"""Evaluation measures: subspace distance and average absolute correlation."""

import logging

import numpy as np

from .errors import DimensionMismatch, NonFiniteInput, RankDeficientBasis

logger = logging.getLogger(__name__)

_BASIS_RANK_TOL = 1e-10


def _orthonormal_basis(p, name):
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be a p x l matrix with l >= 1")
    if not np.isfinite(p).all():
        raise NonFiniteInput(f"{name} contains NaN or Inf entries")
    s = np.linalg.svd(p, compute_uv=False)
    if p.shape[1] > p.shape[0] or s[-1] <= _BASIS_RANK_TOL * s[0]:
        raise RankDeficientBasis(f"{name} does not have full column rank")
    q, _ = np.linalg.qr(p)
    return q


def _cos_principal_angles(q1, q2):
    """Cosines of the principal angles between two orthonormal bases."""
    return np.linalg.svd(q1.T @ q2, compute_uv=False)


def d_distance(p1, p2) -> float:
    """Span distance sqrt(1 - trace(Pi1 Pi2) / l1) between two subspaces.

    ``Pi_i`` is the orthogonal projector onto the column span of ``p_i``
    and ``l1`` the larger of the two column counts (inputs are swapped
    internally so the wider basis normalizes the trace). The value lies in
    [0, 1]; 0 means the narrower span is contained in the wider one, and
    for equal widths it means equal spans. Depends on the spans only, not
    on the particular bases.
    """
    q1 = _orthonormal_basis(p1, "first basis")
    q2 = _orthonormal_basis(p2, "second basis")
    if q1.shape[0] != q2.shape[0]:
        raise DimensionMismatch(
            f"ambient dimensions differ: {q1.shape[0]} vs {q2.shape[0]}"
        )
    if q1.shape[1] < q2.shape[1]:
        q1, q2 = q2, q1
    overlap = float((_cos_principal_angles(q1, q2) ** 2).sum())
    return float(np.sqrt(np.clip(1.0 - overlap / q1.shape[1], 0.0, 1.0)))


def avg_correlation(a, b) -> float:
    """Mean absolute pairwise correlation between matching columns.

    Columns with (numerically) zero variance contribute 0 and emit a
    warning through the module logger.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 2 or a.shape[0] < 2:
        raise DimensionMismatch("need 2-d inputs with at least two rows")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise NonFiniteInput("correlation inputs contain NaN or Inf entries")
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    sa = np.sqrt((ac * ac).sum(axis=0))
    sb = np.sqrt((bc * bc).sum(axis=0))
    scale_a = max(sa.max(), 1.0) if sa.size else 1.0
    scale_b = max(sb.max(), 1.0) if sb.size else 1.0
    total = 0.0
    for i in range(a.shape[1]):
        if sa[i] <= 1e-14 * scale_a or sb[i] <= 1e-14 * scale_b:
            logger.warning("column %d has zero variance; correlation counted as 0", i)
            continue
        total += abs(float(ac[:, i] @ bc[:, i]) / (sa[i] * sb[i]))
    return total / a.shape[1]
