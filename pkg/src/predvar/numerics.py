"""Dense linear-algebra kernel used by every estimation routine.

Thin wrappers around numpy's symmetric eigensolver and SVD least squares
that add the input validation, deterministic ordering, and sign
conventions the rest of the package relies on for reproducibility.
"""

from typing import NamedTuple

import numpy as np

from .errors import NonFiniteInput, NonSquare, RankDeficientDesign

# Relative eigenvalue/singular-value threshold for every rank decision
# made in this module. Callers may pass stricter thresholds of their own.
RANK_TOL = 1e-12


class SymEvd(NamedTuple):
    """Eigendecomposition of a symmetric matrix.

    ``eigenvalues`` are sorted non-increasing; ``eigenvectors`` holds the
    matching orthonormal columns with a deterministic sign: the entry of
    largest magnitude in each column is non-negative.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_finite_matrix(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise NonSquare(f"{name} must be a 2-d matrix, got ndim={a.ndim}")
    if a.size and not np.isfinite(a).all():
        raise NonFiniteInput(f"{name} contains NaN or Inf entries")
    return a


def canonical_signs(q):
    """Flip column signs so each column's largest-|entry| is non-negative.

    Ties are broken by the lowest row index (``argmax`` of the absolute
    column). Returns a new array; the input is not modified.
    """
    q = np.array(q, dtype=float, copy=True)
    if q.size == 0:
        return q
    lead = np.abs(q).argmax(axis=0)
    flip = q[lead, np.arange(q.shape[1])] < 0
    q[:, flip] *= -1.0
    return q


def sym_evd(a) -> SymEvd:
    """Eigendecomposition of a symmetric matrix with deterministic output.

    The input is symmetrized as ``(a + a.T) / 2`` before decomposition.
    Eigenvalues come back sorted non-increasing (stable across backends),
    eigenvectors carry the canonical sign convention.

    Raises
    ------
    NonSquare
        If ``a`` is not square or is far from symmetric.
    NonFiniteInput
        If ``a`` contains NaN/Inf.
    """
    a = _as_finite_matrix(a, "matrix")
    if a.shape[0] != a.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {a.shape}")
    if a.size:
        scale = max(1.0, float(np.abs(a).max()))
        skew = float(np.abs(a - a.T).max())
        if skew > 1e-8 * scale:
            raise NonSquare(
                f"matrix is not symmetric: max |a - a.T| = {skew:.3e} "
                f"exceeds 1e-8 * max(1, |a|_max)"
            )
    sym = 0.5 * (a + a.T)
    w, q = np.linalg.eigh(sym)
    order = np.argsort(-w, kind="stable")
    return SymEvd(w[order], canonical_signs(q[:, order]))


def _column_condition(x, name):
    """Singular-value based full-column-rank guard; returns the spectrum."""
    if x.shape[1] > x.shape[0]:
        raise RankDeficientDesign(
            f"{name} has more columns ({x.shape[1]}) than rows ({x.shape[0]})",
            cond=np.inf,
        )
    s = np.linalg.svd(x, compute_uv=False)
    if s.size == 0 or s[0] == 0.0 or s[-1] <= RANK_TOL * s[0]:
        cond = np.inf if (s.size == 0 or s[-1] == 0.0) else float(s[0] / s[-1])
        raise RankDeficientDesign(f"{name} is rank deficient", cond=cond)
    return s


def lstsq(x, y):
    """Least-squares solve ``min_b |y - x b|_F`` for a full-column-rank design.

    Solved through numpy's SVD-backed solver rather than the normal
    equations, for conditioning. Raises :class:`RankDeficientDesign` with a
    condition estimate when the smallest singular value of ``x`` falls
    below ``RANK_TOL`` times the largest.
    """
    x = _as_finite_matrix(x, "design matrix")
    y = _as_finite_matrix(y, "response matrix")
    if x.shape[0] != y.shape[0]:
        raise NonSquare(
            f"design and response row counts differ: {x.shape[0]} vs {y.shape[0]}"
        )
    _column_condition(x, "design matrix")
    beta, _, _, _ = np.linalg.lstsq(x, y, rcond=None)
    return beta


def projector(x):
    """Orthogonal projector onto the column space of a full-rank matrix.

    Equals ``x (x.T x)^-1 x.T`` but is built from an orthonormal basis of
    ``range(x)`` so idempotence and symmetry hold to machine precision.
    """
    x = _as_finite_matrix(x, "basis matrix")
    _column_condition(x, "basis matrix")
    q, _ = np.linalg.qr(x)
    return q @ q.T
