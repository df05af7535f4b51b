"""Fitted model container plus simulation, prediction, and likelihood.

The model splits a p-dimensional series into a low-dimensional dynamic
part driven by a latent VAR and a serially independent static part. The
split is encoded by loadings ``P``/``Pbar`` and weights ``R``/``Rbar``
forming a (generally oblique) resolution of the identity:

    y_k - mean = P v_k + Pbar eps_bar_k,   v_k = R.T (y_k - mean)

with v following a VAR(s) with coefficients ``B[0] .. B[s-1]``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import numerics
from .errors import (
    DimensionMismatch,
    InsufficientHistory,
    NotPsd,
    SingularCrossProduct,
    UnstableDynamics,
)

_IDENTITY_TOL = 1e-6


@dataclass(frozen=True)
class NormalizationTransform:
    """Whitening transform derived from the training sample covariance.

    ``U`` (p x r) and the positive eigenvalues ``D`` (length r) come from
    the eigendecomposition of the covariance of the centered training
    rows; ``Utilde`` (p x (p-r)) spans the null directions. Normalized
    coordinates are ``y* = (y - mean) U D^{-1/2}`` row-wise.
    """

    U: np.ndarray
    D: np.ndarray
    Utilde: np.ndarray
    mean: np.ndarray
    rank_tol: float

    @property
    def p(self) -> int:
        return self.U.shape[0]

    @property
    def r(self) -> int:
        return self.U.shape[1]

    def to_normalized(self, y):
        """Map raw rows to the r-dimensional normalized coordinates."""
        y = np.asarray(y, dtype=float)
        return (y - self.mean) @ (self.U / np.sqrt(self.D))

    def validate(self):
        basis = np.hstack([self.U, self.Utilde])
        gram = basis.T @ basis
        if np.abs(gram - np.eye(self.p)).max() > 1e-8:
            raise ValueError("[U Utilde] is not orthonormal")
        if self.D.size and self.D.min() <= self.rank_tol * self.D.max():
            raise ValueError("stored eigenvalues violate the rank threshold")
        if np.any(np.diff(self.D) > 0):
            raise ValueError("stored eigenvalues are not non-increasing")


@dataclass(frozen=True)
class RrvarView:
    """Reduced-rank VAR form of a fitted model: lag matrices A_j = P B_j R.T."""

    A: list
    Sigma_e: np.ndarray

    def one_step_centered(self, history):
        """One-step predictions sum_j A_j y_{k-j} on centered history rows.

        Returns predictions for times s+1..N, i.e. ``rows - s`` rows
        aligned with the tail of the input.
        """
        history = np.asarray(history, dtype=float)
        s = len(self.A)
        if history.shape[0] < s + 1:
            raise InsufficientHistory(f"need at least {s + 1} rows, got {history.shape[0]}")
        n = history.shape[0]
        pred = np.zeros((n - s, history.shape[1]))
        for j, a in enumerate(self.A, start=1):
            pred += history[s - j : n - j] @ a.T
        return pred


@dataclass(frozen=True)
class PredVarModel:
    """Complete fitted model: oblique split, latent VAR, noise covariances."""

    p: int
    ell: int
    s: int
    r: int
    mean: np.ndarray
    P: np.ndarray
    Pbar: np.ndarray
    R: np.ndarray
    Rbar: np.ndarray
    B: list
    Sigma_eps: np.ndarray
    Sigma_epsbar: np.ndarray
    Sigma_e: np.ndarray
    norm: Optional[NormalizationTransform] = field(default=None, repr=False)

    # -- structural checks -------------------------------------------------

    def validate(self):
        """Check the oblique-decomposition identities and covariance shapes.

        Raises ``ValueError`` on violation; returns self for chaining.
        """
        p, ell, s, r = self.p, self.ell, self.s, self.r
        if not (1 <= ell <= r <= p and s >= 1):
            raise ValueError(f"sizes violate 1 <= ell <= r <= p, s >= 1: {ell}, {r}, {p}, {s}")
        if self.P.shape != (p, ell) or self.R.shape != (p, ell):
            raise ValueError("P/R shape mismatch")
        if self.Pbar.shape != (p, p - ell) or self.Rbar.shape != (p, p - ell):
            raise ValueError("Pbar/Rbar shape mismatch")
        if len(self.B) != s or any(b.shape != (ell, ell) for b in self.B):
            raise ValueError("B must hold s matrices of shape (ell, ell)")
        weights = np.hstack([self.R, self.Rbar])
        loadings = np.hstack([self.P, self.Pbar])
        gram = weights.T @ loadings
        if np.abs(gram - np.eye(p)).max() > _IDENTITY_TOL:
            raise ValueError("[R Rbar].T [P Pbar] deviates from the identity")
        resolution = self.P @ self.R.T + self.Pbar @ self.Rbar.T
        if np.abs(resolution - np.eye(p)).max() > _IDENTITY_TOL:
            raise ValueError("P R.T + Pbar Rbar.T deviates from the identity")
        for name, cov in (
            ("Sigma_eps", self.Sigma_eps),
            ("Sigma_epsbar", self.Sigma_epsbar),
            ("Sigma_e", self.Sigma_e),
        ):
            if cov.size == 0:
                continue
            if np.abs(cov - cov.T).max() > 1e-8 * max(1.0, np.abs(cov).max()):
                raise ValueError(f"{name} is not symmetric")
            w = np.linalg.eigvalsh(0.5 * (cov + cov.T))
            if w.min() < -1e-8 * max(1.0, w.max(initial=0.0)):
                raise ValueError(f"{name} is not positive semi-definite")
        w_eps = np.linalg.eigvalsh(0.5 * (self.Sigma_eps + self.Sigma_eps.T))
        if w_eps.size and (w_eps.min() < -1e-8 or w_eps.max() > 1.0 + 1e-8):
            raise ValueError("Sigma_eps eigenvalues fall outside [0, 1]")
        return self

    @property
    def spectrum(self) -> np.ndarray:
        """Per-DLV predictability (one-step R^2), read off Sigma_eps."""
        return 1.0 - np.diag(self.Sigma_eps)

    # -- data-facing operations --------------------------------------------

    def _check_width(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim != 2 or y.shape[1] != self.p:
            raise DimensionMismatch(
                f"expected rows of width {self.p}, got shape {y.shape}"
            )
        return y

    def latent_scores(self, y):
        """Latent series v_k = R.T (y_k - mean), one row per time step."""
        return (self._check_width(y) - self.mean) @ self.R

    def static_noise(self, y):
        """Static component eps_bar_k = Rbar.T (y_k - mean)."""
        return (self._check_width(y) - self.mean) @ self.Rbar

    def predict_one_step(self, y_history):
        """One-step predictions (v_hat, y_hat) for times s+1..N.

        Each prediction uses only the s preceding observations, so the
        output has ``rows - s`` rows aligned with input rows s..N-1.
        """
        y = self._check_width(y_history)
        n = y.shape[0]
        if n < self.s + 1:
            raise InsufficientHistory(
                f"need at least s+1 = {self.s + 1} rows, got {n}"
            )
        v = self.latent_scores(y)
        v_hat = np.zeros((n - self.s, self.ell))
        for j, b in enumerate(self.B, start=1):
            v_hat += v[self.s - j : n - j] @ b.T
        y_hat = self.mean + v_hat @ self.P.T
        return v_hat, y_hat

    def simulate(self, n: int, seed: int):
        """Draw n rows from the generative model, reproducibly for a seed.

        Innovations are Gaussian with the stored covariances; the latent
        recursion starts from zeros. Raises :class:`UnstableDynamics` when
        the companion matrix has spectral radius >= 1 and :class:`NotPsd`
        for invalid covariances.
        """
        radius = companion_spectral_radius(self.B)
        if radius >= 1.0:
            raise UnstableDynamics(
                f"companion spectral radius {radius:.6f} >= 1; cannot simulate"
            )
        l_eps = _psd_factor(self.Sigma_eps, "Sigma_eps")
        l_bar = _psd_factor(self.Sigma_epsbar, "Sigma_epsbar")
        rng = np.random.default_rng(seed)
        eps = rng.standard_normal((n, self.ell)) @ l_eps.T
        eps_bar = rng.standard_normal((n, self.p - self.ell)) @ l_bar.T
        v = np.zeros((n, self.ell))
        for k in range(n):
            acc = eps[k].copy()
            for j, b in enumerate(self.B, start=1):
                if k - j >= 0:
                    acc += b @ v[k - j]
            v[k] = acc
        return self.mean + v @ self.P.T + eps_bar @ self.Pbar.T

    def to_rrvar(self) -> RrvarView:
        """Equivalent reduced-rank VAR form with A_j = P B_j R.T."""
        return RrvarView(
            A=[self.P @ b @ self.R.T for b in self.B],
            Sigma_e=self.Sigma_e,
        )

    def log_likelihood(self, y) -> float:
        """Gaussian one-step-ahead log likelihood of new data under the model.

        Evaluated in the r-dimensional normalized coordinates: directions
        the training data never excited carry no density and are excluded.
        Returns ``-0.5 * (L + N * r * log(2 pi))`` where ``L`` is the sum
        of the innovation log-determinant and quadratic-form terms over
        the N = rows - s predictable samples.
        """
        if self.norm is None:
            raise ValueError("model carries no normalization transform")
        y = self._check_width(y)
        if y.shape[0] < self.s + 1:
            raise InsufficientHistory(
                f"need at least s+1 = {self.s + 1} rows, got {y.shape[0]}"
            )
        n_eff = y.shape[0] - self.s
        white = self.norm.U / np.sqrt(self.norm.D)
        y_star = (y - self.mean) @ white
        p_star = white.T @ self.P
        v_hat, _ = self.predict_one_step(y)
        resid = y_star[self.s :] - v_hat @ p_star.T
        sigma_star = white.T @ self.Sigma_e @ white
        evd = numerics.sym_evd(sigma_star)
        keep = evd.eigenvalues > numerics.RANK_TOL * max(
            evd.eigenvalues.max(initial=0.0), 0.0
        )
        logdet = float(np.log(evd.eigenvalues[keep]).sum())
        z = resid @ evd.eigenvectors[:, keep]
        quad = float((z * z / evd.eigenvalues[keep]).sum())
        objective = n_eff * logdet + quad
        return -0.5 * (objective + n_eff * self.r * np.log(2.0 * np.pi))


def companion_spectral_radius(b_list) -> float:
    """Spectral radius of the VAR companion matrix for lag matrices B_j."""
    s = len(b_list)
    ell = b_list[0].shape[0]
    comp = np.zeros((s * ell, s * ell))
    for j, b in enumerate(b_list):
        comp[:ell, j * ell : (j + 1) * ell] = b
    if s > 1:
        comp[ell:, : (s - 1) * ell] = np.eye((s - 1) * ell)
    if comp.size == 0:
        return 0.0
    return float(np.abs(np.linalg.eigvals(comp)).max())


def _psd_factor(cov, name):
    """Factor L with L L.T = cov for a PSD matrix, via eigendecomposition."""
    cov = np.asarray(cov, dtype=float)
    if cov.size == 0:
        return np.zeros(cov.shape)
    evd = numerics.sym_evd(cov)
    floor = -1e-10 * max(1.0, evd.eigenvalues.max(initial=0.0))
    if evd.eigenvalues.min() < floor:
        raise NotPsd(f"{name} has eigenvalue {evd.eigenvalues.min():.3e} < 0")
    return evd.eigenvectors * np.sqrt(np.clip(evd.eigenvalues, 0.0, None))


def canonicalize_rrvar(p_acute, b_acute, r_acute):
    """Convert a general reduced-rank VAR factorization to canonical form.

    Given lag matrices ``P' B'_j R'.T`` with invertible ``R'.T P'``,
    returns ``(P, B, R)`` with ``R.T P = I`` and every product
    ``P B_j R.T`` unchanged: ``P = P'``, ``B_j = B'_j (R'.T P')``,
    ``R = R' (P'.T R')^{-1}``.
    """
    p_acute = np.asarray(p_acute, dtype=float)
    r_acute = np.asarray(r_acute, dtype=float)
    cross = r_acute.T @ p_acute
    sv = np.linalg.svd(cross, compute_uv=False)
    if sv.size == 0 or sv[-1] <= numerics.RANK_TOL * sv[0]:
        cond = np.inf if (sv.size == 0 or sv[-1] == 0) else float(sv[0] / sv[-1])
        raise SingularCrossProduct(
            f"R'.T P' is numerically singular (condition estimate {cond:.3e})"
        )
    b_canon = [np.asarray(b, dtype=float) @ cross for b in b_acute]
    r_canon = r_acute @ np.linalg.inv(cross.T)
    return p_acute, b_canon, r_canon
