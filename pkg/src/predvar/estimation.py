"""Model estimation: normalization, EM iteration, variants, diagnostics.

The fitting pipeline whitens the training rows with the sample-covariance
eigendecomposition, initializes the latent weight basis from a full VAR
projection, then alternates a latent least-squares step with an
eigenvector update of the basis until the spanned subspace stops moving.
A projector-swap variant and a non-iterative baseline share the same
normalization and de-normalization machinery.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from . import numerics
from .errors import (
    DegenerateData,
    EllExceedsRank,
    InsufficientRows,
    RankDeficientDesign,
    SingularInformation,
)
from .metrics import d_distance
from .model import NormalizationTransform, PredVarModel

logger = logging.getLogger(__name__)

_VARIANTS = ("predvar", "lavar", "oneshot")


@dataclass(frozen=True)
class FitOptions:
    """Knobs for :func:`fit`.

    ``tol`` is the convergence threshold on the subspace distance between
    successive weight bases. ``seed`` is reserved; initialization is
    deterministic.
    """

    ell: int
    s: int
    max_iter: int = 500
    tol: float = 1e-8
    rank_tol: float = 1e-10
    variant: str = "predvar"
    seed: int = 0

    def __post_init__(self):
        if self.ell < 1 or self.s < 1:
            raise ValueError("ell and s must be >= 1")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be > 0 and max_iter >= 1")
        if self.variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}, got {self.variant!r}")


@dataclass(frozen=True)
class FitReport:
    """Per-fit diagnostics: iteration trace and the final spectrum."""

    iterations: int
    converged: bool
    objective_trace: np.ndarray
    final_spectrum: np.ndarray
    subspace_deltas: np.ndarray


@dataclass(frozen=True)
class LaggedData:
    """Normalized, time-aligned data blocks.

    ``ys_star`` holds the N target rows; ``yaug_star`` the s lagged blocks
    ``[Y*_{s-1} ... Y*_0]`` side by side, so block j (0-based) carries the
    rows lagged by j+1 steps relative to the targets.
    """

    ys_star: np.ndarray
    yaug_star: np.ndarray
    n_effective: int

    @property
    def r(self) -> int:
        return self.ys_star.shape[1]

    @property
    def s(self) -> int:
        return self.yaug_star.shape[1] // self.ys_star.shape[1]


class _EmDetail(NamedTuple):
    evd: numerics.SymEvd
    bb: np.ndarray
    v_hat: np.ndarray


def normalize(y, s: int, rank_tol: float = 1e-10):
    """Center, whiten, and lag-align a training series.

    Centers columns by the full-series mean, eigendecomposes the aligned
    sample covariance, keeps the r eigenvalues above ``rank_tol`` times
    the largest, and whitens the whole centered series. Returns the
    transform together with the lag-aligned normalized blocks.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[1] < 1:
        raise InsufficientRows("expected a 2-d series with at least one column")
    rows = y.shape[0]
    if rows < 2 * s + 2:
        raise InsufficientRows(f"need at least 2s+2 = {2 * s + 2} rows, got {rows}")
    mean = y.mean(axis=0)
    centered = y - mean
    n_eff = rows - s
    ys = centered[s:]
    cov = ys.T @ ys / n_eff
    evd = numerics.sym_evd(cov)
    lam_max = evd.eigenvalues.max(initial=0.0)
    if lam_max <= 1e-14:
        raise DegenerateData("sample covariance has no eigenvalue above 1e-14")
    r = int((evd.eigenvalues > rank_tol * lam_max).sum())
    norm = NormalizationTransform(
        U=evd.eigenvectors[:, :r],
        D=evd.eigenvalues[:r],
        Utilde=evd.eigenvectors[:, r:],
        mean=mean,
        rank_tol=rank_tol,
    )
    star_full = centered @ (norm.U / np.sqrt(norm.D))
    blocks = [star_full[s - 1 - b : s - 1 - b + n_eff] for b in range(s)]
    data = LaggedData(
        ys_star=star_full[s:],
        yaug_star=np.hstack(blocks),
        n_effective=n_eff,
    )
    return norm, data


def _lagged_weights(data: LaggedData, rstar):
    """Stack [V_{s-1} ... V_0] with V_i the lagged scores under ``rstar``."""
    r = data.r
    return np.hstack(
        [data.yaug_star[:, b * r : (b + 1) * r] @ rstar for b in range(data.s)]
    )


def _projection_spectrum(data: LaggedData, basis) -> numerics.SymEvd:
    """Eigendecomposition of Y*.T Pi_basis Y* / N via the projected image."""
    image = basis @ numerics.lstsq(basis, data.ys_star)
    return numerics.sym_evd(image.T @ image / data.n_effective)


def init_rstar(data: LaggedData, ell: int):
    """Initial weight basis from the full-rank VAR projection spectrum.

    Projects the target block onto the span of all lagged blocks and takes
    the leading ``ell`` eigenvectors, i.e. the most predictable directions
    before any latent structure is imposed.
    """
    evd = _projection_spectrum(data, data.yaug_star)
    return evd.eigenvectors[:, :ell]


def _iterate(data: LaggedData, rstar, variant: str) -> _EmDetail:
    v_s = data.ys_star @ rstar
    v_lagged = _lagged_weights(data, rstar)
    bb = numerics.lstsq(v_lagged, v_s)
    v_hat = v_lagged @ bb
    basis = v_lagged if variant == "lavar" else v_hat
    return _EmDetail(_projection_spectrum(data, basis), bb, v_hat)


def em_step(data: LaggedData, rstar, opts: FitOptions):
    """One update of the weight basis given the current one.

    Fits the latent VAR by least squares, projects the targets onto the
    prediction span (the lagged-score span for the ``lavar`` variant), and
    returns the new basis, the stacked VAR coefficients, and the full
    predictability spectrum.
    """
    detail = _iterate(data, np.asarray(rstar, dtype=float), opts.variant)
    return (
        detail.evd.eigenvectors[:, : opts.ell],
        detail.bb,
        detail.evd.eigenvalues,
    )


def _clamped(spectrum):
    spectrum = np.asarray(spectrum, dtype=float)
    if spectrum.size and (spectrum.max() > 1.0 or spectrum.min() < 0.0):
        logger.debug(
            "clamping spectrum into [0, 1]: min %.3e, max %.3e",
            spectrum.min(),
            spectrum.max(),
        )
    return np.clip(spectrum, 0.0, 1.0)


def _split_coefficients(bb, ell: int, s: int):
    """Lag matrices B_1..B_s from the stacked coefficient block."""
    return [bb[j * ell : (j + 1) * ell, :].T.copy() for j in range(s)]


def _denormalized_model(norm, y, opts, rstar, pbar_star, bb, v_hat, spectrum):
    """Map normalized estimates back to original coordinates."""
    sqrt_d = np.sqrt(norm.D)
    color = norm.U * sqrt_d
    white = norm.U / sqrt_d
    p_hat = color @ rstar
    r_hat = white @ rstar
    pbar_hat = np.hstack([color @ pbar_star, norm.Utilde])
    rbar_hat = np.hstack([white @ pbar_star, norm.Utilde])
    centered_targets = (np.asarray(y, dtype=float) - norm.mean)[opts.s :]
    n_eff = centered_targets.shape[0]
    resid = centered_targets - v_hat @ numerics.lstsq(v_hat, centered_targets)
    sigma_e = resid.T @ resid / n_eff
    static = centered_targets @ rbar_hat
    sigma_epsbar = static.T @ static / n_eff
    lam = _clamped(spectrum[: opts.ell])
    return PredVarModel(
        p=norm.p,
        ell=opts.ell,
        s=opts.s,
        r=norm.r,
        mean=norm.mean,
        P=p_hat,
        Pbar=pbar_hat,
        R=r_hat,
        Rbar=rbar_hat,
        B=_split_coefficients(bb, opts.ell, opts.s),
        Sigma_eps=np.diag(1.0 - lam),
        Sigma_epsbar=sigma_epsbar,
        Sigma_e=sigma_e,
        norm=norm,
    )


def _prepare(y, opts: FitOptions):
    y = np.asarray(y, dtype=float)
    norm, data = normalize(y, opts.s, opts.rank_tol)
    if opts.ell > norm.r:
        raise EllExceedsRank(
            f"ell = {opts.ell} exceeds the data covariance rank r = {norm.r}"
        )
    min_rows = opts.s + opts.s * opts.ell + 1
    if y.shape[0] < min_rows:
        raise InsufficientRows(
            f"need at least s + s*ell + 1 = {min_rows} rows, got {y.shape[0]}"
        )
    return y, norm, data


def fit(y, opts: FitOptions):
    """Fit the model by the iterative EM procedure (or a one-shot baseline).

    Returns ``(model, report)``. When the iteration hits ``max_iter``
    without the basis settling, the best model so far is returned with
    ``report.converged`` False.
    """
    if opts.variant == "oneshot":
        return fit_oneshot(y, opts)
    y, norm, data = _prepare(y, opts)
    rstar = init_rstar(data, opts.ell)
    trace, deltas = [], []
    detail = None
    iterations = 0
    converged = False
    for iteration in range(1, opts.max_iter + 1):
        try:
            detail = _iterate(data, rstar, opts.variant)
        except RankDeficientDesign as exc:
            raise RankDeficientDesign(
                f"iteration {iteration}: {exc}", cond=exc.cond
            ) from exc
        rstar_next = detail.evd.eigenvectors[:, : opts.ell]
        delta = d_distance(rstar_next, rstar) if opts.ell < data.r else 0.0
        trace.append(float(detail.evd.eigenvalues[: opts.ell].sum()))
        deltas.append(delta)
        rstar = rstar_next
        iterations = iteration
        if delta < opts.tol:
            converged = True
            break
    if not converged:
        logger.info("no convergence after %d iterations; returning best model", iterations)
    # Refresh the VAR coefficients once for the final basis so the stored
    # dynamics are the exact least-squares fit of the model's own scores.
    v_lagged = _lagged_weights(data, rstar)
    bb = numerics.lstsq(v_lagged, data.ys_star @ rstar)
    v_hat = v_lagged @ bb
    pbar_star = detail.evd.eigenvectors[:, opts.ell : data.r]
    model = _denormalized_model(
        norm, y, opts, rstar, pbar_star, bb, v_hat, detail.evd.eigenvalues
    )
    report = FitReport(
        iterations=iterations,
        converged=converged,
        objective_trace=np.asarray(trace),
        final_spectrum=detail.evd.eigenvalues.copy(),
        subspace_deltas=np.asarray(deltas),
    )
    return model, report


def fit_oneshot(y, opts: FitOptions):
    """Non-iterative baseline: static subspace from lagged covariances.

    The static basis comes from the trailing eigenvectors of the squared
    lagged cross-covariance of the whitened targets; the dynamic basis is
    its orthogonal complement, rotated so the latent coordinates are
    ordered by predictability. The VAR coefficients are retrofitted with a
    single least-squares pass; there is no iteration.
    """
    y, norm, data = _prepare(y, opts)
    r, ell = data.r, opts.ell
    cross = data.ys_star.T @ data.yaug_star
    cov_evd = numerics.sym_evd(cross @ cross.T)
    rbar_star = cov_evd.eigenvectors[:, ell:]
    # Dynamic span: the ell smallest eigenvectors of Sigma_y Rbar Rbar.T
    # Sigma_y, expressed within the excited subspace. The eigenvalues are
    # exactly zero there, so realize the span as the orthogonal complement
    # of the static basis after the D^(1/2) change of coordinates.
    sqrt_d = np.sqrt(norm.D)
    scaled = sqrt_d[:, None] * rbar_star
    null_evd = numerics.sym_evd(scaled @ scaled.T)
    seed_basis = sqrt_d[:, None] * null_evd.eigenvectors[:, r - ell :]
    seed_basis = seed_basis - rbar_star @ (rbar_star.T @ seed_basis)
    span, _ = np.linalg.qr(seed_basis)
    # Retrofit dynamics on the span, then rotate the basis so the latent
    # coordinates diagonalize the prediction covariance.
    detail = _iterate(data, span, opts.variant if opts.variant != "oneshot" else "predvar")
    j_matrix = (
        detail.evd.eigenvectors
        * detail.evd.eigenvalues
    ) @ detail.evd.eigenvectors.T
    sub_evd = numerics.sym_evd(span.T @ j_matrix @ span)
    rstar = numerics.canonical_signs(span @ sub_evd.eigenvectors)
    v_lagged = _lagged_weights(data, rstar)
    bb = numerics.lstsq(v_lagged, data.ys_star @ rstar)
    v_hat = v_lagged @ bb
    model = _denormalized_model(
        norm, y, opts, rstar, rbar_star, bb, v_hat, sub_evd.eigenvalues
    )
    report = FitReport(
        iterations=1,
        converged=True,
        objective_trace=np.asarray([float(_clamped(sub_evd.eigenvalues).sum())]),
        final_spectrum=detail.evd.eigenvalues.copy(),
        subspace_deltas=np.asarray([]),
    )
    return model, report


def param_covariances(model: PredVarModel, data: LaggedData):
    """Asymptotic covariances of the VAR-coefficient and loadings estimates.

    ``cov_b`` is the covariance of ``vec(BB.T)`` (stacked coefficient
    block, column-major) and equals ``(V.T V)^-1 (x) Sigma_eps``; ``cov_p``
    covers ``vec(P)`` and equals ``(BB.T V.T V BB)^-1 (x) Sigma_e``.
    """
    if model.norm is None:
        raise ValueError("model carries no normalization transform")
    rstar = (model.norm.U * np.sqrt(model.norm.D)).T @ model.R
    v_lagged = _lagged_weights(data, rstar)
    vtv = v_lagged.T @ v_lagged
    sv = np.linalg.svd(vtv, compute_uv=False)
    if sv[-1] <= numerics.RANK_TOL * sv[0]:
        raise SingularInformation("V.T V is numerically singular")
    bb = np.vstack([b.T for b in model.B])
    info = bb.T @ vtv @ bb
    sv_info = np.linalg.svd(info, compute_uv=False)
    if sv_info[-1] <= numerics.RANK_TOL * sv_info[0]:
        raise SingularInformation("BB.T V.T V BB is numerically singular")
    cov_b = np.kron(np.linalg.inv(vtv), model.Sigma_eps)
    cov_p = np.kron(np.linalg.inv(info), model.Sigma_e)
    return 0.5 * (cov_b + cov_b.T), 0.5 * (cov_p + cov_p.T)


@dataclass(frozen=True)
class OptimalityReport:
    """Normalized residuals of the optimal-decomposition conditions.

    All four numbers are scale-free; at an optimal fit each should sit
    near zero. ``noise_correlation`` is the largest absolute sample
    correlation between a latent innovation and a static-noise column.
    """

    innovation_cross: float
    data_cross: float
    projection_residual: float
    noise_correlation: float


def _normalized_bilinear(left, middle, right):
    """max_ij |l_i.T M r_j| / sqrt((l_i.T M l_i)(r_j.T M r_j)), guarded."""
    if left.shape[1] == 0 or right.shape[1] == 0:
        return 0.0
    num = left.T @ middle @ right
    dl = np.einsum("ij,jk,ki->i", left.T, middle, left)
    dr = np.einsum("ij,jk,ki->i", right.T, middle, right)
    dl = np.clip(dl, 0.0, None)
    dr = np.clip(dr, 0.0, None)
    denom = np.sqrt(np.outer(dl, dr))
    scale = max(float(np.abs(middle).max()), 1e-300)
    out = np.zeros_like(num)
    ok = denom > 1e-12 * scale
    out[ok] = num[ok] / denom[ok]
    return float(np.abs(out).max(initial=0.0))


def check_optimality(model: PredVarModel, y) -> OptimalityReport:
    """Diagnostic residuals of the optimal oblique-decomposition conditions.

    Reports, each normalized by its own scale: the innovation
    cross-covariance between dynamic and static weights, the same under
    the data covariance, the fixed-point residual of the oblique
    projection applied to ``Sigma_e R``, and the sample correlation
    between fitted innovations and the static noise series.
    """
    y = np.asarray(y, dtype=float)
    centered = (y - model.mean)[model.s :]
    n_eff = centered.shape[0]
    sigma_y = centered.T @ centered / n_eff
    innovation_cross = _normalized_bilinear(model.R, model.Sigma_e, model.Rbar)
    data_cross = _normalized_bilinear(model.R, sigma_y, model.Rbar)
    lhs = model.Sigma_e @ model.R
    resid = lhs - model.P @ (model.R.T @ lhs)
    scale = max(float(np.abs(lhs).max()), 1e-300)
    projection_residual = float(np.abs(resid).max(initial=0.0)) / scale
    v = model.latent_scores(y)
    v_hat, _ = model.predict_one_step(y)
    eps_hat = v[model.s :] - v_hat
    eps_bar = model.static_noise(y)[model.s :]
    noise_correlation = _max_abs_correlation(eps_hat, eps_bar)
    return OptimalityReport(
        innovation_cross=innovation_cross,
        data_cross=data_cross,
        projection_residual=projection_residual,
        noise_correlation=noise_correlation,
    )


def _max_abs_correlation(a, b) -> float:
    if a.shape[1] == 0 or b.shape[1] == 0:
        return 0.0
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    sa = np.sqrt((ac * ac).sum(axis=0))
    sb = np.sqrt((bc * bc).sum(axis=0))
    cross = np.abs(ac.T @ bc)
    denom = np.outer(sa, sb)
    ok = denom > 1e-12 * max(float(denom.max(initial=0.0)), 1e-300)
    vals = np.zeros_like(cross)
    vals[ok] = cross[ok] / denom[ok]
    return float(vals.max(initial=0.0))


def fit_options_for(opts: FitOptions, ell: int, s: int) -> FitOptions:
    """Copy of ``opts`` with a different model size."""
    return replace(opts, ell=ell, s=s)
