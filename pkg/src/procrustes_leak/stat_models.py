"""Closed-form statistics: least squares, RMSE, PCA, bootstrap intervals and
the isotropic-variance null expectation for PCA in Procrustes shape space."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySample, ShapeMismatch
from .gpa import gpa
from .simulator import SimConfig, simulate


@dataclass(frozen=True)
class FitResult:
    """Linear predictor ``y = X @ coefficients + intercept``."""

    coefficients: np.ndarray = field(repr=False)
    intercept: float
    train_rmse: float
    history: tuple[float, ...] = ()
    params: dict = field(default_factory=dict, repr=False)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coefficients + self.intercept


@dataclass(frozen=True)
class PcaResult:
    scores: np.ndarray = field(repr=False)
    loadings: np.ndarray = field(repr=False)
    singular_values: np.ndarray
    eigenvalues: np.ndarray
    mean_vector: np.ndarray = field(repr=False)

    @property
    def rank(self) -> int:
        return len(self.singular_values)


def rmse(y_true, y_pred) -> float:
    a = np.asarray(y_true, dtype=float).ravel()
    b = np.asarray(y_pred, dtype=float).ravel()
    if a.shape != b.shape:
        raise ShapeMismatch(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise EmptySample("rmse of empty vectors")
    return float(np.sqrt(np.mean((b - a) ** 2)))


def ols_fit(X, y) -> FitResult:
    """Least squares with an unpenalised intercept.

    Solved on column-centered data with an SVD-based solver, so a
    rank-deficient design gets the minimum-norm coefficient vector.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise ShapeMismatch("design matrix must be 2-D")
    if X.shape[0] == 0:
        raise EmptySample("no observations")
    if X.shape[0] != y.size:
        raise ShapeMismatch(f"{X.shape[0]} rows but {y.size} responses")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    coef, *_ = np.linalg.lstsq(X - x_mean, y - y_mean, rcond=None)
    intercept = float(y_mean - x_mean @ coef)
    fit = FitResult(coef, intercept, 0.0)
    return FitResult(coef, intercept, rmse(y, fit.predict(X)))


def pca(X) -> PcaResult:
    """PCA by SVD of the column-centered data, keeping ``min(n - 1, d)`` components."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n < 2:
        raise EmptySample("PCA needs at least two observations")
    mean = X.mean(axis=0)
    u, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    r = min(n - 1, d)
    u, s, vt = u[:, :r], s[:r], vt[:r]
    return PcaResult(
        scores=u * s,
        loadings=vt.T,
        singular_values=s,
        eigenvalues=s**2 / (n - 1),
        mean_vector=mean,
    )


def cumulative_variance(res: PcaResult, m: int) -> float:
    """Share of total variance carried by the first ``m`` components."""
    if not 1 <= m <= res.rank:
        raise ValueError(f"m must lie in [1, {res.rank}], got {m}")
    cs = np.cumsum(res.eigenvalues)
    return float(cs[m - 1] / cs[-1])


def tangent_dimension(p: int, k: int) -> int:
    """Dimension of the shape tangent space after removing translation, rotation and scale."""
    return k * p - k - k * (k - 1) // 2 - 1


def tangent_project(aligned: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Orthogonal projection of vectorized configurations onto the tangent plane at ``reference``."""
    flat = aligned.reshape(aligned.shape[0], -1)
    mu = reference.reshape(-1)
    mu = mu / np.linalg.norm(mu)
    return flat - np.outer(flat @ mu, mu)


@dataclass(frozen=True)
class NullCheck:
    expected_slope: float
    empirical_slope: float
    m: int
    q: int
    nonzero_eigenvalues: int
    curve: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.expected_slope, self.empirical_slope))


def count_nonzero(eigenvalues: np.ndarray, rel_tol: float = 1e-9) -> int:
    ev = np.asarray(eigenvalues)
    if ev.size == 0 or ev[0] <= 0:
        return 0
    return int(np.sum(ev > rel_tol * ev[0]))


def null_spectrum(p: int, k: int, n: int, seed: int = 0, sigma: float = 0.01) -> PcaResult:
    """PCA of isotropic shape variation in the tangent plane at the consensus.

    Specimens are the base shape plus i.i.d. Gaussian noise of SD ``sigma``
    with shear and size variation switched off. They are superimposed with
    scaling and projected onto the tangent plane before PCA.
    """
    cfg = SimConfig(
        n=n, p=p, k=k, sigma=sigma, shear_range=(0.0, 0.0), shear_noise_sd=0.0,
        rho=1.0, size_noise_sd=0.0, z_range=(1.0, 1.0), seed=seed,
    )
    fit = gpa(simulate(cfg).coords, scale=True)
    return pca(tangent_project(fit.aligned_coords, fit.reference_coords))


def null_check_from_spectrum(res: PcaResult, p: int, k: int, alpha: float) -> NullCheck:
    m = max(1, min(int(round(alpha * p)), res.rank))
    return NullCheck(
        expected_slope=alpha / (k + 1),
        empirical_slope=cumulative_variance(res, m),
        m=m,
        q=tangent_dimension(p, k),
        nonzero_eigenvalues=count_nonzero(res.eigenvalues),
        curve=np.cumsum(res.eigenvalues) / np.sum(res.eigenvalues),
    )


def isotropy_null_check(
    p: int,
    k: int,
    n: int,
    alpha: float = 1.0,
    seed: int = 0,
    sigma: float = 0.01,
) -> NullCheck:
    """Cumulative PCA variance of isotropic shape variation at ``m = alpha * p``.

    Returns the isotropic expectation ``alpha / (k + 1)`` next to the value
    observed on simulated data, plus the count of nonzero eigenvalues.
    """
    return null_check_from_spectrum(null_spectrum(p, k, n, seed, sigma), p, k, alpha)


def bootstrap_ci(values, level: float = 0.95, reps: int = 1000, seed=None) -> tuple[float, float, float]:
    """Percentile bootstrap interval for the mean.

    Returns:
        ``(mean, lower, upper)``.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptySample("bootstrap of an empty vector")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    rng = np.random.default_rng(seed)
    means = v[rng.integers(0, v.size, size=(reps, v.size))].mean(axis=1)
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(means, [tail, 1.0 - tail])
    return float(v.mean()), float(lower), float(upper)
