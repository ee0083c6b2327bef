"""Likelihood backbones used by every other module.

Two concrete families are provided:

* :class:`GaussianMeanModel` -- d-dimensional Gaussian observations with a
  known covariance and unknown mean.  The workhorse model for synthetic
  benchmarks; its log-likelihood is an exact quadratic in the parameter, so
  several downstream approximations become exact and are tested as such.
* :class:`SplineGlmModel` -- Gaussian regression of a scalar response on a
  natural cubic spline basis of a scalar input, with a known noise variance.
  Used for the turbofan sensor experiments, where each engine's
  (cycle, sensor) trajectory is one dataset.

Both expose the same small surface: ``loglik``, ``gradient``, ``hessian``
(defined as the negative second derivative of the log-likelihood, so it is
positive semidefinite for these families), ``mle`` and
``per_sample_loglik``.  All operations are pure functions of their inputs;
models hold only fixed structural constants (dimension, covariance, knots,
noise variance, ridge).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientDataError, InvalidConfigurationError, SingularFitError

__all__ = [
    "Dataset",
    "LikelihoodFamily",
    "GaussianMeanModel",
    "SplineGlmModel",
    "spline_design",
    "clamp_psd",
    "pooled_noise_variance",
]


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of equally shaped observations.

    ``points`` is an (N, width) float array; one row per observation.  For
    Gaussian mean data the width is the parameter dimension; for spline
    regression it is 2, holding (input, response) pairs.  A 1-d array is
    promoted to a single column.
    """

    points: np.ndarray = field()

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise InvalidConfigurationError(
                f"dataset points must be 1-d or 2-d, got ndim={pts.ndim}"
            )
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def width(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.size

    @staticmethod
    def concat(datasets: Iterable["Dataset"]) -> "Dataset":
        """Concatenate several datasets in order; widths must agree."""
        parts = [d.points for d in datasets]
        if not parts:
            raise InsufficientDataError("cannot concatenate zero datasets")
        return Dataset(np.concatenate(parts, axis=0))


class LikelihoodFamily(ABC):
    """Interface every likelihood backbone implements.

    ``hessian`` returns the negative Hessian of the log-likelihood, which
    is positive semidefinite for the families shipped here.  ``theta`` is
    always a length-``dim`` vector.
    """

    @property
    @abstractmethod
    def dim(self) -> int:
        """Parameter dimension d."""

    @abstractmethod
    def loglik(self, theta: np.ndarray, data: Dataset) -> float:
        """Total log-likelihood of ``data`` at ``theta``."""

    @abstractmethod
    def gradient(self, theta: np.ndarray, data: Dataset) -> np.ndarray:
        """Gradient of ``loglik`` with respect to ``theta``."""

    @abstractmethod
    def hessian(self, theta: np.ndarray, data: Dataset) -> np.ndarray:
        """Negative second derivative of ``loglik`` (PSD for these models)."""

    @abstractmethod
    def mle(self, data: Dataset) -> np.ndarray:
        """Maximum likelihood (or ridge penalized) parameter estimate."""

    @abstractmethod
    def per_sample_loglik(self, theta: np.ndarray, obs: np.ndarray) -> float:
        """Log-likelihood of a single observation row."""

    def _check_theta(self, theta: np.ndarray) -> np.ndarray:
        th = np.asarray(theta, dtype=float).reshape(-1)
        if th.shape[0] != self.dim:
            raise InvalidConfigurationError(
                f"theta has length {th.shape[0]}, model dimension is {self.dim}"
            )
        return th


def clamp_psd(matrix: np.ndarray) -> np.ndarray:
    """Return the nearest-in-spirit PSD repair of a symmetricish matrix.

    Symmetrizes, then clamps negative eigenvalues at zero.  Analytic
    Hessians of the shipped families are already PSD; this guards the
    floating point boundary before factorizations.
    """
    sym = 0.5 * (matrix + matrix.T)
    vals, vecs = np.linalg.eigh(sym)
    if vals.size and vals[0] >= 0.0:
        return sym
    vals = np.clip(vals, 0.0, None)
    return (vecs * vals) @ vecs.T


class GaussianMeanModel(LikelihoodFamily):
    """Gaussian observations with unknown mean and known covariance.

    Parameters
    ----------
    dim : int
        Observation / parameter dimension d.
    covariance : float or (d, d) array
        Known covariance. A scalar c means the isotropic matrix c * I
        (c is a variance, in squared data units).
    """

    def __init__(self, dim: int, covariance=1.0):
        if dim < 1:
            raise InvalidConfigurationError("dim must be >= 1")
        self._dim = int(dim)
        cov = np.asarray(covariance, dtype=float)
        if cov.ndim == 0:
            cov = float(cov) * np.eye(self._dim)
        if cov.shape != (self._dim, self._dim):
            raise InvalidConfigurationError(
                f"covariance shape {cov.shape} does not match dim {dim}"
            )
        cov = 0.5 * (cov + cov.T)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise InvalidConfigurationError("covariance must be positive definite") from exc
        self.covariance = cov
        self._precision = np.linalg.inv(cov)
        # log det(2 pi Sigma) via the Cholesky factor
        self._logdet_2pi_cov = self._dim * np.log(2.0 * np.pi) + 2.0 * np.sum(
            np.log(np.diag(chol))
        )

    @property
    def dim(self) -> int:
        return self._dim

    def loglik(self, theta, data: Dataset) -> float:
        th = self._check_theta(theta)
        dev = data.points - th
        quad = np.einsum("ni,ij,nj->", dev, self._precision, dev)
        return float(-0.5 * quad - 0.5 * data.size * self._logdet_2pi_cov)

    def gradient(self, theta, data: Dataset) -> np.ndarray:
        th = self._check_theta(theta)
        dev_sum = data.points.sum(axis=0) - data.size * th
        return self._precision @ dev_sum

    def hessian(self, theta, data: Dataset) -> np.ndarray:
        self._check_theta(theta)
        return data.size * self._precision

    def mle(self, data: Dataset) -> np.ndarray:
        if data.size == 0:
            raise InsufficientDataError("cannot estimate a mean from zero observations")
        return data.points.mean(axis=0)

    def per_sample_loglik(self, theta, obs) -> float:
        th = self._check_theta(theta)
        dev = np.asarray(obs, dtype=float).reshape(-1) - th
        return float(-0.5 * dev @ self._precision @ dev - 0.5 * self._logdet_2pi_cov)


def spline_design(inputs, knots) -> np.ndarray:
    """Natural cubic spline design matrix on a fixed knot grid.

    With M knots xi_1 < ... < xi_M the basis has dimension M: a constant
    column, a linear column, and M-2 truncated power combinations

        N_j(x) = d_j(x) - d_{M-1}(x),
        d_j(x) = [(x - xi_j)_+^3 - (x - xi_M)_+^3] / (xi_M - xi_j),

    which are linear beyond the boundary knots (zero second derivative
    outside [xi_1, xi_M]) and exactly zero below the first knot.

    Parameters
    ----------
    inputs : array_like, shape (n,)
    knots : array_like, shape (M,), strictly increasing, M >= 3

    Returns
    -------
    (n, M) design matrix.
    """
    x = np.asarray(inputs, dtype=float).reshape(-1)
    xi = np.asarray(knots, dtype=float).reshape(-1)
    m = xi.size
    if m < 3:
        raise InvalidConfigurationError(f"need at least 3 knots, got {m}")
    if np.any(np.diff(xi) <= 0):
        raise InvalidConfigurationError("knots must be strictly increasing")

    def cube_plus(v):
        return np.where(v > 0.0, v, 0.0) ** 3

    last = cube_plus(x - xi[m - 1])
    d_pen = (cube_plus(x - xi[m - 2]) - last) / (xi[m - 1] - xi[m - 2])
    cols = [np.ones_like(x), x]
    for j in range(m - 2):
        d_j = (cube_plus(x - xi[j]) - last) / (xi[m - 1] - xi[j])
        cols.append(d_j - d_pen)
    return np.column_stack(cols)


class SplineGlmModel(LikelihoodFamily):
    """Gaussian regression on a natural cubic spline basis.

    Observations are (input, response) rows.  The mean response is
    ``spline_design(input, knots) @ theta`` and the noise variance is a
    known constant shared by all observations.  ``ridge`` penalizes every
    coefficient except the intercept during ``mle`` and plays no role in
    ``loglik`` / ``gradient`` / ``hessian``.
    """

    def __init__(self, knots, noise_variance: float = 1.0, ridge: float = 0.0):
        self.knots = np.asarray(knots, dtype=float).reshape(-1)
        if self.knots.size < 3:
            raise InvalidConfigurationError("need at least 3 knots")
        if np.any(np.diff(self.knots) <= 0):
            raise InvalidConfigurationError("knots must be strictly increasing")
        if noise_variance <= 0:
            raise InvalidConfigurationError("noise_variance must be positive")
        if ridge < 0:
            raise InvalidConfigurationError("ridge must be nonnegative")
        self.noise_variance = float(noise_variance)
        self.ridge = float(ridge)

    @property
    def dim(self) -> int:
        return self.knots.size

    def design(self, inputs) -> np.ndarray:
        return spline_design(inputs, self.knots)

    def _split(self, data: Dataset):
        if data.width != 2:
            raise InvalidConfigurationError(
                f"spline data must have (input, response) rows, got width {data.width}"
            )
        return data.points[:, 0], data.points[:, 1]

    def loglik(self, theta, data: Dataset) -> float:
        th = self._check_theta(theta)
        x, y = self._split(data)
        resid = y - self.design(x) @ th
        n = data.size
        return float(
            -0.5 * resid @ resid / self.noise_variance
            - 0.5 * n * np.log(2.0 * np.pi * self.noise_variance)
        )

    def gradient(self, theta, data: Dataset) -> np.ndarray:
        th = self._check_theta(theta)
        x, y = self._split(data)
        design = self.design(x)
        return design.T @ (y - design @ th) / self.noise_variance

    def hessian(self, theta, data: Dataset) -> np.ndarray:
        self._check_theta(theta)
        x, _ = self._split(data)
        design = self.design(x)
        return design.T @ design / self.noise_variance

    def mle(self, data: Dataset) -> np.ndarray:
        if data.size == 0:
            raise InsufficientDataError("cannot fit a spline to zero observations")
        x, y = self._split(data)
        design = self.design(x)
        normal = design.T @ design
        if self.ridge > 0.0:
            penalty = np.eye(self.dim)
            penalty[0, 0] = 0.0  # intercept is never shrunk
            normal = normal + self.ridge * penalty
        rhs = design.T @ y
        try:
            chol = np.linalg.cholesky(normal)
        except np.linalg.LinAlgError as exc:
            raise SingularFitError(
                "normal equations are rank deficient; add observations or a ridge"
            ) from exc
        z = np.linalg.solve(chol, rhs)
        return np.linalg.solve(chol.T, z)

    def predict(self, theta, inputs) -> np.ndarray:
        th = self._check_theta(theta)
        return self.design(inputs) @ th

    def per_sample_loglik(self, theta, obs) -> float:
        th = self._check_theta(theta)
        row = np.asarray(obs, dtype=float).reshape(-1)
        resid = row[1] - (self.design(row[:1]) @ th)[0]
        return float(
            -0.5 * resid * resid / self.noise_variance
            - 0.5 * np.log(2.0 * np.pi * self.noise_variance)
        )


def pooled_noise_variance(
    knots,
    datasets: Sequence[Dataset],
    ridge: float = 1e-8,
    floor: float = 1e-8,
) -> float:
    """Size-weighted residual variance pooled over per-dataset spline fits.

    Each dataset is fit on its own (ridge-jittered least squares); the
    residual sums of squares are pooled across datasets and divided by the
    total observation count, then floored away from zero.  Used to fix the
    shared noise variance of :class:`SplineGlmModel` before any
    cross-dataset comparison, so that likelihoods from different sources
    live on one scale.
    """
    probe = SplineGlmModel(knots, noise_variance=1.0, ridge=ridge)
    total_ss = 0.0
    total_n = 0
    for data in datasets:
        if data.size == 0:
            continue
        theta = probe.mle(data)
        x, y = data.points[:, 0], data.points[:, 1]
        resid = y - probe.design(x) @ theta
        total_ss += float(resid @ resid)
        total_n += data.size
    if total_n == 0:
        raise InsufficientDataError("no observations available to estimate noise variance")
    return max(total_ss / total_n, floor)
