r"""Optimal transport between Gaussian distributions with dense matrices.

This is the slow, general path: Bures-Wasserstein distance, the affine
Monge map and the fixed-point Wasserstein barycenter. For stationary
signals the same quantities reduce to elementwise operations on PSDs (see
:mod:`cmmn.spectral`); the circulant helpers at the bottom of this module
lift PSDs and filters to matrices so both routes can be compared.

Matrix square roots use a symmetric eigendecomposition with eigenvalues
clamped at zero, which is deterministic and accurate for the small
dimensions (D <= 64) this module targets.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import circulant

from .errors import (
    DimMismatchError,
    EmptyInputError,
    NoConvergenceWarning,
    NotPsdError,
    NotSymmetricError,
    SingularSourceError,
)

SYM_TOL = 1e-10
PSD_TOL = 1e-10


@dataclass(frozen=True)
class GaussianDist:
    """Multivariate normal law N(mean, cov)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DimMismatchError(
                f"mean of shape {mean.shape} incompatible with cov of shape {cov.shape}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def centered(cls, cov) -> GaussianDist:
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        return cls(np.zeros(cov.shape[0]), cov)


@dataclass(frozen=True)
class AffineMap:
    """The map ``x -> A (x - source_mean) + target_mean``."""

    matrix_a: np.ndarray
    source_mean: np.ndarray
    target_mean: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return (x - self.source_mean) @ self.matrix_a.T + self.target_mean


def _check_cov(cov: np.ndarray, name: str = "cov") -> np.ndarray:
    scale = max(float(np.max(np.abs(cov), initial=0.0)), 1.0)
    if np.max(np.abs(cov - cov.T), initial=0.0) > SYM_TOL * scale:
        raise NotSymmetricError(f"{name} is not symmetric")
    cov = 0.5 * (cov + cov.T)
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals[0] < -PSD_TOL * scale:
        raise NotPsdError(f"{name} has negative eigenvalue {eigvals[0]:.3e}")
    return cov


def _check_pair(src: GaussianDist, tgt: GaussianDist) -> None:
    if src.dim != tgt.dim:
        raise DimMismatchError(f"dimension mismatch: {src.dim} vs {tgt.dim}")


def sqrtm_psd(mat: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Square root (or inverse square root) of a symmetric PSD matrix."""
    mat = 0.5 * (mat + mat.T)
    eigvals, eigvecs = np.linalg.eigh(mat)
    eigvals = np.clip(eigvals, 0.0, None)
    roots = np.sqrt(eigvals)
    if inverse:
        roots = 1.0 / roots
    out = (eigvecs * roots) @ eigvecs.T
    return 0.5 * (out + out.T)


def bures_wasserstein_sq(src: GaussianDist, tgt: GaussianDist) -> float:
    r"""Squared 2-Wasserstein distance between two Gaussians.

    .. math::
        \|m_s - m_t\|^2 + \mathrm{Tr}\left(\Sigma_s + \Sigma_t
        - 2 (\Sigma_t^{1/2} \Sigma_s \Sigma_t^{1/2})^{1/2}\right)

    Rounding can push the result slightly below zero; it is clamped to 0.
    """
    _check_pair(src, tgt)
    cov_s = _check_cov(src.cov, "source cov")
    cov_t = _check_cov(tgt.cov, "target cov")
    root_t = sqrtm_psd(cov_t)
    cross = sqrtm_psd(root_t @ cov_s @ root_t)
    mean_term = float(np.sum((src.mean - tgt.mean) ** 2))
    bures = float(np.trace(cov_s) + np.trace(cov_t) - 2.0 * np.trace(cross))
    return max(mean_term + bures, 0.0)


def monge_map(src: GaussianDist, tgt: GaussianDist, eps_spd: float = 1e-10) -> AffineMap:
    r"""Optimal affine map pushing ``src`` onto ``tgt``.

    ``A = Σs^{-1/2} (Σs^{1/2} Σt Σs^{1/2})^{1/2} Σs^{-1/2}``, symmetric.

    Raises
    ------
    SingularSourceError
        If the smallest eigenvalue of the source covariance is ``<= eps_spd``.
    """
    _check_pair(src, tgt)
    cov_s = _check_cov(src.cov, "source cov")
    cov_t = _check_cov(tgt.cov, "target cov")
    min_eig = np.linalg.eigvalsh(cov_s)[0]
    if min_eig <= eps_spd:
        raise SingularSourceError(
            f"source covariance is singular (min eigenvalue {min_eig:.3e} <= {eps_spd:.1e})"
        )
    root_s = sqrtm_psd(cov_s)
    inv_root_s = sqrtm_psd(cov_s, inverse=True)
    mat = inv_root_s @ sqrtm_psd(root_s @ cov_t @ root_s) @ inv_root_s
    mat = 0.5 * (mat + mat.T)
    return AffineMap(mat, src.mean.copy(), tgt.mean.copy())


def fixed_point_residual(cov_bar: np.ndarray, covs) -> float:
    """Relative Frobenius residual of the barycenter optimality condition."""
    root = sqrtm_psd(cov_bar)
    update = np.mean([sqrtm_psd(root @ c @ root) for c in covs], axis=0)
    return float(np.linalg.norm(cov_bar - update) / np.linalg.norm(cov_bar))


def barycenter_fixed_point(dists, tol: float = 1e-10, max_iter: int = 300, log: bool = False):
    r"""Wasserstein barycenter of Gaussians by fixed-point iteration.

    Starting from the arithmetic mean of the covariances, iterate

    .. math::
        \bar\Sigma \leftarrow \frac{1}{K} \sum_k
        (\bar\Sigma^{1/2} \Sigma_k \bar\Sigma^{1/2})^{1/2}

    until the relative residual of that identity drops to ``tol``. The mean is
    the average of the input means.

    Parameters
    ----------
    dists : sequence of GaussianDist
        Input laws, all of the same dimension.
    tol : float
        Stopping threshold on the relative Frobenius residual.
    max_iter : int
        Iteration cap. When reached, a :class:`NoConvergenceWarning` is
        emitted and the iterate with the smallest residual is returned.
    log : bool
        Also return a dict with ``residual``, ``n_iter`` and ``converged``.

    Returns
    -------
    bary : GaussianDist
    log : dict, only if ``log=True``
    """
    dists = list(dists)
    if not dists:
        raise EmptyInputError("barycenter of an empty set")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    dim = dists[0].dim
    for d in dists[1:]:
        if d.dim != dim:
            raise DimMismatchError(f"dimension mismatch: {d.dim} vs {dim}")
    covs = [_check_cov(d.cov) for d in dists]
    mean = np.mean([d.mean for d in dists], axis=0)

    cov_bar = np.mean(covs, axis=0)
    best, best_res = cov_bar, np.inf
    residuals = []
    converged = False
    n_iter = 0
    for n_iter in range(max_iter + 1):
        root = sqrtm_psd(cov_bar)
        update = np.mean([sqrtm_psd(root @ c @ root) for c in covs], axis=0)
        norm = np.linalg.norm(cov_bar)
        res = float(np.linalg.norm(cov_bar - update) / norm) if norm > 0 else 0.0
        residuals.append(res)
        if res < best_res:
            best, best_res = cov_bar, res
        if res <= tol:
            converged = True
            break
        cov_bar = 0.5 * (update + update.T)

    if not converged:
        warnings.warn(
            f"barycenter fixed point did not reach tol={tol:.1e} in {max_iter} "
            f"iterations (best residual {best_res:.3e})",
            NoConvergenceWarning,
            stacklevel=2,
        )
    bary = GaussianDist(mean, best)
    if log:
        return bary, {
            "residual": best_res,
            "n_iter": n_iter,
            "converged": converged,
            "residuals": residuals,
        }
    return bary


def circulant_from_psd(psd) -> np.ndarray:
    """Circulant covariance whose DFT eigenvalues are ``psd``.

    ``psd`` must be Hermitian-symmetric so the matrix is real and symmetric.
    """
    first_col = np.fft.ifft(np.asarray(psd, dtype=np.float64))
    return circulant(first_col.real)


def circulant_from_kernel(kernel) -> np.ndarray:
    """Matrix of circular convolution with ``kernel``."""
    return circulant(np.asarray(kernel, dtype=np.float64))
