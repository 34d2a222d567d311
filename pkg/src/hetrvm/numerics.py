"""Shared numerical kernels.

Positive-definite solves with log-determinants, Gaussian KL divergence,
Gauss-Hermite quadrature against the standard normal weight, log-normal
moments, and a finite-difference gradient checker.  All heavier routines
route through Cholesky factorizations; nothing here forms an explicit
inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "FactorizationError",
    "Quadrature",
    "psd_solve_logdet",
    "chol_factor",
    "gauss_kl",
    "gauss_hermite",
    "lognormal_mean",
    "grad_check",
]


class FactorizationError(ValueError):
    """Cholesky failure on a matrix that was required to be PD.

    ``pivot`` is the 1-based index of the leading minor that failed.
    """

    def __init__(self, message: str, pivot: int = -1):
        super().__init__(message)
        self.pivot = pivot


@dataclass(frozen=True)
class Quadrature:
    """Nodes/weights integrating f against the standard normal density:
    E[f(Z)] ~= sum_i weights[i] * f(nodes[i]),  Z ~ N(0, 1)."""

    nodes: np.ndarray
    weights: np.ndarray


def chol_factor(A, name: str = "matrix"):
    """Lower Cholesky factor of a symmetric PD matrix.

    Symmetry is required within 1e-10 (relative to the largest entry);
    non-PD input raises :class:`FactorizationError` with the failing pivot.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if np.max(np.abs(A - A.T)) > 1e-10 * scale:
        raise ValueError(f"{name} is not symmetric within tolerance")
    try:
        return sla.cholesky(A, lower=True, check_finite=False)
    except sla.LinAlgError as exc:
        pivot = _failing_pivot(exc)
        raise FactorizationError(
            f"{name} is not positive definite (pivot {pivot})", pivot
        ) from exc


def _failing_pivot(exc) -> int:
    msg = str(exc)
    for tok in msg.replace("-", " ").split():
        if tok.isdigit():
            return int(tok)
    return -1


def psd_solve_logdet(Amat, B):
    """Solve A X = B for symmetric PD A and return (X, log|A|)."""
    L = chol_factor(Amat, "A")
    B = np.asarray(B, dtype=float)
    x = sla.cho_solve((L, True), B, check_finite=False)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return x, logdet


def gauss_kl(mu_q, Sigma_q, mu_p, Sigma_p) -> float:
    """KL( N(mu_q, Sigma_q) || N(mu_p, Sigma_p) ) for full covariances."""
    mu_q = np.asarray(mu_q, dtype=float).ravel()
    mu_p = np.asarray(mu_p, dtype=float).ravel()
    Sigma_q = np.asarray(Sigma_q, dtype=float)
    Sigma_p = np.asarray(Sigma_p, dtype=float)
    n = mu_q.size
    if mu_p.size != n or Sigma_q.shape != (n, n) or Sigma_p.shape != (n, n):
        raise ValueError("dimension mismatch in gauss_kl")
    Lq = chol_factor(Sigma_q, "Sigma_q")
    Lp = chol_factor(Sigma_p, "Sigma_p")
    logdet_q = 2.0 * np.sum(np.log(np.diag(Lq)))
    logdet_p = 2.0 * np.sum(np.log(np.diag(Lp)))
    # tr(Sigma_p^-1 Sigma_q) = || Lp^-1 Lq ||_F^2
    M = sla.solve_triangular(Lp, Lq, lower=True, check_finite=False)
    trace = float(np.sum(M**2))
    d = mu_p - mu_q
    v = sla.solve_triangular(Lp, d, lower=True, check_finite=False)
    quad = float(v @ v)
    kl = 0.5 * (trace + quad - n + logdet_p - logdet_q)
    if kl < -1e-10:
        raise ValueError(f"negative KL ({kl}); covariance inputs inconsistent")
    return max(kl, 0.0)


def gauss_hermite(n: int) -> Quadrature:
    """Gauss-Hermite rule of order n for the standard normal weight.

    Exact for polynomials up to degree 2n - 1 in E[f(Z)], Z ~ N(0,1).
    """
    if not (1 <= int(n) <= 128):
        raise ValueError("quadrature order must be in [1, 128]")
    nodes, weights = np.polynomial.hermite_e.hermegauss(int(n))
    weights = weights / np.sqrt(2.0 * np.pi)
    return Quadrature(nodes=nodes, weights=weights)


def lognormal_mean(mu, var):
    """Mean of exp(Z) for Z ~ N(mu, var): exp(mu + var / 2)."""
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    if np.any(var < 0):
        raise ValueError("variance must be nonnegative")
    out = np.exp(mu + 0.5 * var)
    return float(out) if out.ndim == 0 else out


def grad_check(f, grad, x) -> float:
    """Max relative error between an analytic gradient and central
    differences with per-coordinate step h_i = 1e-5 * (1 + |x_i|)."""
    x = np.asarray(x, dtype=float).ravel()
    g = np.asarray(grad(x), dtype=float).ravel()
    worst = 0.0
    for i in range(x.size):
        h = 1e-5 * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = float(f(xp)), float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite objective at coordinate {i}")
        num = (fp - fm) / (2.0 * h)
        err = abs(g[i] - num) / max(1.0, abs(g[i]), abs(num))
        worst = max(worst, err)
    return worst
