"""Homoscedastic relevance vector machine with fast marginal-likelihood
basis selection (sequential add / re-estimate / delete on the candidate
columns of the design matrix)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg as sla

from .data import Dataset, Standardization, standardize
from .kernels import DesignMatrix, KernelSpec, build_design_matrix, design_matrix_at
from .numerics import chol_factor

__all__ = ["RvmConfig", "RvmModel", "sparsity_quality", "fit_rvm", "rvm_predict"]


@dataclass(frozen=True)
class RvmConfig:
    max_iter: int = 500
    tol: float = 1e-6
    alpha_threshold: float = 1e12
    standardize: bool = True


@dataclass
class RvmModel:
    """Trained homoscedastic RVM over a kernel basis."""

    kernel: KernelSpec
    centers: np.ndarray          # training inputs (standardized units)
    active_indices: List[int]    # columns of the full design matrix
    alpha: np.ndarray
    sigma2: float                # noise variance, standardized units
    mu_w: np.ndarray
    Sigma_w: np.ndarray
    standardization: Standardization
    training_log: List[float] = field(default_factory=list)
    status: str = "converged"
    n_iter: int = 0


def _weight_posterior(Phi_a, alpha, sigma2, y):
    """mu_w, Sigma_w, plus the Cholesky of the posterior precision."""
    m = Phi_a.shape[1]
    if m == 0:
        return np.zeros(0), np.zeros((0, 0)), np.zeros((0, 0))
    H = np.diag(alpha) + (Phi_a.T @ Phi_a) / sigma2
    L = chol_factor(H, "weight precision")
    Sigma_w = sla.cho_solve((L, True), np.eye(m), check_finite=False)
    mu_w = sla.cho_solve((L, True), Phi_a.T @ y / sigma2, check_finite=False)
    return mu_w, Sigma_w, L


def _marginal_loglik(Phi_a, alpha, sigma2, y):
    """log N(y | 0, sigma2 I + Phi_a diag(1/alpha) Phi_a^T)."""
    n = y.size
    if Phi_a.shape[1] == 0:
        return -0.5 * (n * np.log(2 * np.pi * sigma2) + y @ y / sigma2)
    mu_w, Sigma_w, L = _weight_posterior(Phi_a, alpha, sigma2, y)
    # |C| = sigma2^N |H| / |A|;  y^T C^-1 y = (y^T y - y^T Phi mu_w) / sigma2
    logdet_H = 2.0 * np.sum(np.log(np.diag(L)))
    logdet_C = n * np.log(sigma2) + logdet_H - np.sum(np.log(alpha))
    quad = (y @ y - y @ (Phi_a @ mu_w)) / sigma2
    return -0.5 * (n * np.log(2 * np.pi) + logdet_C + quad)


def _all_SQ(Phi, Phi_a, Sigma_w, sigma2, y):
    """S_j = phi_j^T C^-1 phi_j and Q_j = phi_j^T C^-1 y for every column,
    via the Woodbury identity on the active set."""
    G = Phi.T @ Phi_a                       # M x m
    S = np.sum(Phi * Phi, axis=0) / sigma2
    Q = Phi.T @ y / sigma2
    if Phi_a.shape[1] > 0:
        GS = G @ Sigma_w
        S = S - np.sum(GS * G, axis=1) / sigma2**2
        Q = Q - GS @ (Phi_a.T @ y) / sigma2**2
    return S, Q


def sparsity_quality(Phi: np.ndarray, y, active, alpha, sigma2, j):
    """(s_j, q_j) with basis j excluded from the model covariance.

    Direct dense computation of C_{-j} = sigma2 I + sum_{i != j}
    phi_i phi_i^T / alpha_i; intended as the reference path (the trainer
    uses an equivalent Woodbury form).
    """
    Phi = np.asarray(Phi, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    C = sigma2 * np.eye(n)
    for idx, a in zip(active, alpha):
        if idx == j:
            continue
        phi = Phi[:, idx]
        C += np.outer(phi, phi) / a
    L = chol_factor(C, "C")
    phi_j = Phi[:, j]
    u = sla.cho_solve((L, True), phi_j, check_finite=False)
    s = float(phi_j @ u)
    q = float(u @ y)
    return s, q


def fit_rvm(data: Dataset, kernel: Optional[KernelSpec] = None,
            config: Optional[RvmConfig] = None) -> RvmModel:
    """Fit by greedy maximization of the marginal likelihood: at each step
    take the single add / re-estimate / delete action with the largest
    likelihood gain; re-estimate sigma2 whenever that does not decrease
    the likelihood."""
    kernel = kernel or KernelSpec()
    config = config or RvmConfig()
    if config.standardize:
        work, record = standardize(data)
    else:
        work, record = data, Standardization.identity(data.q)
    y = work.y
    n = y.size
    design = build_design_matrix(work.X, kernel)
    Phi = design.values
    M = Phi.shape[1]

    var_y = float(np.var(y))
    if var_y <= 0.0:
        return _degenerate_model(design, record, kernel)
    sigma2 = 0.1 * var_y

    # start from the basis with the largest normalized projection
    proj = (Phi.T @ y) ** 2 / np.maximum(np.sum(Phi * Phi, axis=0), 1e-300)
    j0 = int(np.argmax(proj))
    phi0 = Phi[:, j0]
    s0 = phi0 @ phi0 / sigma2
    q0 = phi0 @ y / sigma2
    a0 = s0**2 / (q0**2 - s0) if q0**2 > s0 else 1.0
    active: List[int] = [j0]
    alpha = np.array([a0], dtype=float)

    log: List[float] = []
    status = "max_iter"
    n_iter = 0
    for it in range(config.max_iter):
        n_iter = it + 1
        Phi_a = Phi[:, active]
        mu_w, Sigma_w, _ = _weight_posterior(Phi_a, alpha, sigma2, y)
        S, Q = _all_SQ(Phi, Phi_a, Sigma_w, sigma2, y)

        in_model = np.zeros(M, dtype=bool)
        in_model[active] = True
        alpha_full = np.full(M, np.inf)
        alpha_full[active] = alpha
        denom = np.where(in_model, alpha_full - S, 1.0)
        s = np.where(in_model, alpha_full * S / denom, S)
        q = np.where(in_model, alpha_full * Q / denom, Q)
        theta = q**2 - s

        delta = np.full(M, -np.inf)
        add = (theta > 0) & ~in_model
        rec = (theta > 0) & in_model
        dele = (theta <= 0) & in_model
        with np.errstate(divide="ignore", invalid="ignore"):
            delta[add] = 0.5 * ((Q[add] ** 2 - S[add]) / S[add]
                                + np.log(S[add] / Q[add] ** 2))
            if np.any(rec):
                a_new = s[rec] ** 2 / theta[rec]
                d_inv = 1.0 / a_new - 1.0 / alpha_full[rec]
                delta[rec] = 0.5 * (Q[rec] ** 2 / (S[rec] + 1.0 / d_inv)
                                    - np.log1p(S[rec] * d_inv))
            if np.any(dele):
                delta[dele] = 0.5 * (Q[dele] ** 2 / (S[dele] - alpha_full[dele])
                                     - np.log1p(-S[dele] / alpha_full[dele]))
        delta[~np.isfinite(delta)] = -np.inf

        jbest = int(np.argmax(delta))
        best_gain = delta[jbest]
        max_log_change = 0.0
        if best_gain > 1e-12:
            if add[jbest]:
                active.append(jbest)
                alpha = np.append(alpha, s[jbest] ** 2 / theta[jbest])
                max_log_change = np.inf
            elif rec[jbest]:
                k = active.index(jbest)
                a_new = s[jbest] ** 2 / theta[jbest]
                max_log_change = abs(np.log(a_new) - np.log(alpha[k]))
                alpha[k] = a_new
            else:  # delete
                k = active.index(jbest)
                active.pop(k)
                alpha = np.delete(alpha, k)
                max_log_change = np.inf

        # noise re-estimate, accepted only when it does not lower the evidence
        Phi_a = Phi[:, active]
        mu_w, Sigma_w, _ = _weight_posterior(Phi_a, alpha, sigma2, y)
        gamma = 1.0 - alpha * np.diag(Sigma_w)
        dof = n - float(np.sum(gamma))
        resid = y - Phi_a @ mu_w
        if dof > 1e-8:
            sigma2_new = float(resid @ resid) / dof
            if sigma2_new > 1e-12:
                L_old = _marginal_loglik(Phi_a, alpha, sigma2, y)
                L_new = _marginal_loglik(Phi_a, alpha, sigma2_new, y)
                if L_new >= L_old - 1e-10:
                    sigma2 = sigma2_new

        log.append(_marginal_loglik(Phi_a, alpha, sigma2, y))
        if best_gain <= 1e-12 or (max_log_change < config.tol):
            status = "converged"
            break

    # threshold pruning (alpha -> infinity basis carry no weight)
    keep = alpha <= config.alpha_threshold
    if not np.all(keep):
        active = [a for a, k in zip(active, keep) if k]
        alpha = alpha[keep]
    Phi_a = Phi[:, active]
    mu_w, Sigma_w, _ = _weight_posterior(Phi_a, alpha, sigma2, y)
    Sigma_w = np.atleast_2d(Sigma_w)
    if Sigma_w.size == 0:
        Sigma_w = np.zeros((0, 0))
    return RvmModel(kernel=kernel, centers=design.centers,
                    active_indices=list(active), alpha=alpha,
                    sigma2=sigma2, mu_w=mu_w, Sigma_w=Sigma_w,
                    standardization=record, training_log=log,
                    status=status, n_iter=n_iter)


def _degenerate_model(design: DesignMatrix, record, kernel,
                      sigma2=None, log=None, status="degenerate", n_iter=0):
    """Bias-only (or empty) fallback for targets with no structure."""
    if kernel.include_bias:
        active = [0]
        alpha = np.array([1e6])
        mu_w = np.zeros(1)
        Sigma_w = np.array([[1e-6]])
    else:
        active = []
        alpha = np.zeros(0)
        mu_w = np.zeros(0)
        Sigma_w = np.zeros((0, 0))
    return RvmModel(kernel=kernel, centers=design.centers,
                    active_indices=active, alpha=alpha,
                    sigma2=float(sigma2 if sigma2 is not None else 1.0),
                    mu_w=mu_w, Sigma_w=Sigma_w, standardization=record,
                    training_log=list(log or []), status=status, n_iter=n_iter)


def rvm_predict(model: RvmModel, Xstar):
    """Predictive mean and variance (original units) at new inputs."""
    record = model.standardization
    Xs = record.apply_x(Xstar)
    Phi_s = design_matrix_at(Xs, model.kernel, model.centers,
                             model.active_indices)
    if model.mu_w.size:
        mean = Phi_s @ model.mu_w
        var = model.sigma2 + np.sum((Phi_s @ model.Sigma_w) * Phi_s, axis=1)
    else:
        mean = np.zeros(Xs.shape[0])
        var = np.full(Xs.shape[0], model.sigma2)
    return record.invert_y(mean), var * record.y_scale**2
