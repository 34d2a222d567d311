"""Collapsed variational trainer for the heteroscedastic RVM.

The weight posterior is maximized analytically, which collapses the
evidence lower bound into a functional of q(g) = N(mu, Sigma) alone:

    F = log N(y | 0, Phi A^-1 Phi^T + R) - tr(Sigma)/4
        - KL( N(mu, Sigma) || N(mu0 1, K) )

with R the diagonal effective-noise matrix R_nn = exp(mu_n - Sigma_nn/2).
Stationarity in (mu, Sigma) reduces q(g) to N diagonal parameters
lam in (0, 1/2):

    Sigma = (K^-1 + diag(lam))^-1,   mu = K (lam - 1/2) + mu0 1,

so the bound is maximized over lam (through an unconstrained sigmoid
transform), the log-variance GP hyperparameters and mu0 by L-BFGS, with
analytic gradients.  Weight precisions follow the usual effective-degrees
fixed point, safeguarded so the bound never decreases, and basis columns
whose precision diverges are pruned permanently.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field
from typing import List, Optional

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from .data import Dataset, Standardization, standardize
from .kernels import (GpNoisePrior, KernelSpec, build_design_matrix,
                      gp_covariance, _sqdist)
from .model import HrvmModel
from .numerics import chol_factor, gauss_kl

__all__ = [
    "VIConfig",
    "VariationalState",
    "noise_diag",
    "expected_loglik",
    "weight_posterior",
    "reduced_to_moments",
    "collapsed_bound",
    "bound_gradients",
    "update_alpha",
    "prune_state",
    "fit_vi",
]

_ALPHA_MIN, _ALPHA_MAX = 1e-12, 1e14
_JITTER_FRAC = 1e-6  # diagonal jitter on K as a fraction of signal variance


@dataclass(frozen=True)
class VIConfig:
    max_iter: int = 200
    tol: float = 1e-6
    alpha_threshold: float = 1e12
    inner_maxiter: int = 40      # L-BFGS iterations per outer step
    seed: int = 0                # provenance only; the VI path is deterministic
    learn_theta: bool = True
    learn_mu0: bool = True
    clamp_g: Optional[float] = None  # fix q(g) to a point mass (diagnostics)
    standardize: bool = True


@dataclass
class VariationalState:
    """Everything the bound depends on, at the training inputs X."""

    X: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray
    lam: np.ndarray              # diagonal reduced parameter, in (0, 1/2)
    alpha: np.ndarray
    active_indices: List[int]
    mu0: float
    log_ell: float               # log lengthscale of the noise GP
    log_sv: float                # log signal variance of the noise GP
    K: np.ndarray                # cached noise-GP covariance at X

    def prior(self) -> GpNoisePrior:
        sv = float(np.exp(self.log_sv))
        kern = KernelSpec(family="rbf", lengthscale=float(np.exp(self.log_ell)),
                          include_bias=False, signal_variance=sv)
        return GpNoisePrior(mu0=self.mu0, kernel=kern, jitter=_JITTER_FRAC * sv)


def _noise_cov(D2, log_ell, log_sv):
    """K = sv * (rbf(D2; ell) + jitter I) and the unscaled correlation."""
    ell = np.exp(log_ell)
    sv = np.exp(log_sv)
    C = np.exp(-0.5 * D2 / ell**2)
    K = sv * (C + _JITTER_FRAC * np.eye(D2.shape[0]))
    return K, C


def noise_diag(mu, Sigma):
    """Diagonal of the effective noise matrix, exp(mu_n - Sigma_nn / 2)."""
    mu = np.asarray(mu, dtype=float).ravel()
    Sigma = np.asarray(Sigma, dtype=float)
    sd = np.diag(Sigma) if Sigma.ndim == 2 else Sigma.ravel()
    expo = mu - 0.5 * sd
    with np.errstate(over="ignore"):
        out = np.exp(expo)
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.isfinite(out)))
        raise FloatingPointError(f"effective noise overflow at index {bad}")
    return out


def expected_loglik(y, w, Phi, mu, Sigma) -> float:
    """E_{g ~ N(mu, Sigma)} log p(y | w, g) where the per-point noise
    variance is exp(g_n).  Equals log N(y | Phi w, R) - tr(Sigma)/4."""
    y = np.asarray(y, dtype=float).ravel()
    Phi = np.asarray(getattr(Phi, "values", Phi), dtype=float)
    f = Phi @ np.asarray(w, dtype=float).ravel()
    r = noise_diag(mu, Sigma)
    Sigma = np.asarray(Sigma, dtype=float)
    tr = float(np.sum(np.diag(Sigma))) if Sigma.ndim == 2 else float(np.sum(Sigma))
    n = y.size
    ll = -0.5 * (n * np.log(2 * np.pi) + np.sum(np.log(r))
                 + np.sum((y - f) ** 2 / r))
    return float(ll - 0.25 * tr)


def weight_posterior(Phi_a, alpha, r, y):
    """Exact maximizing Gaussian over the weights for effective noise r:
    Sigma_w = (diag(alpha) + Phi^T diag(1/r) Phi)^-1,
    mu_w = Sigma_w Phi^T diag(1/r) y."""
    Phi_a = np.asarray(Phi_a, dtype=float)
    alpha = np.asarray(alpha, dtype=float).ravel()
    r = np.asarray(r, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    Phir = Phi_a / r[:, None]
    H = np.diag(alpha) + Phi_a.T @ Phir
    L = chol_factor(H, "weight precision")
    Sigma_w = sla.cho_solve((L, True), np.eye(alpha.size), check_finite=False)
    Sigma_w = 0.5 * (Sigma_w + Sigma_w.T)
    mu_w = sla.cho_solve((L, True), Phir.T @ y, check_finite=False)
    return mu_w, Sigma_w


def _log_evidence(Phi_a, alpha, r, y):
    """log N(y | 0, Phi diag(1/alpha) Phi^T + diag(r)) via Cholesky."""
    n = y.size
    Cp = (Phi_a / alpha[None, :]) @ Phi_a.T if alpha.size else np.zeros((n, n))
    Cp = Cp + np.diag(r)
    L = chol_factor(0.5 * (Cp + Cp.T), "collapsed covariance")
    v = sla.solve_triangular(L, y, lower=True, check_finite=False)
    return float(-0.5 * (n * np.log(2 * np.pi)
                         + 2.0 * np.sum(np.log(np.diag(L))) + v @ v))


def reduced_to_moments(lam, K, mu0):
    """Moments of q(g) from the diagonal reduced parameterization:
    Sigma = (K^-1 + diag(lam))^-1, mu = K (lam - 1/2) + mu0 1."""
    lam = np.asarray(lam, dtype=float).ravel()
    if np.any(lam <= 0.0) or np.any(lam >= 0.5):
        raise ValueError("reduced parameters must lie in (0, 1/2)")
    n = lam.size
    root = np.sqrt(lam)
    B = np.eye(n) + root[:, None] * K * root[None, :]
    LB = chol_factor(B, "reduced system")
    V = sla.solve_triangular(LB, root[:, None] * K, lower=True,
                             check_finite=False)
    Sigma = K - V.T @ V
    Sigma = 0.5 * (Sigma + Sigma.T)
    mu = K @ (lam - 0.5) + mu0
    return mu, Sigma


def collapsed_bound(state: VariationalState, Phi, y) -> float:
    """Evidence lower bound at the state's q(g) moments and precisions."""
    Phi = np.asarray(getattr(Phi, "values", Phi), dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    Phi_a = Phi[:, state.active_indices]
    r = noise_diag(state.mu, state.Sigma)
    f1 = _log_evidence(Phi_a, state.alpha, r, y)
    kl = gauss_kl(state.mu, state.Sigma,
                  np.full(y.size, state.mu0), state.K)
    return f1 - 0.25 * float(np.trace(state.Sigma)) - kl


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _eta_from_lam(lam):
    lam = np.clip(lam, 1e-12, 0.5 - 1e-12)
    s = 2.0 * lam  # sigmoid value
    return np.log(s) - np.log1p(-s)


def _bound_value_grad(x, D2, Phi_a, alpha, y):
    """Bound and its analytic gradient in the packed variables
    x = [eta (N), log_ell, log_sv, mu0] with lam = sigmoid(eta)/2."""
    n = y.size
    eta = x[:n]
    log_ell, log_sv, mu0 = x[n], x[n + 1], x[n + 2]
    lam = 0.5 * _sigmoid(eta)
    lam = np.clip(lam, 1e-12, 0.5 - 1e-12)
    K, C = _noise_cov(D2, log_ell, log_sv)

    root = np.sqrt(lam)
    B = np.eye(n) + root[:, None] * K * root[None, :]
    LB = chol_factor(B, "reduced system")
    V = sla.solve_triangular(LB, root[:, None] * K, lower=True,
                             check_finite=False)
    Sigma = K - V.T @ V
    Sigma = 0.5 * (Sigma + Sigma.T)
    sdiag = np.diag(Sigma)
    v = lam - 0.5
    Kv = K @ v
    mu = Kv + mu0

    expo = np.clip(mu - 0.5 * sdiag, -700.0, 700.0)
    r = np.exp(expo)

    Cp = (Phi_a / alpha[None, :]) @ Phi_a.T + np.diag(r)
    Lc = chol_factor(0.5 * (Cp + Cp.T), "collapsed covariance")
    beta = sla.cho_solve((Lc, True), y, check_finite=False)
    logdet_Cp = 2.0 * np.sum(np.log(np.diag(Lc)))
    f1 = -0.5 * (n * np.log(2 * np.pi) + logdet_Cp + y @ beta)

    logdet_B = 2.0 * np.sum(np.log(np.diag(LB)))
    kl = 0.5 * (logdet_B - float(lam @ sdiag) + float(v @ Kv))
    fval = f1 - 0.25 * float(np.sum(sdiag)) - kl

    # gradient pieces
    eye = np.eye(n)
    Cinv = sla.cho_solve((Lc, True), eye, check_finite=False)
    d = 0.5 * (beta**2 - np.diag(Cinv))
    u = d * r
    LK = chol_factor(K, "noise covariance")
    Kinv = sla.cho_solve((LK, True), eye, check_finite=False)

    fs = -0.5 * u - 0.25 + 0.5 * lam          # diag of dF/dSigma
    g_lam = K @ u + ((-fs)[:, None] * Sigma**2).sum(axis=0) - Kv
    g_eta = g_lam * lam * (1.0 - 2.0 * lam)
    g_mu0 = float(np.sum(u))

    S = eye - Sigma * lam[None, :]            # Sigma K^-1
    M = (np.outer(u, v)
         + S.T @ (fs[:, None] * S)
         + 0.5 * Kinv @ Sigma @ Kinv
         - 0.5 * np.outer(v, v)
         - 0.5 * Kinv)
    g_log_sv = float(np.sum(M * K))
    ell = np.exp(log_ell)
    dK_dlog_ell = np.exp(log_sv) * C * (D2 / ell**2)
    g_log_ell = float(np.sum(M * dK_dlog_ell))

    grad = np.concatenate([g_eta, [g_log_ell, g_log_sv, g_mu0]])
    return fval, grad


def bound_gradients(state: VariationalState, Phi, y):
    """Analytic gradient of the bound in the packed coordinates
    (eta = unconstrained reduced parameters, log lengthscale,
    log signal variance, mu0), evaluated at the state."""
    Phi = np.asarray(getattr(Phi, "values", Phi), dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    Phi_a = Phi[:, state.active_indices]
    D2 = _sqdist(state.X, state.X)
    x = np.concatenate([_eta_from_lam(state.lam),
                        [state.log_ell, state.log_sv, state.mu0]])
    _, grad = _bound_value_grad(x, D2, Phi_a, state.alpha, y)
    if not np.all(np.isfinite(grad)):
        bad = int(np.argmax(~np.isfinite(grad)))
        raise FloatingPointError(f"non-finite bound gradient at coordinate {bad}")
    return grad


def update_alpha(alpha, Phi_a, r, y, max_inner: int = 30):
    """Effective-degrees fixed point for the weight precisions,
    alpha_j <- (1 - alpha_j Sigma_w_jj) / mu_w_j^2, iterated with a
    safeguard: a step is geometrically backed off toward the previous
    precisions until the collapsed evidence does not decrease."""
    alpha = np.asarray(alpha, dtype=float).copy()
    ev = _log_evidence(Phi_a, alpha, r, y)
    for _ in range(max_inner):
        mu_w, Sigma_w = weight_posterior(Phi_a, alpha, r, y)
        gamma = np.clip(1.0 - alpha * np.diag(Sigma_w), 1e-12, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            proposal = gamma / mu_w**2
        proposal = np.where(np.isfinite(proposal) & (proposal > 0),
                            proposal, _ALPHA_MAX)
        proposal = np.clip(proposal, _ALPHA_MIN, _ALPHA_MAX)
        trial = proposal
        accepted = False
        for _ in range(8):
            ev_new = _log_evidence(Phi_a, trial, r, y)
            if ev_new >= ev - 1e-10:
                accepted = True
                break
            trial = np.sqrt(trial * alpha)  # back off in log space
        if not accepted:
            break
        change = float(np.max(np.abs(np.log(trial) - np.log(alpha))))
        alpha, ev = trial, ev_new
        if change < 1e-3:
            break
    return alpha, ev


def prune_state(state: VariationalState, threshold: float):
    """Drop basis columns whose precision exceeds the threshold; pruning
    the last column falls back to keeping the smallest-precision one."""
    mask = state.alpha <= threshold
    if np.all(mask):
        return state, False
    if not np.any(mask):
        keep = int(np.argmin(state.alpha))
        mask[keep] = True
    state.active_indices = [a for a, m in zip(state.active_indices, mask) if m]
    state.alpha = state.alpha[mask]
    return state, True


def diagnostic_alpha(Phi, y, mu, Sigma, alpha, active):
    """The additive-denominator precision formula; dimensionally suspect,
    evaluated for logging only and never used to train."""
    Phi = np.asarray(getattr(Phi, "values", Phi), dtype=float)
    r = noise_diag(mu, Sigma)
    out = np.empty(len(active))
    for idx, j in enumerate(active):
        denom = (y - r
                 - sum(Phi[:, i] / a for i, a in zip(active, alpha) if i != j))
        with np.errstate(divide="ignore", invalid="ignore"):
            out[idx] = float(np.sum(Phi[:, j] / denom))
    return out


def fit_vi(data: Dataset, kernel: Optional[KernelSpec] = None,
           config: Optional[VIConfig] = None) -> HrvmModel:
    """Train by alternating: exact weight posterior, L-BFGS ascent of the
    bound over (reduced q(g) parameters, noise-GP hyperparameters, mu0),
    safeguarded precision updates, then pruning."""
    kernel = kernel or KernelSpec()
    config = config or VIConfig()
    if config.standardize:
        work, record = standardize(data)
    else:
        work, record = data, Standardization.identity(data.q)
    y = work.y
    X = work.X
    n = y.size
    if n < 3:
        raise ValueError("need at least 3 points")

    design = build_design_matrix(X, kernel)
    Phi = design.values
    active = list(range(Phi.shape[1]))
    alpha = np.ones(len(active))

    D2 = _sqdist(X, X)
    off = D2[np.triu_indices(n, k=1)]
    ell0 = float(np.sqrt(np.median(off[off > 0]))) if np.any(off > 0) else 1.0
    log_ell = float(np.log(ell0))
    log_sv = 0.0
    var_y = max(float(np.var(y)), 1e-12)
    mu0 = float(np.log(0.1 * var_y))
    lam = np.full(n, 0.25)

    clamp = config.clamp_g
    K, _ = _noise_cov(D2, log_ell, log_sv)
    if clamp is None:
        mu, Sigma = reduced_to_moments(lam, K, mu0)
    else:
        mu = np.full(n, float(clamp))
        Sigma = np.zeros((n, n))

    training_log: List[float] = []
    prune_flags: List[bool] = []
    prune_shifts: List[float] = []
    status = "max_iter"
    n_iter = 0
    f_prev = -np.inf
    stalled_once = False

    for it in range(config.max_iter):
        n_iter = it + 1
        Phi_a = Phi[:, active]
        r = noise_diag(mu, Sigma)
        mu_w, Sigma_w = weight_posterior(Phi_a, alpha, r, y)

        if clamp is None:
            x0 = np.concatenate([_eta_from_lam(lam), [log_ell, log_sv, mu0]])
            free = np.ones(x0.size, dtype=bool)
            if not config.learn_theta:
                free[n] = free[n + 1] = False
            if not config.learn_mu0:
                free[n + 2] = False

            def stage(x_start, free_mask, budget):
                def negf(xfree):
                    x = x_start.copy()
                    x[free_mask] = xfree
                    f, g = _bound_value_grad(x, D2, Phi_a, alpha, y)
                    return -f, -g[free_mask]
                f_start = negf(x_start[free_mask])[0]
                res = minimize(negf, x_start[free_mask], jac=True,
                               method="L-BFGS-B",
                               options={"maxiter": budget, "maxls": 40})
                # a line-search abort counts as a failure only when the
                # stage also made no progress from its starting point
                ok = res.success or res.fun < f_start - 1e-12
                if not ok:
                    res2 = minimize(negf, x_start[free_mask], jac=True,
                                    method="L-BFGS-B",
                                    options={"maxiter": max(budget // 2, 2),
                                             "maxls": 60})
                    if res2.fun < res.fun:
                        res = res2
                    ok = res.success or res.fun < f_start - 1e-12
                out = x_start.copy()
                out[free_mask] = res.x
                return out, ok

            # reduced parameters (and mu0) first, hyperparameters jointly after:
            # moving theta before q(g) adapts collapses the noise process
            free_q = free.copy()
            free_q[n] = free_q[n + 1] = False
            x1, ok1 = stage(x0, free_q, config.inner_maxiter)
            ok2 = True
            if free[n] or free[n + 1]:
                x1, ok2 = stage(x1, free, config.inner_maxiter)
            if not (ok1 and ok2):
                if stalled_once:
                    status = "stalled"
                stalled_once = True
            f0, _ = _bound_value_grad(x0, D2, Phi_a, alpha, y)
            f1v, _ = _bound_value_grad(x1, D2, Phi_a, alpha, y)
            if f1v >= f0:
                eta = x1[:n]
                lam = np.clip(0.5 * _sigmoid(eta), 1e-12, 0.5 - 1e-12)
                log_ell, log_sv, mu0 = x1[n], x1[n + 1], x1[n + 2]
                K, _ = _noise_cov(D2, log_ell, log_sv)
            mu, Sigma = reduced_to_moments(lam, K, mu0)
            r = noise_diag(mu, Sigma)

        alpha, _ = update_alpha(alpha, Phi_a, r, y)

        state = VariationalState(X=X, mu=mu, Sigma=Sigma, lam=lam,
                                 alpha=alpha, active_indices=list(active),
                                 mu0=mu0, log_ell=log_ell, log_sv=log_sv, K=K)
        if clamp is None:
            fval = collapsed_bound(state, Phi, y)
        else:
            fval = _log_evidence(Phi[:, active], alpha, r, y)
        training_log.append(fval)

        will_prune = bool(np.any(state.alpha > config.alpha_threshold))
        if will_prune:
            mw_b, _ = weight_posterior(Phi[:, active], alpha, r, y)
            fit_before = Phi[:, active] @ mw_b
        state, pruned = prune_state(state, config.alpha_threshold)
        active = state.active_indices
        alpha = state.alpha
        prune_flags.append(pruned)
        if pruned:
            mw_a, _ = weight_posterior(Phi[:, active], alpha, r, y)
            shift = float(np.sqrt(np.mean(
                (fit_before - Phi[:, active] @ mw_a) ** 2)))
            prune_shifts.append(shift)

        if status == "stalled":
            break
        if (not pruned and it > 0
                and abs(fval - f_prev) < config.tol * (1.0 + abs(fval))):
            status = "converged"
            break
        f_prev = fval

    Phi_a = Phi[:, active]
    r = noise_diag(mu, Sigma)
    mu_w, Sigma_w = weight_posterior(Phi_a, alpha, r, y)
    sv = float(np.exp(log_sv))
    cfg = asdict(config)
    cfg["prune_iterations"] = [i for i, p in enumerate(prune_flags) if p]
    cfg["prune_shifts"] = prune_shifts
    return HrvmModel(method="vi", kernel=kernel, centers=design.centers,
                     active_indices=list(active), alpha=alpha,
                     mu_w=mu_w, Sigma_w=Sigma_w,
                     noise_mu0=float(mu0),
                     noise_lengthscale=float(np.exp(log_ell)),
                     noise_signal_variance=sv,
                     noise_jitter=_JITTER_FRAC * sv,
                     g_mu=mu, g_Sigma=Sigma,
                     standardization=record,
                     training_log=training_log, status=status,
                     n_iter=n_iter, config=cfg)
