"""Predictive distributions at new inputs and evaluation metrics.

All quantities are reported in the original units of the training data;
the log-variance moments refer to the log of the original-unit noise
variance (a constant shift of 2 log y_scale relative to training units).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .kernels import cross_covariance, design_matrix_at, gp_covariance
from .model import HrvmModel
from .numerics import chol_factor, gauss_hermite, lognormal_mean
from .rvm import RvmModel, rvm_predict

__all__ = ["PredictiveDist", "predict", "rvm_predictive_dist", "nlpd", "rmse"]


@dataclass(frozen=True)
class PredictiveDist:
    """Per-point predictive moments: the latent function contribution,
    the log-noise-variance GP moments, and their combination."""

    latent_mean: np.ndarray
    latent_var: np.ndarray
    g_mean: np.ndarray
    g_var: np.ndarray
    total_var: np.ndarray


def predict(model: HrvmModel, Xstar) -> PredictiveDist:
    """Predictive moments at new inputs.

    The latent part comes from the weight posterior; the log-variance
    process is conditioned on its training-time posterior by standard GP
    algebra, and the expected noise variance enters the total as the
    log-normal mean exp(g_mean + g_var / 2).
    """
    record = model.standardization
    Xs = record.apply_x(Xstar)
    Phi_s = design_matrix_at(Xs, model.kernel, model.centers,
                             model.active_indices)
    if model.mu_w.size:
        latent_mean = Phi_s @ model.mu_w
        latent_var = np.maximum(
            np.sum((Phi_s @ model.Sigma_w) * Phi_s, axis=1), 0.0)
    else:
        latent_mean = np.zeros(Xs.shape[0])
        latent_var = np.zeros(Xs.shape[0])

    if np.all(model.g_Sigma == 0.0) and np.ptp(model.g_mu) == 0.0:
        # degenerate (clamped) posterior: the noise is a known constant
        g_mean = np.full(Xs.shape[0], float(model.g_mu[0]))
        g_var = np.zeros(Xs.shape[0])
        return _assemble(record, latent_mean, latent_var, g_mean, g_var)

    prior = model.noise_prior()
    K = gp_covariance(model.centers, prior)
    L = chol_factor(K, "noise covariance")
    ks = cross_covariance(Xs, model.centers, prior)      # n* x N
    kss = prior.kernel.signal_variance + prior.jitter
    W = sla.cho_solve((L, True), ks.T, check_finite=False)   # K^-1 ks^T
    g_mean = model.noise_mu0 + ks @ sla.cho_solve(
        (L, True), model.g_mu - model.noise_mu0, check_finite=False)
    reduce_term = np.sum(ks * W.T, axis=1)
    add_term = np.sum(W * (model.g_Sigma @ W), axis=0)
    g_var = np.maximum(kss - reduce_term + add_term, 0.0)

    return _assemble(record, latent_mean, latent_var, g_mean, g_var)


def _assemble(record, latent_mean, latent_var, g_mean, g_var) -> PredictiveDist:
    latent_mean = record.invert_y(latent_mean)
    scale2 = record.y_scale**2
    latent_var = latent_var * scale2
    g_mean = g_mean + np.log(scale2)
    total_var = latent_var + lognormal_mean(g_mean, g_var)
    return PredictiveDist(latent_mean=latent_mean, latent_var=latent_var,
                          g_mean=g_mean, g_var=g_var, total_var=total_var)


def rvm_predictive_dist(model: RvmModel, Xstar) -> PredictiveDist:
    """Homoscedastic predictive cast into the shared container
    (deterministic log-variance, so NLPD reduces to the Gaussian form)."""
    mean, var = rvm_predict(model, Xstar)
    sigma2 = model.sigma2 * model.standardization.y_scale**2
    n = mean.size
    return PredictiveDist(latent_mean=mean,
                          latent_var=np.maximum(var - sigma2, 0.0),
                          g_mean=np.full(n, np.log(sigma2)),
                          g_var=np.zeros(n),
                          total_var=var)


def nlpd(pred: PredictiveDist, y, quad_order: int = 32) -> float:
    """Mean negative log predictive density, marginalizing the
    log-variance by Gauss-Hermite quadrature (exact Gaussian formula
    when the log-variance is deterministic)."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size != pred.latent_mean.size:
        raise ValueError("length mismatch between predictions and targets")
    quad = gauss_hermite(quad_order)
    total = 0.0
    for m, lv, gm, gv, yi in zip(pred.latent_mean, pred.latent_var,
                                 pred.g_mean, pred.g_var, y):
        if gv < 1e-14:
            var = lv + np.exp(gm)
            ll = -0.5 * (np.log(2 * np.pi * var) + (yi - m) ** 2 / var)
        else:
            g = gm + np.sqrt(gv) * quad.nodes
            var = lv + np.exp(np.clip(g, -700, 700))
            logp = -0.5 * (np.log(2 * np.pi * var) + (yi - m) ** 2 / var)
            shift = np.max(logp)
            ll = shift + np.log(np.sum(quad.weights * np.exp(logp - shift)))
        total += ll
    return float(-total / y.size)


def rmse(pred_mean, y) -> float:
    """Root mean squared error."""
    pred_mean = np.asarray(pred_mean, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if pred_mean.size != y.size:
        raise ValueError("length mismatch")
    return float(np.sqrt(np.mean((pred_mean - y) ** 2)))
