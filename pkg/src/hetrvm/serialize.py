"""Versioned JSON persistence for trained models.

Numbers are written with Python's shortest round-trip float encoding, so
a save / load cycle reproduces predictions to the last bit.  The format
is self-describing: a version field, the model kind, and every field
needed to rebuild the model.
"""

from __future__ import annotations

import json

import numpy as np

from .data import Standardization
from .kernels import KernelSpec
from .model import HrvmModel
from .rvm import RvmModel

__all__ = ["FORMAT_VERSION", "SchemaError", "save_model", "load_model",
           "model_to_dict", "model_from_dict"]

FORMAT_VERSION = 1


class SchemaError(ValueError):
    """Model file violates the expected schema (bad version, missing or
    malformed field)."""


def _arr(a):
    return np.asarray(a, dtype=float).tolist()


def _kernel_to_dict(k: KernelSpec):
    return {"family": k.family, "lengthscale": k.lengthscale,
            "degree": k.degree, "include_bias": k.include_bias,
            "signal_variance": k.signal_variance}


def _kernel_from_dict(d):
    return KernelSpec(family=d["family"], lengthscale=d["lengthscale"],
                      degree=d["degree"], include_bias=d["include_bias"],
                      signal_variance=d["signal_variance"])


def _std_to_dict(s: Standardization):
    return {"x_mean": _arr(s.x_mean), "x_scale": _arr(s.x_scale),
            "y_mean": s.y_mean, "y_scale": s.y_scale}


def _std_from_dict(d):
    return Standardization(x_mean=np.asarray(d["x_mean"], dtype=float),
                           x_scale=np.asarray(d["x_scale"], dtype=float),
                           y_mean=float(d["y_mean"]),
                           y_scale=float(d["y_scale"]))


def model_to_dict(model) -> dict:
    if isinstance(model, HrvmModel):
        body = {
            "model_kind": "hetrvm",
            "method": model.method,
            "kernel": _kernel_to_dict(model.kernel),
            "centers": _arr(model.centers),
            "active_indices": list(map(int, model.active_indices)),
            "alpha": _arr(model.alpha),
            "mu_w": _arr(model.mu_w),
            "Sigma_w": _arr(model.Sigma_w),
            "noise_mu0": model.noise_mu0,
            "noise_lengthscale": model.noise_lengthscale,
            "noise_signal_variance": model.noise_signal_variance,
            "noise_jitter": model.noise_jitter,
            "g_mu": _arr(model.g_mu),
            "g_Sigma": _arr(model.g_Sigma),
            "standardization": _std_to_dict(model.standardization),
            "training_log": [float(v) for v in model.training_log],
            "status": model.status,
            "n_iter": int(model.n_iter),
            "config": model.config,
        }
    elif isinstance(model, RvmModel):
        body = {
            "model_kind": "rvm",
            "kernel": _kernel_to_dict(model.kernel),
            "centers": _arr(model.centers),
            "active_indices": list(map(int, model.active_indices)),
            "alpha": _arr(model.alpha),
            "sigma2": model.sigma2,
            "mu_w": _arr(model.mu_w),
            "Sigma_w": _arr(model.Sigma_w),
            "standardization": _std_to_dict(model.standardization),
            "training_log": [float(v) for v in model.training_log],
            "status": model.status,
            "n_iter": int(model.n_iter),
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {"format_version": FORMAT_VERSION, **body}


def model_from_dict(doc: dict):
    if not isinstance(doc, dict):
        raise SchemaError("model document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {version!r} "
                          f"(expected {FORMAT_VERSION})")
    kind = doc.get("model_kind")
    try:
        if kind == "hetrvm":
            m = doc["mu_w"]
            return HrvmModel(
                method=doc["method"],
                kernel=_kernel_from_dict(doc["kernel"]),
                centers=np.asarray(doc["centers"], dtype=float),
                active_indices=[int(i) for i in doc["active_indices"]],
                alpha=np.asarray(doc["alpha"], dtype=float),
                mu_w=np.asarray(m, dtype=float),
                Sigma_w=np.asarray(doc["Sigma_w"], dtype=float).reshape(
                    len(m), len(m)),
                noise_mu0=float(doc["noise_mu0"]),
                noise_lengthscale=float(doc["noise_lengthscale"]),
                noise_signal_variance=float(doc["noise_signal_variance"]),
                noise_jitter=float(doc["noise_jitter"]),
                g_mu=np.asarray(doc["g_mu"], dtype=float),
                g_Sigma=np.asarray(doc["g_Sigma"], dtype=float),
                standardization=_std_from_dict(doc["standardization"]),
                training_log=[float(v) for v in doc["training_log"]],
                status=doc["status"],
                n_iter=int(doc["n_iter"]),
                config=doc.get("config", {}),
            )
        if kind == "rvm":
            m = doc["mu_w"]
            return RvmModel(
                kernel=_kernel_from_dict(doc["kernel"]),
                centers=np.asarray(doc["centers"], dtype=float),
                active_indices=[int(i) for i in doc["active_indices"]],
                alpha=np.asarray(doc["alpha"], dtype=float),
                sigma2=float(doc["sigma2"]),
                mu_w=np.asarray(m, dtype=float),
                Sigma_w=np.asarray(doc["Sigma_w"], dtype=float).reshape(
                    len(m), len(m)),
                standardization=_std_from_dict(doc["standardization"]),
                training_log=[float(v) for v in doc["training_log"]],
                status=doc["status"],
                n_iter=int(doc["n_iter"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed model document: {exc}") from exc
    raise SchemaError(f"unknown model_kind {kind!r}")


def save_model(model, path) -> None:
    doc = model_to_dict(model)
    text = json.dumps(doc, sort_keys=True, indent=1)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.write("\n")


def load_model(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(doc)
