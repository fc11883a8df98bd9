"""Gradient-trained regressors on landmark data.

Two models, both linear in their input and both trained with mini-batch
Adam on mean squared error:

* ``linear``: one affine map from the vectorized coordinates to a scalar.
* ``conv``: a 1-D convolution along the landmark axis (coordinates as input
  channels, no activation), flattened and mapped to a scalar by an affine
  head.

Inputs are standardized with training-set statistics. The response is left
on its original scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidSpec, ShapeMismatch
from .stat_models import FitResult, rmse

Params = dict[str, np.ndarray]


@dataclass(frozen=True)
class TrainSpec:
    epochs: int = 100
    batch_size: int = 63
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidSpec("epochs and batch_size must be at least 1")
        if self.learning_rate < 0:
            raise InvalidSpec("learning_rate must be non-negative")


@dataclass(frozen=True)
class ConvSpec:
    """Convolution over landmarks; ``kernel_span=None`` means the full configuration."""

    channels: int = 4
    kernel_span: int | None = None

    def span(self, p: int) -> int:
        span = p if self.kernel_span is None else self.kernel_span
        if not 1 <= span <= p:
            raise InvalidSpec(f"kernel_span {span} must lie in [1, {p}]")
        if self.channels < 1:
            raise InvalidSpec("channels must be at least 1")
        return span


@dataclass
class AdamState:
    t: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def adam_step(params: Params, grads: Params, state: AdamState, spec: TrainSpec) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update. Returns new parameters and state; inputs are not modified."""
    t = state.t + 1
    b1, b2 = spec.adam_beta1, spec.adam_beta2
    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for name, value in params.items():
        g = grads[name]
        m = b1 * state.m.get(name, np.zeros_like(value)) + (1.0 - b1) * g
        v = b2 * state.v.get(name, np.zeros_like(value)) + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_params[name] = value - spec.learning_rate * m_hat / (np.sqrt(v_hat) + spec.adam_eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(t, new_m, new_v)


# -- model definitions -------------------------------------------------------


def init_linear(d: int, rng: np.random.Generator) -> Params:
    bound = 1.0 / np.sqrt(d)
    return {"weight": rng.uniform(-bound, bound, d), "bias": rng.uniform(-bound, bound, 1)}


def linear_forward(params: Params, X: np.ndarray) -> np.ndarray:
    return X @ params["weight"] + params["bias"][0]


def linear_loss_grads(params: Params, X: np.ndarray, y: np.ndarray) -> tuple[float, Params]:
    resid = linear_forward(params, X) - y
    g = 2.0 * resid / y.size
    return float(np.mean(resid**2)), {"weight": X.T @ g, "bias": np.array([g.sum()])}


def init_conv(p: int, k: int, conv: ConvSpec, rng: np.random.Generator) -> Params:
    span = conv.span(p)
    out_len = p - span + 1
    kb = 1.0 / np.sqrt(k * span)
    hb = 1.0 / np.sqrt(conv.channels * out_len)
    return {
        "kernel": rng.uniform(-kb, kb, (conv.channels, k, span)),
        "conv_bias": rng.uniform(-kb, kb, conv.channels),
        "head": rng.uniform(-hb, hb, conv.channels * out_len),
        "head_bias": rng.uniform(-hb, hb, 1),
    }


def _patches(X: np.ndarray, span: int) -> np.ndarray:
    # (n, p, k) -> (n, T, k, span)
    return sliding_window_view(X, span, axis=1)


def conv_forward(params: Params, X: np.ndarray) -> np.ndarray:
    span = params["kernel"].shape[2]
    feat = np.einsum("ntkl,ckl->nct", _patches(X, span), params["kernel"]) + params["conv_bias"][None, :, None]
    return feat.reshape(X.shape[0], -1) @ params["head"] + params["head_bias"][0]


def conv_loss_grads(params: Params, X: np.ndarray, y: np.ndarray) -> tuple[float, Params]:
    span = params["kernel"].shape[2]
    patches = _patches(X, span)
    feat = np.einsum("ntkl,ckl->nct", patches, params["kernel"]) + params["conv_bias"][None, :, None]
    flat = feat.reshape(X.shape[0], -1)
    resid = flat @ params["head"] + params["head_bias"][0] - y
    g = 2.0 * resid / y.size
    dfeat = (g[:, None] * params["head"][None, :]).reshape(feat.shape)
    grads = {
        "kernel": np.einsum("nct,ntkl->ckl", dfeat, patches),
        "conv_bias": dfeat.sum(axis=(0, 2)),
        "head": flat.T @ g,
        "head_bias": np.array([g.sum()]),
    }
    return float(np.mean(resid**2)), grads


def conv_effective_linear(params: Params, p: int, k: int) -> tuple[np.ndarray, float]:
    """Collapse conv parameters into weights on landmark-major vectorized input."""
    kernel = params["kernel"]
    channels, _, span = kernel.shape
    out_len = p - span + 1
    head = params["head"].reshape(channels, out_len)
    w = np.zeros((p, k))
    for t in range(out_len):
        # landmark t + l, coordinate ch receives sum_c head[c, t] * kernel[c, ch, l]
        w[t : t + span] += np.einsum("c,ckl->lk", head[:, t], kernel)
    bias = float(params["head_bias"][0] + head.sum(axis=1) @ params["conv_bias"])
    return w.reshape(-1), bias


def conv_from_linear(weight: np.ndarray, bias: float, p: int, k: int, channels: int = 1) -> Params:
    """Full-span conv parameters reproducing a given linear model exactly."""
    kernel = np.zeros((channels, k, p))
    kernel[0] = np.asarray(weight, dtype=float).reshape(p, k).T
    head = np.zeros(channels)
    head[0] = 1.0
    return {"kernel": kernel, "conv_bias": np.zeros(channels), "head": head, "head_bias": np.array([float(bias)])}


# -- training ----------------------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        return cls(mean, np.where(sd > 0, sd, 1.0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


def _run_adam(params: Params, loss_grads, X: np.ndarray, y: np.ndarray, spec: TrainSpec, rng: np.random.Generator):
    state = AdamState()
    history = []
    n = y.size
    for _ in range(spec.epochs):
        order = rng.permutation(n)
        for start in range(0, n, spec.batch_size):
            batch = order[start : start + spec.batch_size]
            _, grads = loss_grads(params, X[batch], y[batch])
            params, state = adam_step(params, grads, state, spec)
        history.append(loss_grads(params, X, y)[0])
    return params, history


def _as_fit(w_std: np.ndarray, b_std: float, std: Standardizer, X_raw: np.ndarray, y: np.ndarray, history, params) -> FitResult:
    coef = w_std / std.scale
    intercept = float(b_std - std.mean @ coef)
    fit = FitResult(coef, intercept, 0.0, tuple(history), params)
    return FitResult(coef, intercept, rmse(y, fit.predict(X_raw)), tuple(history), params)


def train_linear(X, y, spec: TrainSpec = TrainSpec()) -> FitResult:
    """Single affine layer on vectorized coordinates, trained by mini-batch Adam.

    The returned coefficients act on the raw (unstandardized) input.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeMismatch(f"design {X.shape} does not match response of length {y.size}")
    rng = np.random.default_rng(spec.seed)
    std = Standardizer.fit(X)
    Xs = std.transform(X)
    params = init_linear(X.shape[1], rng)
    params, history = _run_adam(params, linear_loss_grads, Xs, y, spec, rng)
    return _as_fit(params["weight"], float(params["bias"][0]), std, X, y, history, params)


def train_conv(X, y, spec: TrainSpec = TrainSpec(), conv: ConvSpec = ConvSpec()) -> FitResult:
    """Convolution along the landmark axis plus affine head, trained like :func:`train_linear`.

    Args:
        X: Landmark tensor of shape (n, p, k); landmark order is the spatial axis.
        y: Response of length n.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 3 or X.shape[0] != y.size:
        raise ShapeMismatch(f"tensor {X.shape} does not match response of length {y.size}")
    n, p, k = X.shape
    conv.span(p)
    rng = np.random.default_rng(spec.seed)
    flat = X.reshape(n, -1)
    std = Standardizer.fit(flat)
    Xs = std.transform(flat).reshape(n, p, k)
    params = init_conv(p, k, conv, rng)
    params, history = _run_adam(params, conv_loss_grads, Xs, y, spec, rng)
    w, b = conv_effective_linear(params, p, k)
    return _as_fit(w, b, std, flat, y, history, params)


def write_weights(path: str | Path, params: Params) -> None:
    """Write parameters as ``layer,index,value`` rows (C-order flat index)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", "index", "value"])
        for name in sorted(params):
            for i, v in enumerate(np.asarray(params[name]).ravel()):
                w.writerow([name, i, format(float(v), ".17g")])


def read_weights(path: str | Path, shapes: dict[str, tuple[int, ...]]) -> Params:
    values: dict[str, list[tuple[int, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            values.setdefault(row["layer"], []).append((int(row["index"]), float(row["value"])))
    out = {}
    for name, shape in shapes.items():
        flat = np.empty(int(np.prod(shape)))
        for i, v in values[name]:
            flat[i] = v
        out[name] = flat.reshape(shape)
    return out
