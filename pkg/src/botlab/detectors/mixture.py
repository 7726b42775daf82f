"""Mixture-of-experts detector.

Three logistic experts each see one disjoint feature group (content
statistics, account metadata, temporal behavior). The mixture output is
a softmax-gated convex combination of expert probabilities; gates and
expert weights are fit jointly by full-batch gradient descent on the
log-loss. Zero-initialized parameters make training deterministic and
give untrained models uniform gates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FEATURE_GROUPS, FEATURE_NAMES

GROUP_ORDER = ("content", "metadata", "temporal")


@dataclass(frozen=True)
class MixtureParams:
    epochs: int = 400
    learning_rate: float = 0.5

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs={self.epochs} must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def group_indices(schema: tuple[str, ...] = FEATURE_NAMES
                  ) -> list[np.ndarray]:
    """Column indices of each expert's feature group, in GROUP_ORDER."""
    cols = {name: i for i, name in enumerate(schema)}
    out = []
    for group in GROUP_ORDER:
        try:
            out.append(np.asarray([cols[f] for f in FEATURE_GROUPS[group]],
                                  dtype=int))
        except KeyError as exc:
            raise ValueError(f"schema lacks feature {exc} "
                             f"needed by group {group!r}") from exc
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(g: np.ndarray) -> np.ndarray:
    e = np.exp(g - g.max())
    return e / e.sum()


def pack(gammas: np.ndarray, weights: list[np.ndarray],
         biases: np.ndarray) -> np.ndarray:
    """Flatten mixture parameters into one vector (gates, then each
    expert's weights and bias)."""
    parts = [np.asarray(gammas, dtype=float)]
    for w, b in zip(weights, biases):
        parts.append(np.asarray(w, dtype=float))
        parts.append(np.asarray([b], dtype=float))
    return np.concatenate(parts)


def unpack(theta: np.ndarray, group_sizes: list[int]
           ) -> tuple[np.ndarray, list[np.ndarray], np.ndarray]:
    k = len(group_sizes)
    gammas = theta[:k]
    weights = []
    biases = np.empty(k)
    pos = k
    for e, size in enumerate(group_sizes):
        weights.append(theta[pos:pos + size])
        biases[e] = theta[pos + size]
        pos += size + 1
    return gammas, weights, biases


def loss_and_grad(theta: np.ndarray, Xg: list[np.ndarray],
                  y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean log-loss of the mixture and its analytic gradient.

    ``Xg`` holds each expert's (n, d_e) feature block. Raises on a
    non-finite loss instead of clamping probabilities.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    group_sizes = [x.shape[1] for x in Xg]
    gammas, weights, biases = unpack(theta, group_sizes)
    gates = _softmax(gammas)
    s = np.column_stack([_sigmoid(x @ w + b)
                         for x, w, b in zip(Xg, weights, biases)])
    p = s @ gates
    with np.errstate(divide="raise", invalid="raise"):
        try:
            loss = -float(np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
        except FloatingPointError:
            raise FloatingPointError(
                "mixture log-loss is non-finite (saturated expert)") from None
    if not np.isfinite(loss):
        raise FloatingPointError("mixture log-loss is non-finite")

    # dL/dp_i, then chain into gates and expert parameters
    dldp = (p - y) / (p * (1 - p)) / n
    grad_gamma = gates * ((s - p[:, None]) * dldp[:, None]).sum(axis=0)
    grads = [grad_gamma]
    for e, x in enumerate(Xg):
        dz = dldp * gates[e] * s[:, e] * (1 - s[:, e])
        grads.append(dz @ x)
        grads.append(np.asarray([dz.sum()]))
    return loss, np.concatenate(grads)


@dataclass(frozen=True)
class MixtureModel:
    schema: tuple[str, ...]
    theta: tuple[float, ...]
    feature_mean: tuple[float, ...]
    feature_scale: tuple[float, ...]
    params: MixtureParams

    def gate_weights(self) -> dict[str, float]:
        sizes = [len(FEATURE_GROUPS[g]) for g in GROUP_ORDER]
        gammas, _, _ = unpack(np.asarray(self.theta), sizes)
        gates = _softmax(gammas)
        return dict(zip(GROUP_ORDER, (float(g) for g in gates)))

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Z = (X - np.asarray(self.feature_mean)) / np.asarray(
            self.feature_scale)
        idx = group_indices(self.schema)
        Xg = [Z[:, g] for g in idx]
        sizes = [g.size for g in idx]
        gammas, weights, biases = unpack(np.asarray(self.theta), sizes)
        gates = _softmax(gammas)
        s = np.column_stack([_sigmoid(x @ w + b)
                             for x, w, b in zip(Xg, weights, biases)])
        return s @ gates


def train_mixture(X: np.ndarray, y: np.ndarray,
                  params: MixtureParams,
                  schema: tuple[str, ...] = FEATURE_NAMES) -> MixtureModel:
    params.validate()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) and y must be (n,)")
    if y.min() == y.max():
        raise ValueError("training data contains a single class")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    Z = (X - mean) / scale
    idx = group_indices(schema)
    Xg = [Z[:, g] for g in idx]
    theta = np.zeros(len(idx) + sum(g.size + 1 for g in idx))
    for _ in range(params.epochs):
        _, grad = loss_and_grad(theta, Xg, y)
        theta = theta - params.learning_rate * grad
    return MixtureModel(schema=schema, theta=tuple(float(t) for t in theta),
                        feature_mean=tuple(float(m) for m in mean),
                        feature_scale=tuple(float(s) for s in scale),
                        params=params)
