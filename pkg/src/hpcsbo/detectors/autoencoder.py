"""Fully connected autoencoder (tanh hidden layers, linear output) trained with Adam."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass(frozen=True)
class AutoencoderModel:
    sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    epochs: int
    lr: float
    batch: int
    seed: int
    final_loss: float
    recon_threshold: float

    @property
    def dim(self) -> int:
        return self.sizes[0]

    @property
    def latent_dim(self) -> int:
        return self.sizes[len(self.sizes) // 2]


def default_arch(d: int) -> tuple[int, ...]:
    """d-h-b-h-d with b = min(3, d) and h ~ 3d/4; d = 8 gives 8-6-3-6-8."""
    b = min(3, d)
    h = max(b, round(0.75 * d))
    return (d, h, b, h, d)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def forward(weights, biases, X) -> list[np.ndarray]:
    """Activations of every layer, input first."""
    acts = [X]
    last = len(weights) - 1
    for k, (W, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ W + b
        acts.append(z if k == last else np.tanh(z))
    return acts


def loss_and_grads(weights, biases, X):
    """Mean over samples of the per-sample mean squared error, and its gradients."""
    acts = forward(weights, biases, X)
    out = acts[-1]
    n, d = X.shape
    loss = float(np.mean((out - X) ** 2))
    delta = 2.0 * (out - X) / (n * d)
    gW, gb = [None] * len(weights), [None] * len(weights)
    for k in range(len(weights) - 1, -1, -1):
        gW[k] = acts[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ weights[k].T) * (1.0 - acts[k] ** 2)
    return loss, gW, gb


def fit_autoencoder(X, arch: tuple[int, ...] | None = None, epochs: int = 200, lr: float = 1e-3,
                    batch: int = 32, seed: int = 0, quantile: float = 0.95) -> AutoencoderModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    sizes = tuple(arch) if arch is not None else default_arch(d)
    if sizes[0] != d or sizes[-1] != d:
        raise ValueError(f"architecture {sizes} does not match {d} input features")
    rng = np.random.default_rng(seed)
    W = [glorot(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]
    B = [np.zeros(b) for b in sizes[1:]]
    params = W + B
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    t = 0
    loss = float("nan")
    for epoch in range(epochs):
        order = rng.permutation(n)
        for s in range(0, n, batch):
            xb = X[order[s:s + batch]]
            loss, gW, gb = loss_and_grads(W, B, xb)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"autoencoder loss became {loss} at epoch {epoch}, step {t} "
                    f"(lr={lr}, batch={batch}); lower the learning rate or check for degenerate inputs")
            t += 1
            c1 = 1.0 - BETA1 ** t
            c2 = 1.0 - BETA2 ** t
            for p, g, mk, vk in zip(params, gW + gb, m, v):
                mk *= BETA1
                mk += (1.0 - BETA1) * g
                vk *= BETA2
                vk += (1.0 - BETA2) * g * g
                p -= lr * (mk / c1) / (np.sqrt(vk / c2) + ADAM_EPS)
    errs = np.mean((forward(W, B, X)[-1] - X) ** 2, axis=1)
    return AutoencoderModel(sizes, tuple(W), tuple(B), epochs, lr, batch, seed, float(errs.mean()),
                            float(np.quantile(errs, quantile)))


def _check(model: AutoencoderModel, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.dim:
        raise ValueError(f"autoencoder expects {model.dim} features, got {x.shape[1]}")
    return x


def encode(model: AutoencoderModel, x) -> np.ndarray:
    x = _check(model, x)
    return forward(model.weights, model.biases, x)[len(model.sizes) // 2]


def recon_error(model: AutoencoderModel, x) -> np.ndarray:
    x = _check(model, x)
    return np.mean((forward(model.weights, model.biases, x)[-1] - x) ** 2, axis=1)


def recon_anomaly(model: AutoencoderModel, x) -> np.ndarray:
    return recon_error(model, x) > model.recon_threshold
