"""Logistic-regression head on pooled sequence features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..metrics import confusion, mcc


@dataclass
class LinearHead:
    weights: np.ndarray
    bias: float
    # feature standardisation learned on the training split
    center: np.ndarray
    scale: np.ndarray
    steps: int = 0

    def logits(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=np.float64) - self.center) / self.scale
        return Z @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        return (self.logits(X) > 0).astype(int)

    def mcc(self, X, y) -> float:
        return mcc(*confusion(y, self.predict(X)))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def fit_linear_head(features, labels, lr: float = 0.5, max_steps: int = 10_000, tol: float = 1e-6,
                    l2: float = 0.0) -> LinearHead:
    """Minimise mean binary cross-entropy by full-batch gradient descent.

    Stops when the gradient norm falls below ``tol`` or after ``max_steps``.
    Features are standardised first; ``l2`` adds an optional ridge penalty.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels).astype(np.float64)
    if X.shape[0] != y.shape[0]:
        raise ValueError("features and labels differ in length")
    if not set(np.unique(y)) <= {0.0, 1.0}:
        raise ValueError("labels must be binary 0/1")
    counts = np.bincount(y.astype(int), minlength=2)
    if counts.min() < 2:
        raise ValueError(f"need at least 2 examples of each class, got {counts.tolist()}")
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - center) / scale
    w = np.zeros(Z.shape[1])
    b = 0.0
    n = len(y)
    step = 0
    for step in range(1, max_steps + 1):
        r = _sigmoid(Z @ w + b) - y
        gw = Z.T @ r / n + l2 * w
        gb = r.mean()
        if np.sqrt(gw @ gw + gb * gb) < tol:
            break
        w -= lr * gw
        b -= lr * gb
    return LinearHead(w, float(b), center, scale, step)


def split_evaluate(features, labels, rng: np.random.Generator, test_frac: float = 0.3, **kw):
    """Fit on a random split and return ``(head, train_mcc, test_mcc)``."""
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels)
    idx = rng.permutation(len(y))
    n_test = int(round(test_frac * len(y)))
    te, tr = idx[:n_test], idx[n_test:]
    head = fit_linear_head(X[tr], y[tr], **kw)
    return head, head.mcc(X[tr], y[tr]), head.mcc(X[te], y[te])
