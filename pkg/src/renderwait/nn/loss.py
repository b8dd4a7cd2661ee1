"""Binary cross-entropy on logits."""

from __future__ import annotations

import numpy as np

from renderwait.errors import InvalidArgument


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean BCE over the batch and its gradient w.r.t. ``logits``.

    Uses ``max(z, 0) - z*t + log1p(exp(-|z|))`` so large logits never overflow.
    """
    z = np.asarray(logits, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if z.shape != t.shape:
        raise InvalidArgument(f"logit/target shape mismatch: {z.shape} vs {t.shape}")
    if not np.all((t == 0) | (t == 1)):
        raise InvalidArgument("targets must be 0 or 1")
    if not np.all(np.isfinite(z)):
        raise InvalidArgument("logits must be finite")
    n = z.shape[0]
    per_item = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    grad = (sigmoid(z) - t) / n
    return float(per_item.sum() / n), grad.astype(np.asarray(logits).dtype, copy=False)
