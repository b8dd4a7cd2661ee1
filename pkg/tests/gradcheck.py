"""Central finite-difference gradient checking for the numpy layers.

Coordinates whose +h / -h evaluations land on different sides of a ReLU6
kink are skipped: the function is not differentiable inside that step, so
the difference quotient says nothing about the analytic gradient there.
"""

from __future__ import annotations

import numpy as np

from renderwait.nn.layers import Module, ReLU6

H = 1e-3


def _relu_modules(module: Module) -> list[ReLU6]:
    found = [module] if isinstance(module, ReLU6) else []
    for _, child in module.children():
        found += _relu_modules(child)
    return found


def _activation_pattern(relus: list[ReLU6]) -> list[np.ndarray]:
    return [((r._x > 0) & (r._x < 6)) for r in relus]


def check_gradients(module, loss_fn, x, rng, max_coords=12, h=H):
    """Return (relative error, checked, skipped) over sampled coordinates.

    ``loss_fn(output) -> (loss, dloss/doutput)``. The relative error is
    ``|a - n| / max(|a|, |n|)`` over the concatenation of every sampled
    input and parameter coordinate.
    """
    relus = _relu_modules(module)
    module.zero_grad()
    _, g = loss_fn(module.forward(x))
    dx = module.backward(g)
    base_pattern = _activation_pattern(relus)
    targets = [("input", x, dx)] + [(n, p.data, p.grad) for n, p in module.named_parameters()]

    def evaluate():
        return loss_fn(module.forward(x))[0], _activation_pattern(relus)

    analytic, numeric = [], []
    skipped = checked = 0
    for _, arr, grad in targets:
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        picks = rng.choice(flat.size, size=min(flat.size, max_coords), replace=False)
        for i in picks:
            old = flat[i]
            flat[i] = old + h
            lp, pp = evaluate()
            flat[i] = old - h
            lm, pm = evaluate()
            flat[i] = old
            if any((a != b).any() or (a != c).any() for a, b, c in zip(base_pattern, pp, pm)):
                skipped += 1
                continue
            checked += 1
            analytic.append(gflat[i])
            numeric.append((lp - lm) / (2 * h))
    a, n = np.asarray(analytic), np.asarray(numeric)
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom), checked, skipped


def projection_loss(rng, shape_hint=None):
    """Random linear functional of the output: gives non-trivial gradients everywhere."""
    cache = {}

    def loss(out):
        if "r" not in cache:
            cache["r"] = rng.standard_normal(out.shape)
        r = cache["r"]
        return float(np.sum(out * r)), r

    return loss
