"""Slow, literal reference implementations used to check the fast code paths."""

from __future__ import annotations

import math

import numpy as np

from renderwait.imaging import Frame, SsimParams, ssim


def naive_ssim(a: np.ndarray, b: np.ndarray, params: SsimParams) -> float:
    """Window-by-window SSIM with explicit Gaussian weights (no resizing)."""
    k = params.window
    half = k // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g1 = np.exp(-(x**2) / (2 * params.gaussian_sigma**2))
    g1 /= g1.sum()
    w = np.outer(g1, g1)
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    vals = []
    for i in range(a.shape[0] - k + 1):
        for j in range(a.shape[1] - k + 1):
            pa, pb = a[i : i + k, j : j + k], b[i : i + k, j : j + k]
            ma, mb = (w * pa).sum(), (w * pb).sum()
            va = (w * pa * pa).sum() - ma * ma
            vb = (w * pb * pb).sum() - mb * mb
            cov = (w * pa * pb).sum() - ma * mb
            vals.append(
                ((2 * ma * mb + params.c1) * (2 * cov + params.c2))
                / ((ma * ma + mb * mb + params.c1) * (va + vb + params.c2))
            )
    return float(np.mean(vals))


def constant_ssim(u: float, v: float, params: SsimParams) -> float:
    """Closed form for two constant images: only the luminance term survives."""
    return (2 * u * v + params.c1) / (u * u + v * v + params.c1)


def naive_hac(frames: list[Frame], epsilon: float, params: SsimParams | None = None) -> list[int]:
    """Direct transcription of the sampling loop, recomputing every SSIM each round.

    Returns the indices of the emitted representatives in emission order.
    """

    def sim(i: int, j: int) -> float:
        return 1.0 if i == j else ssim(frames[i], frames[j], params)

    def medoid(members: list[int]) -> int:
        best, best_score = members[0], -math.inf
        for m in members:
            score = sum(sim(m, o) for o in members) / len(members)
            if score > best_score:
                best, best_score = m, score
        return best

    clusters = [[i] for i in range(len(frames))]
    selected = []
    while len(clusters) > 1:
        meds = [medoid(c) for c in clusters]
        best, pair = -math.inf, None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                s = sim(meds[i], meds[j])
                if s > best:
                    best, pair = s, (i, j)
        i, j = pair
        ci, cj = clusters[i], clusters[j]
        clusters = [c for k, c in enumerate(clusters) if k not in (i, j)]
        if best >= epsilon:
            selected.append(medoid(ci))
        else:
            clusters.append(ci + cj)
    if clusters:
        selected.append(medoid(clusters[0]))
    return selected
