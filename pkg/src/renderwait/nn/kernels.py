"""Compiled loops for the depthwise 3x3 convolution (padding 1)."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def dw_forward(x, w, stride, ho, wo):
    n, c, h, wd = x.shape
    out = np.zeros((n, c, ho, wo), dtype=x.dtype)
    for b in range(n):
        for ch in range(c):
            k = w[ch, 0]
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ky in range(3):
                        y = i * stride + ky - 1
                        if y < 0 or y >= h:
                            continue
                        for kx in range(3):
                            xx = j * stride + kx - 1
                            if xx < 0 or xx >= wd:
                                continue
                            acc += x[b, ch, y, xx] * k[ky, kx]
                    out[b, ch, i, j] = acc
    return out


@njit(cache=True)
def dw_backward(x, w, stride, g):
    n, c, h, wd = x.shape
    ho, wo = g.shape[2], g.shape[3]
    dx = np.zeros_like(x)
    dw = np.zeros(w.shape, dtype=np.float64)
    for b in range(n):
        for ch in range(c):
            k = w[ch, 0]
            for i in range(ho):
                for j in range(wo):
                    gv = g[b, ch, i, j]
                    if gv == 0.0:
                        continue
                    for ky in range(3):
                        y = i * stride + ky - 1
                        if y < 0 or y >= h:
                            continue
                        for kx in range(3):
                            xx = j * stride + kx - 1
                            if xx < 0 or xx >= wd:
                                continue
                            dw[ch, 0, ky, kx] += gv * x[b, ch, y, xx]
                            dx[b, ch, y, xx] += gv * k[ky, kx]
    return dx, dw


@njit(cache=True)
def bn_stats(x):
    """Per-channel mean and biased variance, accumulated in float64."""
    n, c, h, wd = x.shape
    count = n * h * wd
    mean = np.zeros(c)
    var = np.zeros(c)
    for ch in range(c):
        s = 0.0
        for b in range(n):
            for i in range(h):
                for j in range(wd):
                    s += x[b, ch, i, j]
        mu = s / count
        q = 0.0
        for b in range(n):
            for i in range(h):
                for j in range(wd):
                    d = x[b, ch, i, j] - mu
                    q += d * d
        mean[ch] = mu
        var[ch] = q / count
    return mean, var


@njit(cache=True)
def bn_apply(x, mean, inv_std, gamma, beta):
    n, c, h, wd = x.shape
    xhat = np.empty_like(x)
    out = np.empty_like(x)
    for b in range(n):
        for ch in range(c):
            mu, s, g, be = mean[ch], inv_std[ch], gamma[ch], beta[ch]
            for i in range(h):
                for j in range(wd):
                    v = (x[b, ch, i, j] - mu) * s
                    xhat[b, ch, i, j] = v
                    out[b, ch, i, j] = v * g + be
    return xhat, out


@njit(cache=True)
def bn_backward(xhat, inv_std, gamma, g, training):
    n, c, h, wd = g.shape
    m = n * h * wd
    dgamma = np.zeros(c)
    dbeta = np.zeros(c)
    for ch in range(c):
        sg = 0.0
        sgx = 0.0
        for b in range(n):
            for i in range(h):
                for j in range(wd):
                    sg += g[b, ch, i, j]
                    sgx += g[b, ch, i, j] * xhat[b, ch, i, j]
        dbeta[ch] = sg
        dgamma[ch] = sgx
    dx = np.empty_like(g)
    for ch in range(c):
        scale = gamma[ch] * inv_std[ch]
        a = dbeta[ch] / m if training else 0.0
        q = dgamma[ch] / m if training else 0.0
        for b in range(n):
            for i in range(h):
                for j in range(wd):
                    dx[b, ch, i, j] = scale * (g[b, ch, i, j] - a - xhat[b, ch, i, j] * q)
    return dx, dgamma, dbeta
