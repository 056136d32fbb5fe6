"""Block observable canonical form of an identified ARX model."""
from __future__ import annotations

import numpy as np

__all__ = ["build_realization", "build_state", "predict_state"]


def build_realization(model):
    """Return ``(A_m, B_m, C_m)`` for ``model``.

    ``A_m`` has ``-F_i`` down its first block column and identity blocks on
    the block superdiagonal; ``B_m`` stacks the ``G_i``; ``C_m = [I 0 ... 0]``.
    """
    n = model.order
    if n == 0:
        raise ValueError("model order must be >= 1")
    p, m = model.p, model.m
    A = np.zeros((n * p, n * p))
    for i, Fi in enumerate(model.F):
        A[i * p:(i + 1) * p, :p] = -Fi
    if n > 1:
        A[: (n - 1) * p, p:] += np.eye((n - 1) * p)
    B = np.vstack(model.G).reshape(n * p, m)
    C = np.zeros((p, n * p))
    C[:, :p] = np.eye(p)
    return A, B, C


def build_state(model, y_k, y_hist, u_hist):
    """State ``x_m`` consistent with ``y_k`` and past data.

    ``y_hist[i]`` / ``u_hist[i]`` hold ``y_{k-1-i}`` / ``u_{k-1-i}``; missing
    entries are treated as zero.
    """
    n, p, m = model.order, model.p, model.m
    y_k = np.asarray(y_k, dtype=float).reshape(-1)
    if y_k.size != p:
        raise ValueError(f"y_k has length {y_k.size}, expected {p}")
    ys = np.zeros((n, p))
    us = np.zeros((n, m))
    for i in range(min(n, len(y_hist))):
        ys[i] = np.asarray(y_hist[i], dtype=float).reshape(p)
    for i in range(min(n, len(u_hist))):
        us[i] = np.asarray(u_hist[i], dtype=float).reshape(m)
    # T[l, i] = -F_{l+1} y_{k-1-i} + G_{l+1} u_{k-1-i}; block j sums T[l, l-j+1]
    T = -np.einsum("lab,ib->lia", np.asarray(model.F), ys) \
        + np.einsum("lab,ib->lia", np.asarray(model.G), us)
    x = np.zeros((n, p))
    x[0] = y_k
    for j in range(1, n):
        l = np.arange(j, n)
        x[j] = T[l, l - j].sum(axis=0)
    return x.reshape(-1)


def predict_state(A_m, B_m, x_m, u_k):
    """One-step model prediction ``A_m x_m + B_m u_k``."""
    return A_m @ x_m + B_m @ np.asarray(u_k, dtype=float).reshape(-1)
