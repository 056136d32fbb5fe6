"""Receding-horizon gain from the backward-propagating Riccati equation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BpreConfigError",
    "BpreConfig",
    "SaturationLimits",
    "riccati_gain",
    "riccati_sequence",
    "control",
    "saturate",
    "horizon_cost",
]


class BpreConfigError(ValueError):
    pass


def _check_psd(M, name, strict=False, tol=1e-10):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise BpreConfigError(f"{name} must be square, got shape {M.shape}")
    if not np.allclose(M, M.T, atol=1e-12, rtol=0):
        raise BpreConfigError(f"{name} must be symmetric")
    lmin = np.linalg.eigvalsh(M)[0]
    if strict and lmin <= 0:
        raise BpreConfigError(f"{name} must be positive definite")
    if lmin < -tol:
        raise BpreConfigError(f"{name} must be positive semidefinite")


@dataclass
class BpreConfig:
    """Horizon and weights of the receding-horizon cost.

    ``R1`` and ``P_terminal`` act on the model state, ``R2`` on the control.
    ``E1``, when given, must factor ``R1`` as ``E1.T @ E1``.
    """

    horizon: int
    R1: np.ndarray
    R2: np.ndarray
    P_terminal: np.ndarray
    E1: np.ndarray = None

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise BpreConfigError("bpre.horizon must be >= 1")
        self.horizon = int(self.horizon)
        self.R1 = np.atleast_2d(np.asarray(self.R1, dtype=float))
        self.R2 = np.atleast_2d(np.asarray(self.R2, dtype=float))
        self.P_terminal = np.atleast_2d(np.asarray(self.P_terminal, dtype=float))
        _check_psd(self.R1, "bpre.R1")
        _check_psd(self.R2, "bpre.R2", strict=True)
        _check_psd(self.P_terminal, "bpre.P_terminal")
        if self.P_terminal.shape != self.R1.shape:
            raise BpreConfigError("bpre.P_terminal and bpre.R1 must have the same shape")
        if self.E1 is not None:
            self.E1 = np.atleast_2d(np.asarray(self.E1, dtype=float))
            if self.E1.shape[1] != self.R1.shape[0] or \
                    np.max(np.abs(self.E1.T @ self.E1 - self.R1)) > 1e-10:
                raise BpreConfigError("bpre.E1 does not factor bpre.R1")


@dataclass(frozen=True)
class SaturationLimits:
    u_min: float = -np.inf
    u_max: float = np.inf

    def __post_init__(self):
        if not np.all(np.asarray(self.u_min) < np.asarray(self.u_max)):
            raise BpreConfigError("limits.u_min must be below limits.u_max")


def _gain_from(A, B, P, R2):
    BtP = B.T @ P
    S = R2 + BtP @ B
    if S.shape == (1, 1):
        # single input: plain division is much cheaper than a factorization
        if not S[0, 0] > 0.0:
            raise np.linalg.LinAlgError("R2 + B^T P B is not positive definite")
        return (BtP @ A) / S[0, 0]
    S = 0.5 * (S + S.T)
    if not np.all(np.diag(S) > 0.0):
        raise np.linalg.LinAlgError("R2 + B^T P B is not positive definite")
    return np.linalg.solve(S, BtP @ A)


def riccati_sequence(A_m, B_m, config):
    """All cost-to-go matrices ``[P_2, ..., P_{l+1}]`` of the backward pass."""
    P = config.P_terminal
    seq = [P]
    for _ in range(config.horizon - 1):
        Gam = _gain_from(A_m, B_m, P, config.R2)
        P = A_m.T @ P @ (A_m - B_m @ Gam) + config.R1
        P = 0.5 * (P + P.T)
        seq.append(P)
    return seq[::-1]


def riccati_gain(A_m, B_m, config):
    """First-move gain ``K`` so that ``u = K x_m``."""
    A_m = np.asarray(A_m, dtype=float)
    B_m = np.asarray(B_m, dtype=float)
    n = config.R1.shape[0]
    if A_m.shape != (n, n) or B_m.shape[0] != n or config.R2.shape != (B_m.shape[1],) * 2:
        raise ValueError(
            f"shape mismatch: A_m {A_m.shape}, B_m {B_m.shape}, R1 {config.R1.shape}, "
            f"R2 {config.R2.shape}")
    P = config.P_terminal
    for _ in range(config.horizon - 1):
        Gam = _gain_from(A_m, B_m, P, config.R2)
        P = A_m.T @ P @ (A_m - B_m @ Gam) + config.R1
        P = 0.5 * (P + P.T)
    return -_gain_from(A_m, B_m, P, config.R2)


def control(K, x_m):
    """Requested control ``K @ x_m``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    x_m = np.asarray(x_m, dtype=float).reshape(-1)
    if K.shape[1] != x_m.size:
        raise ValueError(f"K has {K.shape[1]} columns, x_m has length {x_m.size}")
    return K @ x_m


def saturate(u_req, limits):
    """Clamp each channel of ``u_req`` to ``[u_min, u_max]``."""
    return np.clip(np.asarray(u_req, dtype=float), limits.u_min, limits.u_max)


def horizon_cost(A_m, B_m, config, x_init, controls):
    """Quadratic horizon cost of ``controls`` from ``x_init``."""
    A_m = np.atleast_2d(np.asarray(A_m, dtype=float))
    B_m = np.atleast_2d(np.asarray(B_m, dtype=float))
    controls = [np.asarray(u, dtype=float).reshape(-1) for u in controls]
    if len(controls) != config.horizon:
        raise ValueError(f"expected {config.horizon} controls, got {len(controls)}")
    x = np.asarray(x_init, dtype=float).reshape(-1)
    if x.size != A_m.shape[0]:
        raise ValueError("x_init does not match A_m")
    J = 0.0
    for u in controls:
        J += x @ config.R1 @ x + u @ config.R2 @ u
        x = A_m @ x + B_m @ u
    J += x @ config.P_terminal @ x
    return 0.5 * float(J)
