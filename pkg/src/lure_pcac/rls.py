"""Recursive least squares with F-test variable-rate forgetting.

The ARX model identified here is

    y_k ~ -sum_i F_i y_{k-i} + sum_i G_i u_{k-i},

with coefficients stacked as ``theta = [vec[F_1 .. F_n], vec[G_1 .. G_n]]``
so that the one-step prediction is ``phi_k @ theta``.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .numerics import f_inv_cdf

__all__ = [
    "RlsConfigError",
    "RlsConfig",
    "IdentifiedModel",
    "RlsState",
    "regressor",
    "forgetting_factor",
    "rls_update",
    "extract_model",
    "vectorize_model",
]

log = logging.getLogger(__name__)


class RlsConfigError(ValueError):
    pass


@dataclass
class RlsConfig:
    """Hyperparameters of RLS with variable-rate forgetting.

    Parameters
    ----------
    order : int
        Model order ``n_hat``.
    p, m : int
        Output and input dimensions.
    theta0 : array_like or float
        Initial coefficient vector; a scalar fills every entry.
    psi0 : array_like or float
        Initial information matrix; a scalar ``s`` means ``s * I``.
    tau_n, tau_d : int
        Numerator and denominator window lengths of the F-test.
    eta : float
        Forgetting gain. ``eta = 0`` disables forgetting.
    alpha : float
        Significance level of the F-test.
    """

    order: int
    p: int = 1
    m: int = 1
    theta0: object = 0.0
    psi0: object = 1.0
    tau_n: int = 40
    tau_d: int = 200
    eta: float = 0.1
    alpha: float = 0.001
    identify_during_open_loop: bool = True

    def __post_init__(self):
        if self.order < 1:
            raise RlsConfigError("rls.order must be >= 1")
        if self.p < 1 or self.m < 1:
            raise RlsConfigError("rls.p and rls.m must be >= 1")
        npar = self.nparams
        th = np.asarray(self.theta0, dtype=float)
        self.theta0 = np.full(npar, float(th)) if th.ndim == 0 else th.reshape(-1).copy()
        if self.theta0.size != npar:
            raise RlsConfigError(f"rls.theta0 must have length {npar}, got {self.theta0.size}")
        ps = np.asarray(self.psi0, dtype=float)
        self.psi0 = float(ps) * np.eye(npar) if ps.ndim == 0 else ps.copy()
        if self.psi0.shape != (npar, npar):
            raise RlsConfigError(f"rls.psi0 must be {npar}x{npar}, got {self.psi0.shape}")
        if not np.allclose(self.psi0, self.psi0.T, atol=1e-12):
            raise RlsConfigError("rls.psi0 must be symmetric")
        if np.linalg.eigvalsh(self.psi0)[0] <= 0:
            raise RlsConfigError("rls.psi0 must be positive definite")
        if not (self.tau_d > self.p and self.p <= self.tau_n < self.tau_d):
            raise RlsConfigError(
                "rls.tau_n and rls.tau_d must satisfy tau_d > p and p <= tau_n < tau_d")
        if self.p > 1 and self.tau_d <= self.p + 3:
            raise RlsConfigError("rls.tau_d must exceed p + 3 when p > 1")
        if self.eta < 0:
            raise RlsConfigError("rls.eta must be >= 0")
        if not (0.0 < self.alpha <= 1.0):
            raise RlsConfigError("rls.alpha must lie in (0, 1]")

    @property
    def nparams(self):
        return self.order * self.p * (self.m + self.p)

    def f_threshold(self):
        """Square root of the F-test critical value used by ``g``."""
        if self.alpha >= 1.0:
            return 0.0
        if self.p == 1:
            return float(np.sqrt(f_inv_cdf(self.tau_n, self.tau_d, 1.0 - self.alpha)))
        _, b, _ = _mv_constants(self.p, self.tau_n, self.tau_d)
        return float(np.sqrt(f_inv_cdf(self.p * self.tau_n, b, 1.0 - self.alpha)))


def _mv_constants(p, tau_n, tau_d):
    a = (tau_n + tau_d - p - 1) * (tau_d - 1) / ((tau_d - p - 3) * (tau_d - p))
    b = 4 + (p * tau_n + 2) / (a - 1)
    c = p * tau_n * (b - 2) / (b * (tau_d - p - 1))
    return a, b, c


@dataclass(frozen=True)
class IdentifiedModel:
    """ARX coefficient blocks ``F[i]`` (p x p) and ``G[i]`` (p x m)."""

    F: tuple
    G: tuple
    step_tag: int = 0

    @property
    def order(self):
        return len(self.F)

    @property
    def p(self):
        return self.F[0].shape[0]

    @property
    def m(self):
        return self.G[0].shape[1]


@dataclass
class RlsState:
    """Mutable identification state; one per data stream."""

    config: RlsConfig
    k: int = 0
    theta: np.ndarray = None
    psi: np.ndarray = None
    errors: deque = None
    y_hist: deque = None
    u_hist: deque = None
    beta: float = 1.0
    degenerate: bool = False
    _f_thresh: float = field(default=None, repr=False)

    def __post_init__(self):
        cfg = self.config
        if self.theta is None:
            self.theta = cfg.theta0.copy()
        if self.psi is None:
            self.psi = cfg.psi0.copy()
        if self.errors is None:
            self.errors = deque(maxlen=cfg.tau_d + 1)
        if self.y_hist is None:
            self.y_hist = deque([np.zeros(cfg.p)] * cfg.order, maxlen=cfg.order)
        if self.u_hist is None:
            self.u_hist = deque([np.zeros(cfg.m)] * cfg.order, maxlen=cfg.order)
        if self._f_thresh is None:
            self._f_thresh = cfg.f_threshold()

    def push_io(self, y, u):
        """Record ``y_k``, ``u_k`` as the newest history entries."""
        self.y_hist.appendleft(np.asarray(y, dtype=float).reshape(-1).copy())
        self.u_hist.appendleft(np.asarray(u, dtype=float).reshape(-1).copy())


def regressor(y_hist, u_hist, order, p, m):
    """Regressor ``phi_k`` of shape ``(p, order*p*(m+p))``.

    ``y_hist[i]`` and ``u_hist[i]`` hold ``y_{k-1-i}`` and ``u_{k-1-i}``;
    missing (pre-initial) entries count as zero.
    """
    row = np.zeros(order * (p + m))
    for i in range(min(order, len(y_hist))):
        y = np.asarray(y_hist[i], dtype=float).reshape(-1)
        if y.size != p:
            raise ValueError(f"output history entry has length {y.size}, expected {p}")
        row[i * p:(i + 1) * p] = -y
    off = order * p
    for i in range(min(order, len(u_hist))):
        u = np.asarray(u_hist[i], dtype=float).reshape(-1)
        if u.size != m:
            raise ValueError(f"input history entry has length {u.size}, expected {m}")
        row[off + i * m:off + (i + 1) * m] = u
    if p == 1:
        return row[None, :]
    return np.kron(row[None, :], np.eye(p))


def _window_stats(w, length):
    w = w[-length:]
    d = w - w.mean(axis=0)
    if w.shape[1] == 1:
        return float(d[:, 0] @ d[:, 0]) / (length - 1)
    return d.T @ d / (length - 1)


def forgetting_factor(errors, k, config, threshold=None):
    """Return ``(beta_k, degenerate)`` from the windowed error statistics.

    ``errors`` holds the most recent identification errors with ``e_k`` last.
    ``degenerate`` is True when the denominator statistic was singular and
    forgetting was suppressed.
    """
    cfg = config
    if k < cfg.tau_d or cfg.eta == 0.0:
        return 1.0, False
    if len(errors) < cfg.tau_d + 1:
        raise ValueError(f"need {cfg.tau_d + 1} errors at k={k}, have {len(errors)}")
    if threshold is None:
        threshold = cfg.f_threshold()
    p = cfg.p
    w = np.asarray(errors, dtype=float).reshape(len(errors), p)
    num = _window_stats(w, cfg.tau_n + 1)
    den = _window_stats(w, cfg.tau_d + 1)
    if p == 1:
        if not den > 0.0:
            return 1.0, True
        g = np.sqrt(num / den) - threshold
    else:
        try:
            ratio = np.trace(np.linalg.solve(den.T, num.T).T)
        except np.linalg.LinAlgError:
            return 1.0, True
        if not np.isfinite(ratio) or np.linalg.cond(den) > 1e14:
            return 1.0, True
        _, _, c = _mv_constants(p, cfg.tau_n, cfg.tau_d)
        g = np.sqrt(max(cfg.tau_n / (c * cfg.tau_d) * ratio, 0.0)) - threshold
    return 1.0 + cfg.eta * max(float(g), 0.0), False


def rls_update(state, y, phi=None):
    """Advance ``state`` with the measurement ``y_k``.

    ``phi`` defaults to the regressor built from the stored history. Returns
    the identification error ``e_k(theta_k)``.
    """
    cfg = state.config
    y = np.asarray(y, dtype=float).reshape(-1)
    if phi is None:
        phi = regressor(state.y_hist, state.u_hist, cfg.order, cfg.p, cfg.m)
    err = y - phi @ state.theta
    state.errors.append(err)
    beta, degenerate = forgetting_factor(state.errors, state.k, cfg, state._f_thresh)
    if degenerate and not state.degenerate:
        log.debug("forgetting suppressed at k=%d: singular error statistics", state.k)
    state.beta, state.degenerate = beta, degenerate
    psi = state.psi
    psi_phiT = psi @ phi.T
    inner = np.eye(cfg.p) / beta + phi @ psi_phiT
    try:
        chol = np.linalg.cholesky(inner)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"RLS inner matrix not positive definite at k={state.k}") from exc
    W = np.linalg.solve(chol, psi_phiT.T)
    psi_new = beta * (psi - W.T @ W)
    psi_new = 0.5 * (psi_new + psi_new.T)
    state.theta = state.theta + psi_new @ (phi.T @ err)
    state.psi = psi_new
    state.k += 1
    return err


def extract_model(theta, order, p, m, step_tag=0):
    """Unstack ``theta`` into ARX coefficient blocks."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    nF = order * p * p
    if theta.size != order * p * (m + p):
        raise ValueError(f"theta has length {theta.size}, expected {order * p * (m + p)}")
    Fcat = theta[:nF].reshape(order * p, p).T
    Gcat = theta[nF:].reshape(order * m, p).T
    F = tuple(Fcat[:, i * p:(i + 1) * p].copy() for i in range(order))
    G = tuple(Gcat[:, i * m:(i + 1) * m].copy() for i in range(order))
    return IdentifiedModel(F, G, step_tag)


def vectorize_model(model):
    """Inverse of :func:`extract_model`."""
    Fcat = np.hstack(model.F)
    Gcat = np.hstack(model.G)
    return np.concatenate([Fcat.T.reshape(-1), Gcat.T.reshape(-1)])
