"""Frozen-time absolute-stability certificates for the adaptive loop.

At a given step the adaptive controller is a linear output-feedback
compensator. Closing it around the plant gives a modified Lur'e system
``G_tilde`` in positive feedback with the original nonlinearity, which is
then tested with the discrete-time circle and Tsypkin criteria.

The spectral radii are taken over the eigenvalues of the assembled
realizations without minimal-realization reduction, so a hidden unstable
mode can only make a certificate fail, never pass spuriously.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import bocf, bpre
from .numerics import (
    NumericsError,
    StateSpace,
    freq_response,
    hermitian_min_eig,
    observability_rank,
    spectral_radius,
)

__all__ = [
    "DEFAULT_GRID",
    "ZETA1_TOL",
    "ControllerRealization",
    "SectorSpec",
    "StabilityReport",
    "controller_realization",
    "modified_lure",
    "loop_transform",
    "circle_realization",
    "tsypkin_realization",
    "circle_criterion",
    "tsypkin_criterion",
    "sector_check",
    "dmisb_check",
    "analyze_snapshot",
    "analyze_trajectory",
]

log = logging.getLogger(__name__)

DEFAULT_GRID = 2048
ZETA1_TOL = 1e-10
SECTOR_TOL = 1e-9


@dataclass(frozen=True)
class ControllerRealization:
    """``x_m+ = A_c x_m + B_c y``, ``u = C_c x_m``."""

    A_c: np.ndarray
    B_c: np.ndarray
    C_c: np.ndarray
    F: np.ndarray
    K: np.ndarray

    @property
    def ss(self):
        return StateSpace(self.A_c, self.B_c, self.C_c)


@dataclass
class SectorSpec:
    """Sector data for both criteria.

    ``K1``/``K2`` bound the original nonlinearity. The Tsypkin path uses the
    shifted nonlinearity ``gamma(y) + K_L y`` in the sector ``[0, kappa]``
    with multiplier ``N``.
    """

    K1: np.ndarray
    K2: np.ndarray
    kappa: np.ndarray = None
    K_L: float = 0.0
    N: np.ndarray = 0.1

    def __post_init__(self):
        self.K1 = np.atleast_2d(np.asarray(self.K1, dtype=float))
        self.K2 = np.atleast_2d(np.asarray(self.K2, dtype=float))
        if self.K1.shape != self.K2.shape:
            raise ValueError("sector.K1 and sector.K2 must have the same shape")
        D = self.K2 - self.K1
        if D.shape[0] != D.shape[1] or not np.allclose(D, D.T, atol=1e-12) \
                or np.linalg.eigvalsh(0.5 * (D + D.T))[0] <= 0:
            raise ValueError("sector.K2 - sector.K1 must be symmetric positive definite")
        m = self.K1.shape[0]
        self.K_L = float(self.K_L)
        if self.kappa is None:
            self.kappa = self.K2 + self.K_L * np.eye(m)
        self.kappa = np.atleast_2d(np.asarray(self.kappa, dtype=float))
        if self.kappa.shape != (m, m):
            raise ValueError(f"sector.kappa must be {m}x{m}")
        N = np.asarray(self.N, dtype=float)
        if N.ndim == 0:
            N = N * np.eye(m)
        elif N.ndim == 1:
            N = np.diag(N)
        if N.shape != (m, m) or np.any(N != np.diag(np.diag(N))) or np.any(np.diag(N) <= 0):
            raise ValueError("sector.N must be diagonal with positive entries")
        self.N = N


@dataclass
class StabilityReport:
    """Certificate values at one step.

    Pass flags are recomputed from the stored scalars; ``approximate`` marks
    a frequency sweep that skipped grid points.
    """

    k: int
    alpha_cc: float
    beta_cc: float
    zeta1: float
    zeta2: int
    zeta3_min_eig: float
    alpha_tc: float
    beta_tc: float
    full_order: int
    grid_size: int = DEFAULT_GRID
    approximate: bool = False
    notes: list = field(default_factory=list)

    @property
    def cc_pass(self):
        return bool(self.alpha_cc < 1.0 and self.beta_cc > 0.0)

    @property
    def tc_pass(self):
        return bool(np.isfinite(self.zeta1) and abs(self.zeta1) > ZETA1_TOL
                    and self.zeta2 == self.full_order and self.zeta3_min_eig > 0.0
                    and self.alpha_tc < 1.0 and self.beta_tc > 0.0)


# --------------------------------------------------------------------------
# realizations
# --------------------------------------------------------------------------

def controller_realization(A_m, B_m, C_m, model, K):
    """Closed-loop compensator built from the identified model and gain ``K``."""
    F = -np.vstack(model.F)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    nx = A_m.shape[0]
    if F.shape[0] != nx or K.shape != (B_m.shape[1], nx) or C_m.shape[1] != nx:
        raise ValueError("controller_realization: inconsistent shapes")
    A_c = A_m - F @ C_m + B_m @ K
    return ControllerRealization(A_c, F, K, F, K)


def modified_lure(plant_ss, ctrl):
    """Positive feedback of the plant with the compensator, as a StateSpace."""
    A, B, C = plant_ss.A, plant_ss.B, plant_ss.C
    n, m = B.shape
    p = C.shape[0]
    nc = ctrl.A_c.shape[0]
    if ctrl.B_c.shape != (nc, p) or ctrl.C_c.shape != (m, nc):
        raise ValueError("modified_lure: plant and controller dimensions disagree")
    At = np.block([[A, B @ ctrl.C_c], [ctrl.B_c @ C, ctrl.A_c]])
    Bt = np.vstack([B, np.zeros((nc, m))])
    Ct = np.hstack([C, np.zeros((p, nc))])
    return StateSpace(At, Bt, Ct)


def loop_transform(tilde, K_L):
    """Realization of ``G (I + K_L G)^{-1}``: ``A - B K_L C`` with the same B, C."""
    if tilde.ninputs != tilde.noutputs:
        raise ValueError("loop transformation needs a square loop (m = p)")
    if K_L == 0:
        return tilde
    return StateSpace(tilde.A - K_L * tilde.B @ tilde.C, tilde.B, tilde.C)


def circle_realization(tilde, K1, K2):
    """Realization of ``H = (I - K2 G)(I - K1 G)^{-1}``."""
    K1 = np.atleast_2d(K1)
    K2 = np.atleast_2d(K2)
    m = tilde.ninputs
    return StateSpace(tilde.A + tilde.B @ K1 @ tilde.C, tilde.B, (K1 - K2) @ tilde.C, np.eye(m))


def tsypkin_realization(tilde_KL, kappa, N):
    """Realization of ``L_N = kappa^{-1} - [I + (1 - q^{-1}) N] G``.

    The state is augmented with the one-step-delayed output of ``G``.
    """
    A, B, C = tilde_KL.A, tilde_KL.B, tilde_KL.C
    n, m = B.shape
    p = C.shape[0]
    kinv = np.linalg.inv(np.atleast_2d(kappa))
    Aa = np.block([[A, np.zeros((n, p))], [C, np.zeros((p, p))]])
    Ba = np.vstack([B, np.zeros((p, m))])
    Ca = np.hstack([-(np.eye(p) + N) @ C, N])
    return StateSpace(Aa, Ba, Ca, kinv)


def _min_hermitian_part(ss, grid_size):
    """Grid minimum of ``lambda_min(H + H^H)`` on ``[0, pi]``.

    Returns ``(value, skipped_points)``.
    """
    psi = np.linspace(0.0, np.pi, grid_size)
    try:
        Hs = freq_response(ss, psi)
        skipped = 0
    except NumericsError:
        vals = []
        for w in psi:
            try:
                vals.append(freq_response(ss, w))
            except NumericsError:
                continue
        skipped = grid_size - len(vals)
        if not vals:
            return np.nan, skipped
        Hs = np.array(vals)
    S = Hs + np.conj(np.swapaxes(Hs, 1, 2))
    return float(np.min(hermitian_min_eig(S))), skipped


def circle_criterion(tilde, K1, K2, grid_size=DEFAULT_GRID):
    """Return ``(alpha_cc, beta_cc, skipped)`` for the circle criterion."""
    D = np.atleast_2d(K2) - np.atleast_2d(K1)
    if np.linalg.eigvalsh(0.5 * (D + D.T))[0] <= 0:
        raise ValueError("K2 - K1 must be positive definite")
    H = circle_realization(tilde, K1, K2)
    alpha = spectral_radius(H.A)
    beta, skipped = _min_hermitian_part(H, grid_size)
    return alpha, beta, skipped


def tsypkin_criterion(tilde_KL, kappa, N, grid_size=DEFAULT_GRID):
    """Return ``(zeta1, zeta2, zeta3, alpha_tc, beta_tc, skipped)``.

    ``zeta1`` is NaN when ``A`` is singular.
    """
    A, B, C = tilde_KL.A, tilde_KL.B, tilde_KL.C
    N = np.atleast_2d(N)
    try:
        Ainv_B = np.linalg.solve(A, B)
        CAinv = np.linalg.solve(A.T, C.T).T
        zeta1 = float(np.linalg.det(C @ Ainv_B))
        if np.linalg.cond(A) > 1e14:
            raise np.linalg.LinAlgError
        zeta2 = observability_rank(A, C + N @ C - N @ CAinv)
    except np.linalg.LinAlgError:
        zeta1, zeta2 = np.nan, 0
    L = tsypkin_realization(tilde_KL, kappa, N)
    zeta3 = hermitian_min_eig(L.D + L.D.T)
    alpha = spectral_radius(L.A)
    beta, skipped = _min_hermitian_part(L, grid_size)
    return zeta1, zeta2, zeta3, alpha, beta, skipped


# --------------------------------------------------------------------------
# nonlinearity checks
# --------------------------------------------------------------------------

def sector_check(gamma, K1, K2, probes):
    """Check ``[gamma(y) - K1 y]^T [gamma(y) - K2 y] <= 0`` on ``probes``.

    ``probes`` has shape ``(N, p)`` (or ``(N,)`` for scalar outputs).
    Returns ``(passed, worst)`` where ``worst`` is the largest form value.
    """
    Y = np.asarray(probes, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    K1 = np.atleast_2d(K1)
    K2 = np.atleast_2d(K2)
    G = np.array([np.atleast_1d(gamma(y)) for y in Y]).reshape(Y.shape[0], -1)
    vals = np.einsum("ij,ij->i", G - Y @ K1.T, G - Y @ K2.T)
    worst = float(np.max(vals))
    return worst <= SECTOR_TOL, worst


def dmisb_check(gamma_KL, kappa, probes):
    """Diagonal-monotone-sector check of ``gamma_KL`` on a probe grid.

    ``probes`` is a 1-D grid of scalar values applied to every channel, or an
    ``(N, m)`` array whose columns are each sorted increasingly.
    """
    P = np.asarray(probes, dtype=float)
    kappa = np.atleast_2d(kappa)
    m = kappa.shape[0]
    if P.ndim == 1:
        P = np.repeat(P[:, None], m, axis=1)
    G = np.array([np.atleast_1d(gamma_KL(y)) for y in P]).reshape(P.shape[0], m)
    order = np.argsort(P, axis=0)
    Ps = np.take_along_axis(P, order, axis=0)
    Gs = np.take_along_axis(G, order, axis=0)
    dP = np.diff(Ps, axis=0)
    dG = np.diff(Gs, axis=0)
    # non-decreasing up to rounding: saturating maps go flat in floating point
    monotone = bool(np.all(dG[dP > 0] >= -SECTOR_TOL))
    form = np.einsum("ij,ij->i", G, G - P @ kappa.T)
    return monotone and float(np.max(form)) <= SECTOR_TOL


# --------------------------------------------------------------------------
# per-step evaluation
# --------------------------------------------------------------------------

def analyze_snapshot(plant_ss, snapshot, sector, grid_size=DEFAULT_GRID, tsypkin=True):
    """Evaluate both criteria for one frozen controller."""
    A_m, B_m, C_m = bocf.build_realization(snapshot.model)
    ctrl = controller_realization(A_m, B_m, C_m, snapshot.model, snapshot.K)
    tilde = modified_lure(plant_ss, ctrl)
    notes = []
    alpha_cc, beta_cc, skip_cc = circle_criterion(tilde, sector.K1, sector.K2, grid_size)
    z1 = z3 = alpha_tc = beta_tc = np.nan
    z2 = 0
    skip_tc = 0
    if tsypkin and tilde.ninputs == tilde.noutputs:
        tkl = loop_transform(tilde, sector.K_L)
        z1, z2, z3, alpha_tc, beta_tc, skip_tc = tsypkin_criterion(
            tkl, sector.kappa, sector.N, grid_size)
        if not np.isfinite(z1):
            notes.append("singular A_KL: zeta1 undefined")
    if skip_cc or skip_tc:
        notes.append(f"skipped {skip_cc + skip_tc} grid points with poles on the unit circle")
    return StabilityReport(snapshot.k, alpha_cc, beta_cc, z1, z2, z3, alpha_tc, beta_tc,
                           tilde.nstates, grid_size, bool(skip_cc or skip_tc), notes)


def analyze_trajectory(config, trajectory, sector, grid_size=DEFAULT_GRID, tsypkin=True):
    """Reports for every snapshot stored in ``trajectory``, ordered by step."""
    plant_ss = StateSpace(config.A, config.B, config.C)
    return [analyze_snapshot(plant_ss, trajectory.snapshots[k], sector, grid_size, tsypkin)
            for k in sorted(trajectory.snapshots)]
