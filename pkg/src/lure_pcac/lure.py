"""Discrete-time Lur'e plants, nonlinearities and the adaptive closed loop."""
from __future__ import annotations

import ast
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import bocf, bpre, rls
from .numerics import StateSpace

__all__ = [
    "DIVERGENCE_BOUND",
    "LurePlant",
    "Nonlinearity",
    "parse_nonlinearity",
    "PerturbationSchedule",
    "SimulationConfig",
    "Trajectory",
    "Snapshot",
    "plant_step",
    "eval_nonlinearity",
    "perturbation",
    "simulate",
]

log = logging.getLogger(__name__)

DIVERGENCE_BOUND = 1e12


class LurePlant:
    """Strictly proper LTI block ``G`` of a Lur'e system with its state."""

    def __init__(self, A, B, C, x0=None):
        self.ss = StateSpace(A, B, C)
        n = self.ss.nstates
        self.x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(-1).copy()
        if self.x.size != n:
            raise ValueError(f"x0 has length {self.x.size}, plant order is {n}")

    @property
    def n(self):
        return self.ss.nstates

    @property
    def m(self):
        return self.ss.ninputs

    @property
    def p(self):
        return self.ss.noutputs

    def output(self):
        return self.ss.C @ self.x

    def copy(self):
        return LurePlant(self.ss.A, self.ss.B, self.ss.C, self.x)


def plant_step(plant, u_k, v_k, gamma):
    """Read ``y_k = C x_k``, then advance ``x`` with ``gamma(y_k) + u_k + v_k``.

    Returns ``y_k``. The plant state is left non-finite or very large on
    divergence; callers check :attr:`LurePlant.x`.
    """
    y = plant.output()
    w = eval_nonlinearity(gamma, y) + np.asarray(u_k, dtype=float).reshape(-1) \
        + np.asarray(v_k, dtype=float).reshape(-1)
    plant.x = plant.ss.A @ plant.x + plant.ss.B @ w
    return y


# --------------------------------------------------------------------------
# nonlinearities
# --------------------------------------------------------------------------

def _gauss_bump(y):
    return y / (0.422 * math.sqrt(2.0 * math.pi)) * np.exp(-y * y / 1.125)


def _piecewise_square(y, s_l, s_h):
    return np.where(y <= -0.4, 0.16 + s_l * (y + 0.4),
                    np.where(y >= 0.8, 0.64 + s_h * (y - 0.8), y * y))


@dataclass(frozen=True)
class Nonlinearity:
    """Memoryless map ``gamma: R^p -> R^m``.

    ``kind`` is one of ``zero``, ``linear``, ``tanh``, ``affine_sine``,
    ``gaussian_plus_piecewise``, ``table`` or ``diagonal``. Scalar kinds act
    elementwise; ``diagonal`` applies one scalar kind per channel.
    """

    kind: str
    params: tuple = ()
    parts: tuple = ()

    _SCALAR = ("zero", "linear", "tanh", "affine_sine", "gaussian_plus_piecewise", "table")

    def __post_init__(self):
        if self.kind not in self._SCALAR + ("diagonal",):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "diagonal" and not self.parts:
            raise ValueError("diagonal nonlinearity needs at least one part")
        if self.kind == "table":
            xs = np.asarray(self.params[0], dtype=float)
            if xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0):
                raise ValueError("table breakpoints must be strictly increasing")

    @classmethod
    def tanh(cls):
        return cls("tanh")

    @classmethod
    def affine_sine(cls, c1, c2):
        return cls("affine_sine", (float(c1), float(c2)))

    @classmethod
    def gaussian_plus_piecewise(cls, s_l=1.0, s_h=1.0):
        return cls("gaussian_plus_piecewise", (float(s_l), float(s_h)))

    @classmethod
    def diagonal(cls, *parts):
        return cls("diagonal", parts=tuple(parts))

    def _scalar(self, y):
        kind, prm = self.kind, self.params
        if kind == "zero":
            return np.zeros_like(y)
        if kind == "linear":
            return prm[0] * y
        if kind == "tanh":
            return np.tanh(y)
        if kind == "affine_sine":
            return prm[0] * y + prm[1] * np.sin(y)
        if kind == "gaussian_plus_piecewise":
            return _gauss_bump(y) + _piecewise_square(y, prm[0], prm[1])
        # table: piecewise linear, linear extrapolation beyond the ends
        xs = np.asarray(prm[0], dtype=float)
        vs = np.asarray(prm[1], dtype=float)
        out = np.interp(y, xs, vs)
        lo_slope = (vs[1] - vs[0]) / (xs[1] - xs[0])
        hi_slope = (vs[-1] - vs[-2]) / (xs[-1] - xs[-2])
        out = np.where(y < xs[0], vs[0] + lo_slope * (y - xs[0]), out)
        return np.where(y > xs[-1], vs[-1] + hi_slope * (y - xs[-1]), out)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind != "diagonal":
            return self._scalar(y)
        y = y.reshape(-1)
        if y.size != len(self.parts):
            raise ValueError(f"diagonal nonlinearity has {len(self.parts)} channels, got {y.size}")
        return np.array([part._scalar(yi) for part, yi in zip(self.parts, y)], dtype=float)

    def shifted(self, K_L):
        """``gamma(y) + K_L y`` as a new callable."""
        return lambda y: self(y) + K_L * np.asarray(y, dtype=float)

    def __str__(self):
        if self.kind == "diagonal":
            return "diagonal(" + ", ".join(str(p) for p in self.parts) + ")"
        if not self.params:
            return self.kind
        if self.kind == "table":
            return f"table({list(map(float, self.params[0]))}, {list(map(float, self.params[1]))})"
        return f"{self.kind}(" + ", ".join(repr(float(v)) for v in self.params) + ")"


def parse_nonlinearity(text):
    """Build a :class:`Nonlinearity` from text such as ``affine_sine(0.25, 0.6)``."""
    try:
        node = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ValueError(f"cannot parse nonlinearity {text!r}") from exc
    return _from_ast(node)


def _from_ast(node):
    if isinstance(node, ast.Name):
        return Nonlinearity(node.id)
    if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)):
        raise ValueError(f"bad nonlinearity expression: {ast.unparse(node)}")
    name = node.func.id
    kwargs = {kw.arg: ast.literal_eval(kw.value) for kw in node.keywords}
    if name == "diagonal":
        return Nonlinearity.diagonal(*(_from_ast(a) for a in node.args))
    args = [ast.literal_eval(a) for a in node.args]
    if name == "table":
        return Nonlinearity("table", (tuple(args[0]), tuple(args[1])))
    if name == "gaussian_plus_piecewise":
        return Nonlinearity.gaussian_plus_piecewise(*args, **kwargs)
    return Nonlinearity(name, tuple(float(a) for a in args))


def eval_nonlinearity(gamma, y):
    """Evaluate ``gamma`` at ``y``, returning a 1-D array."""
    return np.atleast_1d(np.asarray(gamma(np.asarray(y, dtype=float)), dtype=float)).reshape(-1)


# --------------------------------------------------------------------------
# perturbations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationSchedule:
    """Impulsive perturbations ``v_k``, zero at unlisted steps."""

    impulses: dict = field(default_factory=dict)
    m: int = 1

    def __post_init__(self):
        clean = {}
        for k, v in self.impulses.items():
            if int(k) < 0:
                raise ValueError("perturbation steps must be nonnegative")
            vec = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
            if vec.size == 1 and self.m > 1:
                vec = np.full(self.m, vec[0])
            if vec.size != self.m:
                raise ValueError(f"perturbation at k={k} has length {vec.size}, expected {self.m}")
            clean[int(k)] = vec
        object.__setattr__(self, "impulses", clean)

    def __call__(self, k):
        return perturbation(self, k)


def perturbation(schedule, k):
    v = schedule.impulses.get(int(k))
    return np.zeros(schedule.m) if v is None else v.copy()


# --------------------------------------------------------------------------
# closed loop
# --------------------------------------------------------------------------

@dataclass
class SimulationConfig:
    """Everything needed to run the adaptive closed loop."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    x0: np.ndarray
    nonlinearity: Nonlinearity
    rls: rls.RlsConfig
    bpre: bpre.BpreConfig
    schedule: PerturbationSchedule = None
    limits: bpre.SaturationLimits = field(default_factory=bpre.SaturationLimits)
    k_engage: int = 100
    k_final: int = 1000

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        ss = StateSpace(self.A, self.B, self.C)
        if self.x0.size != ss.nstates:
            raise ValueError(f"plant.x0 must have length {ss.nstates}")
        if (self.rls.p, self.rls.m) != (ss.noutputs, ss.ninputs):
            raise ValueError(
                f"rls dimensions (p={self.rls.p}, m={self.rls.m}) do not match the plant "
                f"(p={ss.noutputs}, m={ss.ninputs})")
        nx = self.rls.order * self.rls.p
        if self.bpre.R1.shape != (nx, nx):
            raise ValueError(f"bpre.R1 must be {nx}x{nx}")
        if self.bpre.R2.shape != (ss.ninputs, ss.ninputs):
            raise ValueError(f"bpre.R2 must be {ss.ninputs}x{ss.ninputs}")
        if self.schedule is None:
            self.schedule = PerturbationSchedule({}, ss.ninputs)
        if not (0 <= self.k_engage <= self.k_final):
            raise ValueError("sim.k_engage must lie in [0, sim.k_final]")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def plant(self):
        return LurePlant(self.A, self.B, self.C, self.x0)


@dataclass(frozen=True)
class Snapshot:
    """Frozen controller data at step ``k``.

    ``model`` is the estimate available after measuring ``y_k`` and ``K`` is
    the gain that produced ``u_k`` (zero while the loop is open).
    """

    k: int
    model: rls.IdentifiedModel
    K: np.ndarray


@dataclass
class Trajectory:
    """Per-step signals of one closed-loop run."""

    k: np.ndarray
    y: np.ndarray
    u_req: np.ndarray
    u: np.ndarray
    v: np.ndarray
    theta_norm: np.ndarray
    beta: np.ndarray
    diverged: bool = False
    divergence_step: int = None
    snapshots: dict = field(default_factory=dict)
    psi_min_eig: np.ndarray = None

    def __len__(self):
        return self.k.size

    def truncate(self, n):
        return Trajectory(self.k[:n], self.y[:n], self.u_req[:n], self.u[:n], self.v[:n],
                          self.theta_norm[:n], self.beta[:n], self.diverged,
                          self.divergence_step,
                          {k: s for k, s in self.snapshots.items() if k < n},
                          None if self.psi_min_eig is None else self.psi_min_eig[:n])


def simulate(config, checkpoints=(), track_psi=False):
    """Run the adaptive closed loop for steps ``0..k_final``.

    At step ``k`` the loop measures ``y_k``, updates the RLS estimate, builds
    the model state ``x_{m,k}``, predicts ``x_{m,k+1}`` and, once
    ``k + 1 >= k_engage``, computes ``u_{k+1}`` from the receding-horizon gain.
    ``u_0 = 0``. ``checkpoints`` lists steps at which a :class:`Snapshot` is
    kept; ``track_psi`` records the smallest eigenvalue of the RLS
    information matrix at every step.
    """
    cfg = config
    p, m = cfg.p, cfg.m
    N = cfg.k_final + 1
    plant = cfg.plant()
    state = rls.RlsState(cfg.rls)
    order = cfg.rls.order
    checkpoints = set(int(k) for k in checkpoints)

    ys = np.zeros((N, p))
    u_reqs = np.zeros((N, m))
    us = np.zeros((N, m))
    vs = np.zeros((N, m))
    th = np.zeros(N)
    betas = np.ones(N)
    psi_eig = np.zeros(N) if track_psi else None
    snaps = {}

    u_k = np.zeros(m)
    K_k = np.zeros((m, order * p))
    diverged, div_step, last = False, None, N
    for k in range(N):
        v_k = cfg.schedule(k)
        try:
            y_k = plant.output()
            if not np.all(np.isfinite(y_k)):
                raise FloatingPointError
            if cfg.rls.identify_during_open_loop or k + 1 >= cfg.k_engage:
                rls.rls_update(state, y_k)
            model = rls.extract_model(state.theta, order, p, m, step_tag=k + 1)
            A_m, B_m, _ = bocf.build_realization(model)
            x_m = bocf.build_state(model, y_k, state.y_hist, state.u_hist)
            if k in checkpoints:
                snaps[k] = Snapshot(k, model, K_k.copy())
            if k + 1 >= cfg.k_engage:
                x_next = bocf.predict_state(A_m, B_m, x_m, u_k)
                K_next = bpre.riccati_gain(A_m, B_m, cfg.bpre)
                u_req_next = bpre.control(K_next, x_next)
            else:
                K_next = np.zeros((m, order * p))
                u_req_next = np.zeros(m)
            u_next = bpre.saturate(u_req_next, cfg.limits)
            state.push_io(y_k, u_k)
            plant_step(plant, u_k, v_k, cfg.nonlinearity)
        except (FloatingPointError, np.linalg.LinAlgError, OverflowError) as exc:
            log.warning("simulation diverged at k=%d: %s", k, exc)
            diverged, div_step, last = True, k, k
            break
        ys[k], us[k], vs[k] = y_k, u_k, v_k
        th[k] = np.linalg.norm(state.theta)
        betas[k] = state.beta
        if track_psi:
            psi_eig[k] = np.linalg.eigvalsh(state.psi)[0]
        if k + 1 < N:
            u_reqs[k + 1] = u_req_next
        if not np.all(np.isfinite(plant.x)) or np.max(np.abs(plant.x)) > DIVERGENCE_BOUND:
            log.warning("plant state exceeded %g at k=%d", DIVERGENCE_BOUND, k)
            diverged, div_step, last = True, k, k + 1
            break
        u_k, K_k = u_next, K_next

    traj = Trajectory(np.arange(N), ys, u_reqs, us, vs, th, betas, diverged, div_step,
                      snaps, psi_eig)
    return traj.truncate(last) if diverged else traj
