import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lure_pcac import bpre, rls
from lure_pcac.config import load_config
from lure_pcac.lure import (
    LurePlant,
    Nonlinearity,
    PerturbationSchedule,
    SimulationConfig,
    eval_nonlinearity,
    parse_nonlinearity,
    perturbation,
    plant_step,
    simulate,
)

EX1 = dict(A=[[1.0, -0.5], [1.0, 0.0]], B=[[1.0], [0.0]], C=[[1.0, -1.0]])


def _small_config(gamma=Nonlinearity("zero"), x0=(0.0, 0.0), k_final=60, k_engage=10,
                  schedule=None, **plant):
    plant = plant or EX1
    order = 2
    return SimulationConfig(
        **plant, x0=list(x0), nonlinearity=gamma,
        rls=rls.RlsConfig(order=order, theta0=1e-10, psi0=1e-2, tau_n=5, tau_d=25),
        bpre=bpre.BpreConfig(5, np.diag([1.0, 0.0]), [[1e-2]], np.diag([1.0, 0.0])),
        schedule=schedule, k_engage=k_engage, k_final=k_final)


# -- plant -----------------------------------------------------------------

def test_plant_equilibrium():
    plant = LurePlant(**EX1)
    y = plant_step(plant, [0.0], [0.0], np.tanh)
    assert y[0] == 0.0 and np.all(plant.x == 0.0)


def test_plant_reads_output_before_advancing():
    plant = LurePlant(np.zeros((2, 2)), np.eye(2), np.eye(2))
    y0 = plant_step(plant, [1.5, -2.0], [0.0, 0.0], Nonlinearity("zero"))
    y1 = plant_step(plant, [0.0, 0.0], [0.0, 0.0], Nonlinearity("zero"))
    np.testing.assert_array_equal(y0, [0.0, 0.0])
    np.testing.assert_array_equal(y1, [1.5, -2.0])


def test_plant_rejects_wrong_initial_state():
    with pytest.raises(ValueError):
        LurePlant(**EX1, x0=[1.0, 2.0, 3.0])


def test_example_plant_self_oscillates_open_loop():
    plant = LurePlant(**EX1, x0=1000 * np.array([1.0, 0.0]))
    ys = np.array([plant_step(plant, [0.0], [0.0], np.tanh)[0] for _ in range(1000)])
    tail = ys[-200:]
    assert np.all(np.isfinite(ys)) and np.max(np.abs(ys)) < 2000
    # no decay toward zero: the last stretch still swings with O(1) amplitude
    assert np.max(tail) - np.min(tail) > 0.5
    assert np.sqrt(np.mean(tail ** 2)) > 0.1


# -- nonlinearities --------------------------------------------------------

def test_nonlinearity_values():
    assert eval_nonlinearity(Nonlinearity.tanh(), 0.0)[0] == 0.0
    f = Nonlinearity.affine_sine(0.25, 0.6)
    assert f(math.pi) == pytest.approx(0.25 * math.pi, abs=1e-15)


def test_gaussian_plus_piecewise_branches():
    f = Nonlinearity.gaussian_plus_piecewise(s_l=-0.4, s_h=0.4)
    bump = lambda y: y / (0.422 * math.sqrt(2 * math.pi)) * math.exp(-y * y / 1.125)
    assert f(0.5) - bump(0.5) == pytest.approx(0.25, abs=1e-15)
    assert f(-1.4) - bump(-1.4) == pytest.approx(0.16 - 0.4 * (-1.0), abs=1e-15)
    assert f(1.8) - bump(1.8) == pytest.approx(0.64 + 0.4 * 1.0, abs=1e-15)
    # value continuity at the branch points for any slopes
    for y in (-0.4, 0.8):
        assert f(y + 1e-12) == pytest.approx(f(y - 1e-12), abs=1e-9)


def test_diagonal_nonlinearity_and_dimension_check():
    f = parse_nonlinearity("diagonal(tanh, affine_sine(0.25, 0.6))")
    y = np.array([0.3, math.pi])
    np.testing.assert_allclose(f(y), [math.tanh(0.3), 0.25 * math.pi], atol=1e-15)
    with pytest.raises(ValueError):
        f(np.zeros(3))


def test_table_nonlinearity_extrapolates_linearly():
    f = parse_nonlinearity("table([-1, 0, 1], [-2, 0, 1])")
    assert f(0.5) == pytest.approx(0.5)
    assert f(-3.0) == pytest.approx(-6.0)
    assert f(3.0) == pytest.approx(3.0)


def test_parse_round_trip_and_errors():
    for text in ("tanh", "affine_sine(0.25, 0.6)", "gaussian_plus_piecewise(-0.4, 0.4)",
                 "diagonal(tanh, affine_sine(0.25, 0.6))"):
        f = parse_nonlinearity(text)
        assert parse_nonlinearity(str(f)) == f
    with pytest.raises(ValueError):
        parse_nonlinearity("cubic")
    with pytest.raises(ValueError):
        parse_nonlinearity("tanh(")


@settings(max_examples=60, deadline=None)
@given(st.floats(-1e3, 1e3))
def test_nonlinearities_are_finite(y):
    for f in (Nonlinearity.tanh(), Nonlinearity.affine_sine(0.25, 0.6),
              Nonlinearity.gaussian_plus_piecewise(-0.4, 0.4)):
        assert np.isfinite(f(y))


# -- perturbations ---------------------------------------------------------

def test_example_schedule_lookups():
    sched = load_config("ex1p").schedule
    assert perturbation(sched, 1000)[0] == 1.0
    assert perturbation(sched, 1200)[0] == -1.0
    assert perturbation(sched, 1001)[0] == 0.0


def test_schedule_validation_and_broadcast():
    with pytest.raises(ValueError):
        PerturbationSchedule({-1: 1.0})
    with pytest.raises(ValueError):
        PerturbationSchedule({3: [1.0, 2.0, 3.0]}, m=2)
    np.testing.assert_array_equal(PerturbationSchedule({3: 5.0}, m=2)(3), [5.0, 5.0])


# -- closed loop -----------------------------------------------------------

def test_all_zero_run_stays_zero():
    traj = simulate(_small_config())
    assert len(traj) == 61
    for arr in (traj.y, traj.u_req, traj.u, traj.v):
        assert np.all(arr == 0.0)


def test_initial_control_is_zero_and_open_loop_is_unforced():
    traj = simulate(_small_config(Nonlinearity.tanh(), x0=(5.0, 0.0)))
    assert traj.u[0, 0] == 0.0
    assert np.all(traj.u[:10] == 0.0)
    assert np.any(traj.u[10:] != 0.0)


def test_runs_are_deterministic():
    cfg = load_config("ex1", {"sim.k_final": 300})
    a, b = simulate(cfg), simulate(cfg)
    for name in ("y", "u_req", "u", "v", "theta_norm", "beta"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_truncation_equivalence():
    short = simulate(load_config("ex1", {"sim.k_final": 250}))
    long = simulate(load_config("ex1", {"sim.k_final": 400}))
    for name in ("y", "u_req", "u", "v", "theta_norm", "beta"):
        np.testing.assert_array_equal(getattr(long, name)[:251], getattr(short, name))


def test_stable_plant_without_nonlinearity_decays():
    plant = dict(A=[[0.5, 0.2], [0.0, 0.3]], B=[[1.0], [0.0]], C=[[1.0, 1.0]])
    traj = simulate(_small_config(x0=(3.0, -1.0), k_engage=60, k_final=60, **plant))
    y = np.abs(traj.y[:, 0])
    assert y[-6:].max() < y[:6].max()


def test_divergence_is_flagged_with_partial_trajectory():
    gamma = Nonlinearity("linear", (3.0,))
    traj = simulate(_small_config(gamma, x0=(1.0, 0.0), k_engage=200, k_final=200))
    assert traj.diverged
    # the step that blew up is kept only if its own record was finite
    assert traj.divergence_step <= len(traj) <= traj.divergence_step + 1 < 201
    assert np.all(np.isfinite(traj.y))


def test_snapshots_hold_the_active_gain():
    cfg = load_config("ex1", {"sim.k_final": 150})
    traj = simulate(cfg, checkpoints=[50, 120])
    assert sorted(traj.snapshots) == [50, 120]
    assert np.all(traj.snapshots[50].K == 0.0)
    snap = traj.snapshots[120]
    assert snap.model.step_tag == 121
    assert np.any(snap.K != 0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        _small_config(k_engage=100, k_final=50)
