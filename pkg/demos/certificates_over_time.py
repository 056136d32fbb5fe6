"""Track the frozen-time circle and Tsypkin certificates through a run.

At each checkpoint the identified model and gain define a linear
compensator; closing it around the plant gives the loop whose absolute
stability the two criteria test. Impulses hit the plant at k = 1000, 1200,
..., 2000, so the certificates can be watched before, during and after.
"""
from lure_pcac import analyze_trajectory, load_experiment, simulate

exp = load_experiment("ex1p")
checkpoints = [150, 500, 999, 1100, 1500, 2100, 2500, 3000]
traj = simulate(exp.sim, checkpoints=checkpoints)
reports = analyze_trajectory(exp.sim, traj, exp.sector, grid_size=1024)

print(f"{'k':>5} {'alpha_cc':>9} {'beta_cc':>9} {'cc':>5} {'alpha_tc':>9} {'beta_tc':>9} {'tc':>5}")
for r in reports:
    print(f"{r.k:5d} {r.alpha_cc:9.4f} {r.beta_cc:9.4f} {str(r.cc_pass):>5}"
          f" {r.alpha_tc:9.4f} {r.beta_tc:9.4f} {str(r.tc_pass):>5}")

# the Tsypkin margin depends on the multiplier N; it approaches the circle
# margin as N shrinks
from lure_pcac.stability import SectorSpec, analyze_snapshot  # noqa: E402
from lure_pcac.numerics import StateSpace  # noqa: E402

plant = StateSpace(exp.sim.A, exp.sim.B, exp.sim.C)
snap = traj.snapshots[3000]
for N in (0.1, 0.01, 0.001):
    sec = SectorSpec(exp.sector.K1, exp.sector.K2, K_L=exp.sector.K_L, N=N)
    r = analyze_snapshot(plant, snap, sec, grid_size=1024)
    print(f"k=3000, N={N:g}: beta_tc = {r.beta_tc:.4f} (beta_cc = {r.beta_cc:.4f})")
