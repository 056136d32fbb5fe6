"""Check each example nonlinearity against its sector, before and after
the loop shift used by the Tsypkin test.

Shifting by K_L adds K_L*y, which turns a non-monotone map such as
0.25 y + 0.6 sin y into a monotone one.
"""
import numpy as np

from lure_pcac.config import PRESETS, load_experiment
from lure_pcac.stability import dmisb_check, sector_check

axis = np.linspace(-20, 20, 10_001)
for name in PRESETS:
    exp = load_experiment(name)
    gamma, sec = exp.sim.nonlinearity, exp.sector
    if exp.sim.p == 1:
        ok, worst = sector_check(gamma, sec.K1, sec.K2, axis)
    else:
        grid = np.stack(np.meshgrid(axis[::100], axis[::100]), -1).reshape(-1, 2)
        ok, worst = sector_check(gamma, sec.K1, sec.K2, grid)
    plain = dmisb_check(gamma, sec.kappa, axis)
    shifted = dmisb_check(gamma.shifted(sec.K_L), sec.kappa, axis)
    print(f"{name:5s} {str(gamma):48s} sector {'ok' if ok else 'FAIL'} ({worst:+.2e})"
          f"  monotone-in-sector: K_L=0 {plain!s:5s} K_L={sec.K_L:g} {shifted}")
