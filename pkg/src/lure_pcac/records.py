"""CSV and metadata files written by the command-line tool."""
from __future__ import annotations

import csv

import numpy as np

from .lure import Trajectory

__all__ = [
    "trajectory_columns",
    "write_trajectory",
    "read_trajectory",
    "STABILITY_COLUMNS",
    "write_stability",
    "read_stability",
    "write_meta",
]

STABILITY_COLUMNS = ("k", "alpha_cc", "beta_cc", "cc_pass", "zeta1", "zeta2",
                     "zeta3_min_eig", "alpha_tc", "beta_tc", "tc_pass")


def _num(x):
    # 17 significant digits round-trip every double exactly
    return format(float(x), ".17g")


def _flag(b):
    return "true" if b else "false"


def trajectory_columns(p, m):
    cols = ["k"] + [f"y_{i}" for i in range(1, p + 1)]
    for name in ("u_req", "u", "v"):
        cols += [f"{name}_{i}" for i in range(1, m + 1)]
    return cols + ["theta_norm", "beta"]


def write_trajectory(path, traj):
    p, m = traj.y.shape[1], traj.u.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(trajectory_columns(p, m))
        for i in range(len(traj)):
            w.writerow([str(int(traj.k[i]))]
                       + [_num(x) for x in traj.y[i]]
                       + [_num(x) for x in traj.u_req[i]]
                       + [_num(x) for x in traj.u[i]]
                       + [_num(x) for x in traj.v[i]]
                       + [_num(traj.theta_norm[i]), _num(traj.beta[i])])


def read_trajectory(path):
    """Load a trajectory CSV back into a :class:`Trajectory` (no snapshots)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    p = sum(c.startswith("y_") for c in header)
    m = sum(c.startswith("u_req_") for c in header)
    if header != trajectory_columns(p, m):
        raise ValueError(f"{path}: unexpected columns {header}")
    data = np.array([[float(x) for x in r] for r in body]).reshape(len(body), len(header))
    o = 1
    y = data[:, o:o + p]
    o += p
    u_req = data[:, o:o + m]
    u = data[:, o + m:o + 2 * m]
    v = data[:, o + 2 * m:o + 3 * m]
    return Trajectory(data[:, 0].astype(int), y, u_req, u, v, data[:, -2], data[:, -1])


def write_stability(path, reports):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(STABILITY_COLUMNS)
        for r in reports:
            w.writerow([str(r.k), _num(r.alpha_cc), _num(r.beta_cc), _flag(r.cc_pass),
                        _num(r.zeta1), str(int(r.zeta2)), _num(r.zeta3_min_eig),
                        _num(r.alpha_tc), _num(r.beta_tc), _flag(r.tc_pass)])


def read_stability(path):
    """Rows of a stability CSV as dicts with typed values."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for key, val in row.items():
                if key in ("k", "zeta2"):
                    rec[key] = int(val)
                elif key in ("cc_pass", "tc_pass"):
                    rec[key] = val == "true"
                else:
                    rec[key] = float(val)
            out.append(rec)
    return out


def write_meta(path, sections):
    """Write ``{section: {key: value}}`` as dotted ``section.key = value`` lines."""
    from .config import format_params

    flat = {}
    for section, items in sections.items():
        for key, val in items.items():
            flat[f"{section}.{key}" if section else key] = val
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_params(flat))
