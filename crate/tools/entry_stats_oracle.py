#!/usr/bin/env python3
"""Independent first-entry oracle for lambda = 2*pi*i.

Vectorised numpy re-implementation of the grid sampler: cell centres of a
grid x grid lattice over the bounding square of the disk, points outside the
disk dropped, orbit index 0 included, indices 0..=t_max scanned. Orbits stop
once Re z > 50, or once an iterate underflows to exactly 0 (its imaginary
part is lost); in both cases that last point is still checked against the
target.

Writes JSON to stdout; the recorded run lives in
crates/core/tests/data/entry_stats_oracle.json.
"""
import argparse
import json
import math

import numpy as np

ESCAPE_RE = 50.0


def grid_points(center, radius, grid):
    h = 2.0 * radius / grid
    idx = (np.arange(grid) + 0.5) * h
    re = center.real - radius + idx[None, :]
    im = center.imag - radius + idx[:, None]
    z = (re + 1j * im).ravel()
    return z[np.abs(z - center) <= radius]


def first_entry(lam, z0, inside, t_max):
    z = z0.copy()
    n = np.full(z.shape, -1, dtype=np.int64)
    landing = np.zeros(z.shape)
    active = np.ones(z.shape, dtype=bool)
    for k in range(t_max + 1):
        hit = active & inside(z)
        n[hit] = k
        landing[hit] = z.real[hit]
        active &= ~hit
        active &= ~(z.real > ESCAPE_RE)
        if k > 0:
            active &= z != 0
        if not active.any() or k == t_max:
            break
        idx = np.nonzero(active)[0]
        z[idx] = lam * np.exp(z[idx])
    return n, landing


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, default=100)
    ap.add_argument("--tmax", type=int, default=100_000)
    args = ap.parse_args()
    lam = complex(0.0, 2.0 * math.pi)

    out = {"lambda": [lam.real, lam.imag], "grid": args.grid, "t_max": args.tmax, "entry": [], "deep_left": None}
    pts = grid_points(0j, 1.0, args.grid)
    for x in (3.0, 5.0, 8.0):
        n, _ = first_entry(lam, pts, lambda z: z.real > x, args.tmax)
        entered = int((n >= 0).sum())
        out["entry"].append({"x": x, "total": int(pts.size), "entered": entered, "fraction": entered / pts.size})

    # Entry into Re <= -e^3 from B(2*pi*i, 0.9).
    l1 = -math.exp(3.0)
    pts = grid_points(complex(0.0, 2.0 * math.pi), 0.9, args.grid)
    n, landing = first_entry(lam, pts, lambda z: z.real <= l1, args.tmax)
    entered = int((n >= 0).sum())
    out["deep_left"] = {"x": 3.0, "L1": l1, "total": int(pts.size), "entered_left": entered}
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
