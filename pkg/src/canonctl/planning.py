"""Trajectory planning in Brunovsky coordinates.

The first canonical coordinate is parameterized as a polynomial in the step
index, y(k) = [1, k, ..., k^(2n-1)] . alpha; the remaining coordinates are
its forward shifts y(k+1), ..., y(k+n-1) and the reference input is
y(k+n).  The 2n coefficients solve the stacked boundary system for the
requested start and end states.

The boundary matrix is a Vandermonde block at integer nodes {0..n-1,
N..N+n-1}; in raw monomial form its conditioning is hopeless for large N
(entries up to N^(2n-1)), so the solve and the sampling of the reference
tables run in exact rational arithmetic and are rounded to float64 once.
That makes the stored tables correct to one ulp and the shift-consistency
identity bit-exact regardless of N.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm

import numpy as np

from .csvio import write_csv


class PlanError(ValueError):
    """Unsolvable boundary system (overlapping node clusters or bad dims)."""


@dataclass(frozen=True)
class TrajectoryPlan:
    """Sampled canonical reference for one operating-point change.

    z_d has shape (N+1, n) with z_d[k, i] = y(k+i); v_d has shape (N+1,)
    with v_d[k] = y(k+n).  alpha holds the 2n monomial coefficients of y,
    rounded to float64 (the tables themselves come from the exact solve).
    """

    n: int
    horizon: int
    alpha: np.ndarray
    z_d: np.ndarray
    v_d: np.ndarray

    def reference(self, k: int):
        """(z_d, v_d) at step k, holding the terminal values beyond N."""
        kk = min(int(k), self.horizon)
        return self.z_d[kk], float(self.v_d[kk])


def _solve_exact(rows: list[list[int]], rhs: list[Fraction]) -> list[Fraction]:
    """Gaussian elimination over the rationals; raises on a singular system."""
    size = len(rhs)
    m = [[Fraction(v) for v in row] for row in rows]
    b = list(rhs)
    for col in range(size):
        piv = max(range(col, size), key=lambda r: abs(m[r][col]))
        if m[piv][col] == 0:
            raise ZeroDivisionError(f"zero pivot in column {col}")
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            b[col], b[piv] = b[piv], b[col]
        for r in range(col + 1, size):
            f = m[r][col] / m[col][col]
            if f:
                for c in range(col, size):
                    m[r][c] -= f * m[col][c]
                b[r] -= f * b[col]
    x = [Fraction(0)] * size
    for r in range(size - 1, -1, -1):
        acc = b[r]
        for c in range(r + 1, size):
            acc -= m[r][c] * x[c]
        x[r] = acc / m[r][r]
    return x


def plan_trajectory(z0, zN, N: int) -> TrajectoryPlan:
    """Plan a canonical reference from z0 to zN over N steps.

    Boundary conditions hold to rounding and the sampled tables satisfy
    z_d(k+1) = shift(z_d(k), v_d(k)) bit-exactly by construction.  Requires
    N >= n so the two boundary node clusters are disjoint.
    """
    z0 = np.asarray(z0, dtype=float).reshape(-1)
    zN = np.asarray(zN, dtype=float).reshape(-1)
    n = z0.size
    if zN.size != n:
        raise PlanError(f"boundary dimensions differ: {z0.size} vs {zN.size}")
    if N < 1:
        raise PlanError(f"horizon must be >= 1, got {N}")
    nodes = list(range(n)) + list(range(N, N + n))
    degree = 2 * n
    rows = [[k ** j for j in range(degree)] for k in nodes]
    rhs = [Fraction(float(v)) for v in np.concatenate([z0, zN])]
    try:
        alpha = _solve_exact(rows, rhs)
    except ZeroDivisionError as exc:
        cond = np.linalg.cond(np.array(rows, dtype=float))
        raise PlanError(
            f"singular boundary system for n={n}, N={N} (node clusters "
            f"{nodes[:n]} and {nodes[n:]} overlap); cond~{cond:.2e}") from exc

    # evaluate y(k) exactly over a common denominator, round once per sample
    # (CPython's big-int true division is correctly rounded)
    denom = lcm(*[a.denominator for a in alpha])
    numers = [int(a * denom) for a in alpha]
    y = np.empty(N + n + 1)
    for k in range(N + n + 1):
        acc, kp = 0, 1
        for p in numers:
            acc += p * kp
            kp *= k
        y[k] = acc / denom

    z_d = np.empty((N + 1, n))
    for i in range(n):
        z_d[:, i] = y[i:N + 1 + i]
    v_d = y[n:N + n + 1].copy()
    return TrajectoryPlan(n=n, horizon=N,
                          alpha=np.array([float(a) for a in alpha]),
                          z_d=z_d, v_d=v_d)


PLAN_HEADER_PREFIX = ["k"]


def export_plan_csv(plan: TrajectoryPlan, path) -> None:
    header = ["k"] + [f"zd{i+1}" for i in range(plan.n)] + ["vd"]
    rows = ([k] + [float(v) for v in plan.z_d[k]] + [float(plan.v_d[k])]
            for k in range(plan.horizon + 1))
    write_csv(path, header, rows)
