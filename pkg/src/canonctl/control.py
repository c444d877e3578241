"""Outer-loop tracking control in Brunovsky coordinates.

Pole placement yields the companion-form coefficients of the error
dynamics; the control law is

    v_k = -[a_0, ..., a_{n-1}] . (z_k - z_d(k)) + v_d(k)

with z_k produced by the state encoder and the plant input recovered
through the input decoder.  The controller only needs an object exposing
`encode_state(x)` and `decode_input(x, v)`; the trained auto-encoder and
the analytic transformation helpers below both qualify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .brunovsky import error_companion
from .csvio import write_csv
from .planning import TrajectoryPlan
from .systems import DiscreteSystem


class ControlError(RuntimeError):
    """Controller produced a non-finite command; message carries diagnostics."""


# ---------------------------------------------------------------------------
# Pole placement


@dataclass(frozen=True)
class ControllerGains:
    """Companion-form coefficients a_0..a_{n-1} and the poles they realize."""

    a: np.ndarray
    poles: tuple

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def error_matrix(self) -> np.ndarray:
        return error_companion(self.a)


def _check_conjugate_closed(poles, tol: float = 1e-9) -> None:
    remaining = [complex(p) for p in poles if abs(complex(p).imag) > tol]
    while remaining:
        p = remaining.pop()
        match = next((i for i, q in enumerate(remaining)
                      if abs(q - p.conjugate()) <= tol * max(1.0, abs(p))), None)
        if match is None:
            raise ValueError(f"pole set not closed under conjugation: {p} "
                             "has no conjugate partner")
        remaining.pop(match)


def pole_placement(poles) -> ControllerGains:
    """Coefficients of prod(z - p_i) = z^n + a_{n-1} z^{n-1} + ... + a_0.

    Poles must be closed under conjugation and strictly inside the unit
    circle.
    """
    poles = [complex(p) for p in np.atleast_1d(poles)]
    if not poles:
        raise ValueError("need at least one pole")
    for p in poles:
        if abs(p) >= 1.0:
            raise ValueError(f"pole {p} has magnitude {abs(p):.4f} >= 1; "
                             "error dynamics must be stable")
    _check_conjugate_closed(poles)
    coeffs = np.array([1.0 + 0.0j])
    for p in poles:
        coeffs = np.convolve(coeffs, np.array([1.0, -p]))
    if np.max(np.abs(coeffs.imag)) > 1e-9 * max(1.0, np.max(np.abs(coeffs))):
        raise ValueError("pole expansion left a significant imaginary residue; "
                         "input was not conjugate-closed")
    # coeffs is descending in powers of z: coeffs[i] multiplies z^(n-i)
    a = coeffs.real[1:][::-1].copy()
    return ControllerGains(a=a, poles=tuple(poles))


# ---------------------------------------------------------------------------
# Analytic transformation objects (exact baselines and test mocks)


class IdentityTransforms:
    """Trivial transformations: the plant already is the shift register."""

    def __init__(self, n: int):
        self.n = n

    def encode_state(self, x):
        return np.asarray(x, dtype=float).copy()

    def decode_state(self, z):
        return np.asarray(z, dtype=float).copy()

    def encode_input(self, x, u):
        return float(u)

    def decode_input(self, x, v):
        return float(v)


class LinearTransforms:
    """Exact Brunovsky transformations of a controllable LTI pair (A, b).

    Rows t_i = t_1 A^(i-1) with t_1 the last row of the inverse
    controllability matrix give z = T x, v = t_n A x + u (input scaled so
    t_n b = 1).
    """

    def __init__(self, A, b):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float).reshape(-1)
        n = A.shape[0]
        ctrb = np.column_stack([np.linalg.matrix_power(A, i) @ b for i in range(n)])
        if np.linalg.matrix_rank(ctrb) < n:
            raise ValueError("pair (A, b) is not controllable")
        t1 = np.linalg.solve(ctrb.T, np.eye(n)[:, -1])
        rows = [t1]
        for _ in range(n - 1):
            rows.append(rows[-1] @ A)
        self.T = np.vstack(rows)
        self.row_n_A = rows[-1] @ A
        self.n = n
        self.A, self.b = A, b

    def encode_state(self, x):
        return self.T @ np.asarray(x, dtype=float)

    def decode_state(self, z):
        return np.linalg.solve(self.T, np.asarray(z, dtype=float))

    def encode_input(self, x, u):
        return float(self.row_n_A @ np.asarray(x, dtype=float) + u)

    def decode_input(self, x, v):
        return float(v - self.row_n_A @ np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# Closed loop


@dataclass(frozen=True)
class ClosedLoopController:
    """Inner transformations + outer companion-form tracking law."""

    transforms: object
    gains: ControllerGains
    plan: TrajectoryPlan

    def __post_init__(self):
        if self.gains.n != self.plan.n:
            raise ValueError(f"gain dimension {self.gains.n} does not match "
                             f"plan dimension {self.plan.n}")


@dataclass(frozen=True)
class ControlDiagnostics:
    z: np.ndarray
    v: float
    e: np.ndarray
    z_d: np.ndarray
    v_d: float


def control_step(ctrl: ClosedLoopController, x, k: int):
    """One evaluation of the control law at state x and step k.

    Beyond the plan horizon the terminal references are held.  Returns
    (u, diagnostics).
    """
    if k < 0:
        raise ValueError("step index must be nonnegative")
    z = ctrl.transforms.encode_state(np.asarray(x, dtype=float))
    z_d, v_d = ctrl.plan.reference(k)
    e = z - z_d
    v = float(-(ctrl.gains.a @ e) + v_d)
    u = float(ctrl.transforms.decode_input(x, v))
    diag = ControlDiagnostics(z=z, v=v, e=e, z_d=z_d, v_d=v_d)
    if not np.isfinite(u):
        raise ControlError(f"non-finite input at k={k}: v={v}, e={e}, z={z}")
    return u, diag


@dataclass
class ClosedLoopTrace:
    """Aligned closed-loop traces; states run one step past the inputs."""

    x: np.ndarray      # (K+1, n)
    u: np.ndarray      # (K,)
    z: np.ndarray      # (K, n)
    z_d: np.ndarray    # (K, n)
    v: np.ndarray      # (K,)
    v_d: np.ndarray    # (K,)
    e: np.ndarray      # (K, n)

    @property
    def steps(self) -> int:
        return self.u.shape[0]

    def rms_tracking_error(self) -> float:
        return float(np.sqrt(np.mean(self.e ** 2)))

    def max_tracking_error(self) -> float:
        return float(np.max(np.abs(self.e)))


def run_closed_loop(sys: DiscreteSystem, ctrl: ClosedLoopController,
                    x0, steps: int) -> ClosedLoopTrace:
    """Alternate control_step and plant step for `steps` samples."""
    n = ctrl.plan.n
    if sys.state_dim != n:
        raise ValueError(f"plant dimension {sys.state_dim} does not match "
                         f"controller dimension {n}")
    x = np.asarray(x0, dtype=float).copy()
    X = np.empty((steps + 1, n))
    U = np.empty(steps)
    Z = np.empty((steps, n))
    Zd = np.empty((steps, n))
    V = np.empty(steps)
    Vd = np.empty(steps)
    E = np.empty((steps, n))
    X[0] = x
    for k in range(steps):
        try:
            u, diag = control_step(ctrl, x, k)
            x = np.asarray(sys.step(x, u), dtype=float)
        except Exception as exc:
            raise ControlError(f"closed loop failed at k={k}: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise ControlError(f"plant state non-finite at k={k + 1}")
        X[k + 1] = x
        U[k] = u
        Z[k] = diag.z
        Zd[k] = diag.z_d
        V[k] = diag.v
        Vd[k] = diag.v_d
        E[k] = diag.e
    return ClosedLoopTrace(x=X, u=U, z=Z, z_d=Zd, v=V, v_d=Vd, e=E)


def export_trace_csv(trace: ClosedLoopTrace, path) -> None:
    n = trace.x.shape[1]
    header = (["k"] + [f"x{i+1}" for i in range(n)] + ["u"]
              + [f"z{i+1}" for i in range(n)] + [f"zd{i+1}" for i in range(n)]
              + ["v", "vd"] + [f"e{i+1}" for i in range(n)])
    rows = ([k] + [float(v) for v in trace.x[k]] + [float(trace.u[k])]
            + [float(v) for v in trace.z[k]] + [float(v) for v in trace.z_d[k]]
            + [float(trace.v[k]), float(trace.v_d[k])]
            + [float(v) for v in trace.e[k]]
            for k in range(trace.steps))
    write_csv(path, header, rows)
