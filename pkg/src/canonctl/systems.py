"""Ground-truth discrete-time plants for data generation and simulation.

Two benchmark systems: a 3-state nonlinear map that admits an exact static
feedback linearization, and a zero-order-hold discretization of a flexible
single-mast stacker crane (cart + first bending mode), in a nominal and a
parameter-perturbed variant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .csvio import write_csv

SINGULAR_TOL = 1e-9


class SingularStateError(ValueError):
    """State hit a pole of the academic map (denominator below tolerance)."""


class SimulationError(RuntimeError):
    """Plant step failed mid-rollout; message carries the step index."""


@dataclass(frozen=True)
class DiscreteSystem:
    """A deterministic sampled-data plant x+ = step(x, u), scalar input."""

    name: str
    state_dim: int
    step: Callable[[np.ndarray, float], np.ndarray]
    sampling_time: float
    input_dim: int = 1


# ---------------------------------------------------------------------------
# Academic 3-state system


def academic_step(x: np.ndarray, u: float) -> np.ndarray:
    """Exactly-linearizable benchmark map.

    x+ = [x2/(x1+2), x2*x3/(x1+2) + 2*x3, u/(x2+2)].
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError(f"academic system state must be 3-dimensional, got {x.shape}")
    d1 = x[0] + 2.0
    d2 = x[1] + 2.0
    if abs(d1) < SINGULAR_TOL or abs(d2) < SINGULAR_TOL:
        raise SingularStateError(
            f"denominator below {SINGULAR_TOL}: x1+2={d1:.3e}, x2+2={d2:.3e}")
    return np.array([x[1] / d1,
                     x[1] * x[2] / d1 + 2.0 * x[2],
                     u / d2])


def academic_system(sampling_time: float = 1.0) -> DiscreteSystem:
    return DiscreteSystem("academic", 3, academic_step, sampling_time)


# ---------------------------------------------------------------------------
# Stacker crane: cart + one Rayleigh-Ritz bending mode


@dataclass(frozen=True)
class CraneParams:
    """Physical crane parameters (all strictly positive)."""

    L: float        # mast length, m
    m_c: float      # cart mass, kg
    m_h: float      # tip mass, kg
    rhoA: float     # beam linear density, kg/m
    EI: float       # bending stiffness, N m^2

    def __post_init__(self):
        for name, value in [("L", self.L), ("m_c", self.m_c), ("m_h", self.m_h),
                            ("rhoA", self.rhoA), ("EI", self.EI)]:
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"crane parameter {name} must be positive, got {value}")


# Nominal and perturbed parameter sets of the benchmark crane pair.
SIGMA_N = CraneParams(L=0.53, m_c=13.10, m_h=0.32, rhoA=2.10, EI=14.97)
SIGMA_T = CraneParams(L=0.53, m_c=12.72, m_h=0.34, rhoA=2.26, EI=14.28)


@dataclass(frozen=True)
class BeamAnsatz:
    """Closed-form integrals of a clamped-base shape function with psi(L)=1."""

    name: str
    psi_L: float                      # psi(L), normalized to 1
    int_psi: Callable[[float], float]       # integral of psi over [0, L]
    int_psi_sq: Callable[[float], float]    # integral of psi^2
    int_psi_dd_sq: Callable[[float], float]  # integral of (psi'')^2
    psi: Callable[[float, float], float]     # psi(Y, L)


ANSATZ = {
    # psi(Y) = (Y/L)^2: simplest shape with psi(0)=psi'(0)=0, psi(L)=1
    "quadratic": BeamAnsatz(
        name="quadratic",
        psi_L=1.0,
        int_psi=lambda L: L / 3.0,
        int_psi_sq=lambda L: L / 5.0,
        int_psi_dd_sq=lambda L: 4.0 / L ** 3,
        psi=lambda Y, L: (Y / L) ** 2,
    ),
    # psi(Y) = (3 (Y/L)^2 - (Y/L)^3) / 2: clamped-free static bending shape
    "cubic": BeamAnsatz(
        name="cubic",
        psi_L=1.0,
        int_psi=lambda L: 3.0 * L / 8.0,
        int_psi_sq=lambda L: 33.0 * L / 140.0,
        int_psi_dd_sq=lambda L: 3.0 / L ** 3,
        psi=lambda Y, L: (3.0 * (Y / L) ** 2 - (Y / L) ** 3) / 2.0,
    ),
}


def build_crane_matrices(p: CraneParams, ansatz: str = "quadratic",
                         m22_tip_mass: bool = False):
    """Mass matrix, modal stiffness and input map of M qdd + K q = G u.

    Generalized coordinates q = (x_c, qbar).  `m22_tip_mass` substitutes the
    tip mass for the cart mass in m22 (the benchmark source prints the cart
    mass there; the flag exposes the physically expected variant).
    """
    try:
        a = ANSATZ[ansatz]
    except KeyError:
        raise ValueError(f"unknown beam ansatz {ansatz!r}; "
                         f"expected one of {sorted(ANSATZ)}") from None
    L = p.L
    m11 = p.rhoA * L + p.m_c + p.m_h
    m12 = p.m_h * a.psi_L + p.rhoA * a.int_psi(L)
    m_diag = p.m_h if m22_tip_mass else p.m_c
    m22 = m_diag * a.psi_L ** 2 + p.rhoA * a.int_psi_sq(L)
    c2 = p.EI * a.int_psi_dd_sq(L)
    M = np.array([[m11, m12], [m12, m22]])
    G = np.array([1.0, 0.0])
    return M, c2, G


def zoh_discretize(A_c: np.ndarray, B_c: np.ndarray, T_a: float):
    """Exact zero-order-hold pair via the augmented-block matrix exponential.

    A_d = exp(A_c T_a), B_d = integral_0^T_a exp(A_c s) ds  B_c.
    """
    A_c = np.asarray(A_c, dtype=float)
    B_c = np.asarray(B_c, dtype=float).reshape(A_c.shape[0], -1)
    if T_a <= 0:
        raise ValueError(f"sampling time must be positive, got {T_a}")
    n, m = B_c.shape
    block = np.zeros((n + m, n + m))
    block[:n, :n] = A_c
    block[:n, n:] = B_c
    E = expm(block * T_a)
    A_d, B_d = E[:n, :n], E[:n, n:]
    if not (np.all(np.isfinite(A_d)) and np.all(np.isfinite(B_d))):
        raise FloatingPointError("zero-order-hold discretization produced non-finite entries")
    return A_d, B_d


@dataclass(frozen=True)
class CraneModel:
    """Crane in first-order form, continuous and ZOH-discretized.

    State ordering (x_c, qbar, xdot_c, qbardot); outputs w(Y) = x_c +
    psi(Y) qbar and tip position x_h = w(L).
    """

    params: CraneParams
    ansatz: str
    m22_tip_mass: bool
    T_a: float
    M: np.ndarray
    c2: float
    G: np.ndarray
    A_c: np.ndarray
    B_c: np.ndarray
    A_d: np.ndarray
    B_d: np.ndarray

    def step(self, x: np.ndarray, u: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.A_d @ x + self.B_d[:, 0] * float(u)

    def system(self) -> DiscreteSystem:
        name = f"crane[{self.ansatz}]"
        return DiscreteSystem(name, 4, self.step, self.T_a)

    def deflection(self, x: np.ndarray, Y: float) -> float:
        """Horizontal beam deflection w(Y) = x_c + psi(Y) qbar."""
        psi = ANSATZ[self.ansatz].psi(Y, self.params.L)
        return float(x[0] + psi * x[1])

    def tip_position(self, x: np.ndarray) -> float:
        return self.deflection(x, self.params.L)

    def energy(self, x: np.ndarray) -> float:
        """Mechanical energy 0.5 qd' M qd + 0.5 c2 qbar^2 (conserved at u=0)."""
        x = np.asarray(x, dtype=float)
        qd = x[2:]
        return float(0.5 * qd @ self.M @ qd + 0.5 * self.c2 * x[1] ** 2)


def crane_model(params: CraneParams = SIGMA_N, T_a: float = 0.005,
                ansatz: str = "quadratic", m22_tip_mass: bool = False) -> CraneModel:
    """Build the crane model; (params, T_a) regenerate it bit-identically."""
    M, c2, G = build_crane_matrices(params, ansatz, m22_tip_mass)
    Minv = np.linalg.inv(M)
    K = np.diag([0.0, c2])
    A_c = np.zeros((4, 4))
    A_c[:2, 2:] = np.eye(2)
    A_c[2:, :2] = -Minv @ K
    B_c = np.zeros((4, 1))
    B_c[2:, 0] = Minv @ G
    A_d, B_d = zoh_discretize(A_c, B_c, T_a)
    return CraneModel(params=params, ansatz=ansatz, m22_tip_mass=m22_tip_mass,
                      T_a=T_a, M=M, c2=c2, G=G, A_c=A_c, B_c=B_c,
                      A_d=A_d, B_d=B_d)


# ---------------------------------------------------------------------------
# Rollout


def simulate(sys: DiscreteSystem, x0: np.ndarray, inputs) -> np.ndarray:
    """Open-loop rollout; returns trajectory of shape (len(inputs)+1, n).

    Plant failures are re-raised as SimulationError with the offending step.
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1)
    if inputs.size < 1:
        raise ValueError("simulate needs at least one input sample")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.state_dim,):
        raise ValueError(f"x0 shape {x0.shape} does not match state_dim {sys.state_dim}")
    traj = np.empty((inputs.size + 1, sys.state_dim))
    traj[0] = x0
    for k, u in enumerate(inputs):
        try:
            traj[k + 1] = sys.step(traj[k], float(u))
        except Exception as exc:
            raise SimulationError(f"plant step failed at k={k}: {exc}") from exc
        if not np.all(np.isfinite(traj[k + 1])):
            raise SimulationError(f"non-finite state at k={k + 1}")
    return traj


def export_trajectory_csv(traj: np.ndarray, inputs, path) -> None:
    """Write an open-loop rollout as CSV rows (k, x1..xn, u_k)."""
    traj = np.asarray(traj, dtype=float)
    inputs = np.asarray(inputs, dtype=float).reshape(-1)
    if traj.shape[0] != inputs.size + 1:
        raise ValueError("trajectory must be one sample longer than the inputs")
    n = traj.shape[1]
    header = ["k"] + [f"x{i+1}" for i in range(n)] + ["u"]
    rows = ([k] + [float(v) for v in traj[k]] + [float(inputs[k])]
            for k in range(inputs.size))
    write_csv(path, header, rows)
