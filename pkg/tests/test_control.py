"""Outer loop: pole placement, control law, closed-loop recursion."""

import numpy as np
import pytest

from canonctl.brunovsky import shift, shift_matrices
from canonctl.control import (ClosedLoopController, ControlError,
                              IdentityTransforms, LinearTransforms,
                              control_step, export_trace_csv, pole_placement,
                              run_closed_loop)
from canonctl.csvio import read_csv
from canonctl.planning import plan_trajectory
from canonctl.systems import DiscreteSystem


def shift_plant(n):
    return DiscreteSystem("shift", n, lambda x, u: shift(x, u), 1.0)


def random_stable_poles(rng, n):
    poles = []
    while len(poles) < n:
        if n - len(poles) >= 2 and rng.random() < 0.5:
            r = rng.uniform(0.05, 0.95)
            th = rng.uniform(0.1, np.pi - 0.1)
            poles += [r * np.exp(1j * th), r * np.exp(-1j * th)]
        else:
            poles.append(complex(rng.uniform(-0.95, 0.95)))
    return poles[:n]


class TestPolePlacement:
    def test_deadbeat(self):
        g = pole_placement([0.0, 0.0, 0.0])
        assert np.array_equal(g.a, np.zeros(3))

    def test_repeated_real_pair(self):
        g = pole_placement([0.5, 0.5])
        assert np.allclose(g.a, [0.25, -1.0], rtol=0, atol=1e-15)

    def test_complex_pair(self):
        g = pole_placement([0.3 + 0.4j, 0.3 - 0.4j])
        assert np.allclose(g.a, [0.25, -0.6], rtol=0, atol=1e-15)

    def test_round_trip_against_eigenvalue_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            n = int(rng.integers(1, 7))
            poles = random_stable_poles(rng, n)
            g = pole_placement(poles)
            realized = np.linalg.eigvals(g.error_matrix())
            assert np.allclose(np.sort_complex(realized),
                               np.sort_complex(np.array(poles)), atol=1e-8)

    def test_unstable_pole_rejected(self):
        with pytest.raises(ValueError, match="magnitude"):
            pole_placement([1.0, 0.5])

    def test_non_conjugate_rejected(self):
        with pytest.raises(ValueError, match="conjugat"):
            pole_placement([0.3 + 0.4j, 0.3 + 0.4j])


class TestControlStep:
    def make_controller(self, n=3, poles=(0.5, 0.4, 0.3), z0=0.0, zN=1.0, N=20):
        plan = plan_trajectory(np.full(n, z0), np.full(n, zN), N)
        return ClosedLoopController(IdentityTransforms(n),
                                    pole_placement(list(poles)), plan)

    def test_on_plan_gives_feedforward(self):
        ctrl = self.make_controller()
        x = ctrl.plan.z_d[4]
        u, diag = control_step(ctrl, x, 4)
        assert u == ctrl.plan.v_d[4]
        assert np.array_equal(diag.e, np.zeros(3))

    def test_zero_gains_pure_feedforward(self):
        ctrl = self.make_controller(poles=(0.0, 0.0, 0.0))
        u, _ = control_step(ctrl, np.array([5.0, -2.0, 1.0]), 7)
        assert u == ctrl.plan.v_d[7]

    def test_scalar_deadbeat_reaches_plan_in_one_step(self):
        # plant z+ = v with exact transforms: one step onto the reference
        plan = plan_trajectory([0.0], [1.0], 10)
        ctrl = ClosedLoopController(IdentityTransforms(1), pole_placement([0.0]), plan)
        trace = run_closed_loop(shift_plant(1), ctrl, np.array([0.7]), 5)
        assert np.allclose(trace.x[1:, 0], plan.z_d[1:6, 0], rtol=0, atol=1e-15)

    def test_negative_step_rejected(self):
        ctrl = self.make_controller()
        with pytest.raises(ValueError):
            control_step(ctrl, np.zeros(3), -1)


class TestClosedLoop:
    def test_error_recursion_matches_companion_dynamics(self):
        # plant = shift register, exact transforms: e(k+1) = A_err e(k) exactly
        n = 4
        poles = [0.5, 0.4, 0.3 + 0.2j, 0.3 - 0.2j]
        plan = plan_trajectory(np.zeros(n), np.ones(n), 30)
        gains = pole_placement(poles)
        ctrl = ClosedLoopController(IdentityTransforms(n), gains, plan)
        x0 = plan.z_d[0] + np.array([0.3, -0.2, 0.1, 0.05])
        trace = run_closed_loop(shift_plant(n), ctrl, x0, 30)
        A_err = gains.error_matrix()
        for k in range(trace.steps - 1):
            assert np.max(np.abs(trace.e[k + 1] - A_err @ trace.e[k])) < 1e-10

    def test_deadbeat_zeroes_error_in_n_steps(self):
        n = 4
        plan = plan_trajectory(np.zeros(n), np.ones(n), 30)
        ctrl = ClosedLoopController(IdentityTransforms(n),
                                    pole_placement([0.0] * n), plan)
        x0 = plan.z_d[0] + np.array([0.3, -0.2, 0.1, 0.05])
        trace = run_closed_loop(shift_plant(n), ctrl, x0, 10)
        assert np.max(np.abs(trace.e[n])) < 1e-12
        assert np.max(np.abs(trace.e[n:])) < 1e-12

    def test_geometric_decay_bound(self):
        n = 3
        poles = [0.6, 0.5, 0.4]
        plan = plan_trajectory(np.zeros(n), np.ones(n), 60)
        ctrl = ClosedLoopController(IdentityTransforms(n),
                                    pole_placement(poles), plan)
        x0 = plan.z_d[0] + np.array([0.5, 0.1, -0.3])
        trace = run_closed_loop(shift_plant(n), ctrl, x0, 60)
        norms = np.linalg.norm(trace.e, axis=1)
        ratio = max(abs(p) for p in poles) + 0.05
        # after the transient the norm must contract at least geometrically
        for k in range(10, 50):
            bound = norms[k] * ratio ** 5 + 1e-13
            assert norms[k + 5] <= bound

    def test_feedforward_exactness_on_plan(self):
        n = 4
        plan = plan_trajectory(np.full(n, 0.2), np.full(n, -0.7), 40)
        ctrl = ClosedLoopController(IdentityTransforms(n),
                                    pole_placement([0.5] * n), plan)
        trace = run_closed_loop(shift_plant(n), ctrl, plan.z_d[0].copy(), 40)
        assert np.max(np.abs(trace.e)) == 0.0
        assert np.max(np.abs(trace.x[:41] - plan.z_d)) == 0.0

    def test_equilibrium_hold(self):
        n = 2
        c = 0.8
        plan = plan_trajectory(np.full(n, c), np.full(n, c), 10)
        ctrl = ClosedLoopController(IdentityTransforms(n),
                                    pole_placement([0.0] * n), plan)
        trace = run_closed_loop(shift_plant(n), ctrl, np.full(n, c), 25)
        assert np.max(np.abs(trace.x - c)) < 1e-12

    def test_linear_plant_exact_transforms_match_hand_recursion(self):
        # well-conditioned 3-state pair and an independently coded loop
        A = np.array([[0.9, 0.2, 0.0], [0.0, 0.8, 0.3], [0.1, 0.0, 0.7]])
        b = np.array([0.0, 0.2, 1.0])
        tr = LinearTransforms(A, b)
        plant = DiscreteSystem("lti", 3, lambda x, u: A @ x + b * u, 1.0)
        z0 = tr.encode_state(np.array([0.1, -0.2, 0.3]))
        zN = tr.encode_state(np.array([1.0, 0.5, -0.4]))
        plan = plan_trajectory(z0, zN, 25)
        gains = pole_placement([0.4, 0.3, 0.2])
        ctrl = ClosedLoopController(tr, gains, plan)
        x0 = np.array([0.3, -0.1, 0.2])
        trace = run_closed_loop(plant, ctrl, x0, 35)

        # hand-rolled recursion in original coordinates
        T = tr.T
        rowA = tr.row_n_A
        x = x0.copy()
        for k in range(35):
            kk = min(k, 25)
            v = -gains.a @ (T @ x - plan.z_d[kk]) + plan.v_d[kk]
            u = v - rowA @ x
            x = A @ x + b * u
            assert np.max(np.abs(x - trace.x[k + 1])) < 1e-10
            assert abs(u - trace.u[k]) < 1e-10

    def test_dimension_mismatch_rejected(self):
        plan = plan_trajectory(np.zeros(3), np.ones(3), 10)
        ctrl = ClosedLoopController(IdentityTransforms(3),
                                    pole_placement([0.1] * 3), plan)
        with pytest.raises(ValueError):
            run_closed_loop(shift_plant(4), ctrl, np.zeros(4), 5)

    def test_trace_csv_round_trip(self, tmp_path):
        n = 2
        plan = plan_trajectory(np.zeros(n), np.ones(n), 8)
        ctrl = ClosedLoopController(IdentityTransforms(n),
                                    pole_placement([0.2, 0.1]), plan)
        trace = run_closed_loop(shift_plant(n), ctrl, np.array([0.5, 0.0]), 8)
        path = tmp_path / "trace.csv"
        export_trace_csv(trace, path)
        header = ["k", "x1", "x2", "u", "z1", "z2", "zd1", "zd2", "v", "vd",
                  "e1", "e2"]
        rows = read_csv(path, header)
        assert len(rows) == 8
        assert rows[3][3] == trace.u[3]


class TestLinearTransforms:
    def test_uncontrollable_rejected(self):
        A = np.diag([0.5, 0.6])
        b = np.array([1.0, 0.0])
        with pytest.raises(ValueError, match="controllable"):
            LinearTransforms(A, b)

    def test_brunovsky_conjugacy(self):
        rng = np.random.default_rng(5)
        A = rng.normal(size=(3, 3)) * 0.4
        b = rng.normal(size=3)
        tr = LinearTransforms(A, b)
        x = rng.normal(size=3)
        u = rng.normal()
        z_next_direct = tr.encode_state(A @ x + b * u)
        z_next_shift = shift(tr.encode_state(x), tr.encode_input(x, u))
        assert np.allclose(z_next_direct, z_next_shift, rtol=0, atol=1e-10)

    def test_input_round_trip(self):
        rng = np.random.default_rng(6)
        A = rng.normal(size=(4, 4)) * 0.3
        b = rng.normal(size=4)
        tr = LinearTransforms(A, b)
        x = rng.normal(size=4)
        assert tr.decode_input(x, tr.encode_input(x, 0.37)) == pytest.approx(0.37)
