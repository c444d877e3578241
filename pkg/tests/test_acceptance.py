"""Acceptance suite: one test per criterion, each printing a PASS line.

The two desk-scale learning runs (academic system and crane) and the
transfer study train real models and take minutes; they are marked `slow`
but run as part of the default suite.  Run just this file with

    pytest tests/test_acceptance.py -v -s
"""

import time

import numpy as np
import pytest

from canonctl import (SIGMA_N, SIGMA_T, LossWeights, TrainOptions,
                      academic_system, build_crane_matrices, crane_model,
                      init_autoencoder, plan_trajectory, pole_placement,
                      predict_rollout, run_closed_loop, train,
                      transfer_finetune)
from canonctl.autoencoder import loss_batch
from canonctl.brunovsky import shift
from canonctl.config import ControlConfig, RunConfig
from canonctl.control import ClosedLoopController, IdentityTransforms
from canonctl.datasets import ExcitationPolicy, generate_dataset, normalize, split
from canonctl.pipeline import (build_controller, cmd_gen_data, cmd_simulate,
                               cmd_train, cmd_transfer, decays_in_envelope,
                               record_experiments, simulate_once)
from canonctl.systems import DiscreteSystem

RNG_SEED = 20240811


def report(name, **kv):
    details = ", ".join(f"{k}={v}" for k, v in kv.items())
    print(f"\n[PASS] {name}: {details}")


# ---------------------------------------------------------------------------
# Criterion 1: gradient oracle


@pytest.mark.slow
def test_gradient_oracle_networks_and_composite_loss():
    """Analytic gradients match central differences (h=1e-5, rel err < 1e-5)."""
    from canonctl.nets import backward, forward, init_network
    t0 = time.time()
    rng = np.random.default_rng(RNG_SEED)
    h = 1e-5
    worst = 0.0

    # 100 random small networks with random cotangents
    for trial in range(100):
        dims = (int(rng.integers(1, 5)), int(rng.integers(2, 7)),
                int(rng.integers(1, 4)))
        act = ("sigmoid", "tanh")[trial % 2]
        net = init_network(*dims, seed=int(rng.integers(2 ** 31)), activation=act)
        for _, arr in net.params():
            arr += 0.3 * rng.normal(size=arr.shape)
        x = rng.normal(size=dims[0])
        dy = rng.normal(size=dims[2])
        _, cache = forward(net, x)
        grads, _ = backward(net, cache, dy)

        def scalar_loss():
            y, _ = forward(net, x)
            return float(dy @ y)

        for (_, P), (_, G) in zip(net.params(), grads.params()):
            it = np.nditer(P, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = P[idx]
                P[idx] = old + h
                lp = scalar_loss()
                P[idx] = old - h
                lm = scalar_loss()
                P[idx] = old
                fd = (lp - lm) / (2 * h)
                rel = abs(fd - G[idx]) / max(abs(fd), abs(G[idx]), 1e-6)
                worst = max(worst, rel)
    assert worst < 1e-5

    # full composite loss on batches of 5
    worst_loss = 0.0
    for trial in range(3):
        n = int(rng.integers(2, 4))
        ae = init_autoencoder(n, 5, seed=int(rng.integers(2 ** 31)))
        X = rng.normal(size=(5, n))
        U = rng.normal(size=5)
        Xp = rng.normal(size=(5, n))
        w = LossWeights(*rng.uniform(0.2, 2.0, size=3))
        _, grads = loss_batch(ae, X, U, Xp, w)
        for name, net in ae.networks():
            for (_, P), (_, G) in zip(net.params(), grads[name].params()):
                it = np.nditer(P, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    old = P[idx]
                    P[idx] = old + h
                    lp, _ = loss_batch(ae, X, U, Xp, w, with_grads=False)
                    P[idx] = old - h
                    lm, _ = loss_batch(ae, X, U, Xp, w, with_grads=False)
                    P[idx] = old
                    fd = (lp.total - lm.total) / (2 * h)
                    rel = abs(fd - G[idx]) / max(abs(fd), abs(G[idx]), 1e-6)
                    worst_loss = max(worst_loss, rel)
    elapsed = time.time() - t0
    assert worst_loss < 1e-5
    assert elapsed < 30.0
    report("gradient oracle", max_rel_err_nets=f"{worst:.2e}",
           max_rel_err_loss=f"{worst_loss:.2e}", seconds=f"{elapsed:.1f}")


# ---------------------------------------------------------------------------
# Criterion 2: exact-transformation closed loop


def test_exact_transformation_closed_loop():
    """With analytic mocks and a shift plant (n=4), the companion error
    recursion holds to 1e-10 and deadbeat zeroes the error in <= 4 steps."""
    t0 = time.time()
    n = 4
    plant = DiscreteSystem("shift", n, lambda x, u: shift(x, u), 1.0)
    plan = plan_trajectory(np.zeros(n), np.ones(n), 50)
    x0 = plan.z_d[0] + np.array([0.4, -0.3, 0.2, 0.1])

    gains = pole_placement([0.5, 0.4, 0.3 + 0.2j, 0.3 - 0.2j])
    ctrl = ClosedLoopController(IdentityTransforms(n), gains, plan)
    trace = run_closed_loop(plant, ctrl, x0, 50)
    A_err = gains.error_matrix()
    worst = max(np.max(np.abs(trace.e[k + 1] - A_err @ trace.e[k]))
                for k in range(trace.steps - 1))
    assert worst < 1e-10

    deadbeat = ClosedLoopController(IdentityTransforms(n),
                                    pole_placement([0.0] * n), plan)
    trace_db = run_closed_loop(plant, deadbeat, x0, 20)
    assert np.max(np.abs(trace_db.e[n:])) < 1e-12
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report("exact-transformation closed loop",
           recursion_residual=f"{worst:.2e}",
           deadbeat_error_at_n=f"{np.max(np.abs(trace_db.e[n])):.2e}",
           seconds=f"{elapsed:.2f}")


# ---------------------------------------------------------------------------
# Criterion 3: trajectory-plan invariants


def test_trajectory_plan_invariants():
    """200 random (n<=5, N<=500) plans: boundaries and shift to 1e-9."""
    t0 = time.time()
    rng = np.random.default_rng(RNG_SEED + 1)
    worst_boundary = worst_shift = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 6))
        N = int(rng.integers(n, 501))
        z0 = rng.uniform(-2.0, 2.0, n)
        zN = rng.uniform(-2.0, 2.0, n)
        plan = plan_trajectory(z0, zN, N)
        worst_boundary = max(worst_boundary,
                             float(np.max(np.abs(plan.z_d[0] - z0))),
                             float(np.max(np.abs(plan.z_d[N] - zN))))
        shifted = np.column_stack([plan.z_d[:-1, 1:], plan.v_d[:-1]])
        worst_shift = max(worst_shift,
                          float(np.max(np.abs(plan.z_d[1:] - shifted))))
    elapsed = time.time() - t0
    assert worst_boundary < 1e-9
    assert worst_shift < 1e-9
    assert elapsed < 10.0
    report("trajectory-plan invariants", boundary=f"{worst_boundary:.2e}",
           shift=f"{worst_shift:.2e}", seconds=f"{elapsed:.1f}")


# ---------------------------------------------------------------------------
# Criterion 4: pole placement round trip


def test_pole_placement_round_trip():
    """100 random conjugate-closed stable sets (n<=6): roots match to 1e-8."""
    t0 = time.time()
    rng = np.random.default_rng(RNG_SEED + 2)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 7))
        poles = []
        while len(poles) < n:
            if n - len(poles) >= 2 and rng.random() < 0.5:
                r = rng.uniform(0.05, 0.95)
                th = rng.uniform(0.05, np.pi - 0.05)
                poles += [r * np.exp(1j * th), r * np.exp(-1j * th)]
            else:
                poles.append(complex(rng.uniform(-0.95, 0.95)))
        poles = poles[:n]
        gains = pole_placement(poles)
        realized = np.sort_complex(np.linalg.eigvals(gains.error_matrix()))
        requested = np.sort_complex(np.array(poles))
        worst = max(worst, float(np.max(np.abs(realized - requested))))
    elapsed = time.time() - t0
    assert worst < 1e-8
    assert elapsed < 5.0
    report("pole placement round trip", worst_root_error=f"{worst:.2e}",
           seconds=f"{elapsed:.1f}")


# ---------------------------------------------------------------------------
# Criterion 5: academic desk-scale learning


@pytest.fixture(scope="module")
def academic_run():
    sys = academic_system()
    policy = ExcitationPolicy(mode="random_input", seed=11,
                              input_amplitude=0.5,
                              init_low=(-0.3, -0.3, -0.3),
                              init_high=(0.3, 0.3, 0.3))
    ds = generate_dataset(sys, policy, 100, 50,
                          safety_low=[-3] * 3, safety_high=[3] * 3)
    assert len(ds) == 5000
    dsn = normalize(ds)
    ae = init_autoencoder(3, 80, seed=1, norm=dsn.norm)
    opts = TrainOptions(epochs=2000, batch_size=256, seed=7)
    t0 = time.time()
    trained, history = train(ae, dsn, LossWeights(), opts)
    return ds, dsn, trained, history, time.time() - t0


@pytest.mark.slow
def test_academic_validation_loss_drops_100x(academic_run):
    ds, dsn, ae, history, train_s = academic_run
    drop = history[0].val_total / history[-1].val_total
    assert train_s < 15 * 60
    assert drop >= 100.0
    report("academic desk-scale: validation loss drop",
           drop=f"{drop:.0f}x", first=f"{history[0].val_total:.3e}",
           last=f"{history[-1].val_total:.3e}", train_seconds=f"{train_s:.0f}")


@pytest.mark.slow
def test_academic_rollout_rmse_under_5pct_of_state_std(academic_run):
    ds, dsn, ae, history, _ = academic_run
    _, val = split(ds, 0.9, 7)
    tid = int(val.trajectory_ids[0])
    states, inputs = val.trajectory(tid)
    pred = predict_rollout(ae, states[0], inputs)
    rmse = float(np.sqrt(np.mean((pred - states) ** 2)))
    std_rms = float(np.sqrt(np.mean(ds.norm.x_scale ** 2)))
    assert states.shape[0] == 51  # 50-step rollout
    assert rmse < 0.05 * std_rms
    report("academic desk-scale: 50-step rollout",
           rmse=f"{rmse:.4f}", limit=f"{0.05 * std_rms:.4f}")


@pytest.mark.slow
def test_academic_reconstruction_under_2pct_of_channel_scale(academic_run):
    ds, dsn, ae, history, _ = academic_run
    _, val = split(ds, 0.9, 7)
    x_rec = ae.decode_state(ae.encode_state(val.X))
    u_rec = ae.decode_input(val.X, ae.encode_input(val.X, val.U))
    rel_x = np.sqrt(np.mean((x_rec - val.X) ** 2, axis=0)) / ds.norm.x_scale
    rel_u = float(np.sqrt(np.mean((u_rec - val.U) ** 2))) / ds.norm.u_scale
    assert np.all(rel_x < 0.02)
    assert rel_u < 0.02
    report("academic desk-scale: reconstruction",
           rel_x=np.array2string(rel_x, precision=4), rel_u=f"{rel_u:.4f}")


# ---------------------------------------------------------------------------
# Criteria 6-7: crane desk-scale closed loop and transfer (shared fixture)

CRANE_POLICY = ExcitationPolicy(mode="mixed", seed=21, kp=20.0, kd=5.0,
                                setpoint_low=0.0, setpoint_high=1.0,
                                setpoint_hold=150, noise_amplitude=4.0,
                                init_low=(-0.02, -0.005, -0.3, -0.02),
                                init_high=(0.02, 0.005, 0.3, 0.02))

CRANE_CONTROL = ControlConfig(poles=[0.98] * 4, horizon=400,
                              start_state=np.zeros(4),
                              goal_state=np.array([1.0, 0, 0, 0]),
                              initial_offset=0.1, extra_steps=100,
                              equilibrium_boundaries=True)

CRANE_TRAIN = TrainOptions(epochs=4000, batch_size=128, seed=7,
                           plateau_patience=400, plateau_rtol=1e-3)

CRANE_WEIGHTS = LossWeights(1.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def crane_run():
    cm = crane_model(SIGMA_N, 0.005)
    ds = generate_dataset(cm.system(), CRANE_POLICY, 100, 400)
    assert len(ds) == 40000
    dsn = normalize(ds)
    ae = init_autoencoder(4, 120, seed=1, norm=dsn.norm)
    t0 = time.time()
    trained, history = train(ae, dsn, CRANE_WEIGHTS, CRANE_TRAIN)
    return cm, ds, trained, history, time.time() - t0


@pytest.mark.slow
def test_crane_desk_scale_closed_loop(crane_run):
    cm, ds, ae, history, train_s = crane_run
    assert train_s < 60 * 60
    trace, _ = simulate_once(cm.system(), ae, CRANE_CONTROL)
    terminal = abs(trace.x[400, 0] - 1.0)
    # offset transient: cart position error against the decoded reference
    x_ref = ae.decode_state(trace.z_d)
    pos_err = trace.x[:trace.steps, 0] - x_ref[:, 0]
    envelope_ok = decays_in_envelope(pos_err[:400], window=50)
    assert terminal < 0.02
    assert envelope_ok
    report("crane desk-scale closed loop",
           terminal_error_m=f"{terminal:.4f}",
           max_force_N=f"{np.abs(trace.u).max():.1f}",
           val_loss=f"{history[-1].val_total:.3e}",
           epochs=len(history), train_seconds=f"{train_s:.0f}")


@pytest.mark.slow
def test_transfer_improvement(crane_run):
    cm, ds, ae, history, _ = crane_run
    t0 = time.time()
    target = crane_model(SIGMA_T, 0.005)

    trace_before, _ = simulate_once(target.system(), ae, CRANE_CONTROL)
    e_before = trace_before.rms_tracking_error()
    term_before = abs(trace_before.x[400, 0] - 1.0)

    from canonctl.config import TransferConfig
    tcfg = TransferConfig(target_params=SIGMA_T, n_experiments=50, seed=2,
                          epochs=300)
    new_ds = record_experiments(target.system(), ae, CRANE_CONTROL, tcfg)
    assert new_ds.trajectory_ids.size == 50
    opts = TrainOptions(epochs=tcfg.epochs, batch_size=256, seed=tcfg.seed,
                        lr=tcfg.lr)
    adapted, _ = transfer_finetune(ae, new_ds, CRANE_WEIGHTS, opts)

    trace_after, _ = simulate_once(target.system(), adapted, CRANE_CONTROL)
    e_after = trace_after.rms_tracking_error()
    term_after = abs(trace_after.x[400, 0] - 1.0)
    elapsed = time.time() - t0

    assert elapsed < 30 * 60
    assert e_after < 0.5 * e_before
    assert term_after < term_before
    report("transfer improvement",
           rms_before=f"{e_before:.4e}", rms_after=f"{e_after:.4e}",
           ratio=f"{e_after / e_before:.3f}",
           terminal_before_m=f"{term_before:.4f}",
           terminal_after_m=f"{term_after:.4f}", seconds=f"{elapsed:.0f}")


@pytest.mark.slow
def test_transfer_self_keeps_validation_loss(crane_run):
    """Fine-tuning on nominal-plant recordings must not degrade the model."""
    cm, ds, ae, history, _ = crane_run
    from canonctl.config import TransferConfig
    tcfg = TransferConfig(target_params=SIGMA_N, n_experiments=10, seed=3,
                          epochs=50)
    self_ds = record_experiments(cm.system(), ae, CRANE_CONTROL, tcfg)
    opts = TrainOptions(epochs=tcfg.epochs, batch_size=256, seed=tcfg.seed,
                        lr=tcfg.lr)
    adapted, _ = transfer_finetune(ae, self_ds, CRANE_WEIGHTS, opts)

    dsn = normalize(ds, constants=ae.norm)
    _, val = split(dsn, 0.9, CRANE_TRAIN.seed)
    before, _ = loss_batch(ae, val.X, val.U, val.Xp, CRANE_WEIGHTS,
                           with_grads=False)
    after, _ = loss_batch(adapted, val.X, val.U, val.Xp, CRANE_WEIGHTS,
                          with_grads=False)
    assert after.total < 1.10 * before.total
    report("self-transfer validation loss",
           before=f"{before.total:.4e}", after=f"{after.total:.4e}",
           ratio=f"{after.total / before.total:.3f}")


# ---------------------------------------------------------------------------
# Criterion 8: determinism


@pytest.mark.slow
def test_pipeline_determinism_bit_identical(tmp_path):
    """One config + seed reproduces datasets, checkpoints and traces
    byte-for-byte (run on a reduced-size config exercising every stage)."""
    import json
    doc = {
        "system": {"name": "crane", "T_a": 0.005},
        "dataset": {"n_traj": 6, "traj_len": 120,
                    "policy": {"mode": "mixed", "seed": 3, "kp": 20.0,
                               "kd": 5.0, "noise_amplitude": 4.0,
                               "setpoint_hold": 60,
                               "init_low": [-0.02, -0.005, -0.3, -0.02],
                               "init_high": [0.02, 0.005, 0.3, 0.02]}},
        "network": {"n_l": 16, "seed": 1},
        "training": {"epochs": 25, "batch_size": 64, "seed": 5},
        "control": {"poles": [0.97, 0.97, 0.97, 0.97], "horizon": 60,
                    "start_state": [0, 0, 0, 0], "goal_state": [1, 0, 0, 0],
                    "initial_offset": 0.05, "extra_steps": 20},
        "transfer": {"target_params": {"L": 0.53, "m_c": 12.72, "m_h": 0.34,
                                       "rhoA": 2.26, "EI": 14.28},
                     "n_experiments": 3, "epochs": 5, "seed": 9},
        "output": "unused",
    }
    cfgp = tmp_path / "cfg.json"
    cfgp.write_text(json.dumps(doc))
    cfg = RunConfig.from_dict(doc)

    artifacts = ["dataset.csv", "dataset.csv.meta.json", "checkpoint.json",
                 "loss_history.csv", "trace.csv", "plan.csv",
                 "trace_before.csv", "trace_after.csv", "transfer_data.csv",
                 "checkpoint_adapted.json", "transfer_loss_history.csv"]

    def run(out):
        cfg2 = RunConfig.from_dict(json.loads(cfgp.read_text()))
        cmd_gen_data(cfg2, out)
        cmd_train(cfg2, out)
        cmd_simulate(cfg2, out)
        cmd_transfer(cfg2, out)
        return {a: (out / a).read_bytes() for a in artifacts}

    a = run(tmp_path / "a")
    b = run(tmp_path / "b")
    for name in artifacts:
        assert a[name] == b[name], f"{name} differs between identical runs"
    report("determinism", artifacts_compared=len(artifacts),
           all_bit_identical=True)


# ---------------------------------------------------------------------------
# Criterion 9: crane matrix values


def test_crane_matrix_values():
    """Nominal parameters reproduce the closed-form mass/stiffness values."""
    M, c2, G = build_crane_matrices(SIGMA_N)
    L = SIGMA_N.L
    m11_expected = 2.10 * L + 13.10 + 0.32          # = 14.533
    m12_expected = 0.32 + 2.10 * L / 3.0            # ~ 0.691
    m22_expected = 13.10 + 2.10 * L / 5.0           # ~ 13.3226
    c2_expected = 4.0 * 14.97 / L ** 3              # ~ 402.21
    assert abs(M[0, 0] - 14.533) < 1e-9
    assert abs(M[0, 0] - m11_expected) < 1e-9
    assert abs(M[0, 1] - m12_expected) < 1e-9
    assert abs(M[1, 1] - m22_expected) < 1e-9
    assert abs(c2 - c2_expected) < 1e-9
    report("crane matrix values", m11=f"{M[0, 0]:.6f}", m12=f"{M[0, 1]:.6f}",
           m22=f"{M[1, 1]:.6f}", c2=f"{c2:.6f}")
