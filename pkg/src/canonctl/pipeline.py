"""End-to-end command implementations behind the CLI.

Each command reads the validated RunConfig, performs one pipeline stage
(data generation, training, evaluation, planning, closed-loop simulation,
transfer adaptation), writes its artifacts (CSV traces, SVG plots,
checkpoints) into the output directory and drops a JSON report whose
metrics are recomputable from the emitted files.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from pathlib import Path

import numpy as np

from .autoencoder import (AutoEncoder, TrainOptions, export_loss_history,
                          init_autoencoder, load_checkpoint, predict_rollout,
                          save_checkpoint, train, transfer_finetune)
from .brunovsky import equilibrium_projection
from .config import ControlConfig, RunConfig, SystemConfig, TransferConfig
from .control import (ClosedLoopController, export_trace_csv, pole_placement,
                      run_closed_loop)
from .csvio import write_csv
from .datasets import (Dataset, dataset_from_trajectories, generate_dataset,
                       load_dataset, normalize, save_dataset, split)
from .planning import export_plan_csv, plan_trajectory
from .svgplot import line_plot
from .systems import DiscreteSystem, academic_system, crane_model

log = logging.getLogger(__name__)


def build_system(s: SystemConfig, params=None) -> DiscreteSystem:
    """Instantiate the configured plant (optionally with overridden params)."""
    if s.name == "academic":
        return academic_system(s.T_a)
    return crane_model(params if params is not None else s.params, s.T_a,
                       s.ansatz, s.m22_tip_mass).system()


def resolve_path(out_dir: Path, p: str) -> Path:
    p = Path(p)
    return p if p.is_absolute() else out_dir / p


def write_report(out_dir: Path, name: str, cfg: RunConfig, t_start: float,
                 payload: dict) -> dict:
    report = {"command": name,
              "config_fingerprint": cfg.fingerprint,
              **payload,
              "wall_clock_s": time.time() - t_start}
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"report-{name}.json", "w") as fh:
        json.dump(report, fh, indent=2, default=float)
        fh.write("\n")
    return report


# ---------------------------------------------------------------------------
# gen-data


def cmd_gen_data(cfg: RunConfig, out_dir: Path) -> dict:
    t0 = time.time()
    sys = build_system(cfg.system)
    d = cfg.dataset
    ds = generate_dataset(sys, d.policy, d.n_traj, d.traj_len,
                          safety_low=d.safety_low, safety_high=d.safety_high)
    path = resolve_path(out_dir, d.path)
    save_dataset(ds, path)
    log.info("recorded %d samples over %d trajectories -> %s",
             len(ds), d.n_traj, path)
    return write_report(out_dir, "gen-data", cfg, t0, {
        "seed": d.policy.seed,
        "dataset": {
            "path": str(path),
            "n_samples": len(ds),
            "n_trajectories": int(ds.trajectory_ids.size),
            "T_a": ds.T_a,
            "x_min": ds.x_min.tolist(), "x_max": ds.x_max.tolist(),
            "u_min": ds.u_min, "u_max": ds.u_max,
            "policy_fingerprint": ds.policy_fingerprint,
        }})


# ---------------------------------------------------------------------------
# train


def cmd_train(cfg: RunConfig, out_dir: Path) -> dict:
    t0 = time.time()
    ds = load_dataset(resolve_path(out_dir, cfg.dataset.path))
    ds_n = normalize(ds)
    ae = init_autoencoder(ds.n, cfg.network.n_l, cfg.network.seed,
                          cfg.network.activation, norm=ds_n.norm)
    trained, history = train(ae, ds_n, cfg.training.weights, cfg.training.options)
    meta = {"epochs_run": len(history),
            "epochs_requested": cfg.training.options.epochs,
            "dataset_fingerprint": ds.policy_fingerprint,
            "split": cfg.training.options.split,
            "seed": cfg.training.options.seed,
            "network_seed": cfg.network.seed}
    save_checkpoint(trained, out_dir / "checkpoint.json",
                    loss_weights=cfg.training.weights, training_meta=meta)
    export_loss_history(history, out_dir / "loss_history.csv")
    if history:
        line_plot(out_dir / "loss_history.svg",
                  [("total", [r.total for r in history]),
                   ("val_total", [r.val_total for r in history])],
                  title="training loss", xlabel="epoch", ylabel="loss")
    final = history[-1] if history else None
    return write_report(out_dir, "train", cfg, t0, {
        "seed": cfg.training.options.seed,
        "epochs_run": len(history),
        "final_losses": None if final is None else {
            "L_rec_x": final.l_rec_x, "L_rec_u": final.l_rec_u,
            "L_pred_1": final.l_pred_1, "L_pred_2": final.l_pred_2,
            "total": final.total, "val_total": final.val_total},
        "first_val_total": history[0].val_total if history else None,
        "checkpoint": str(out_dir / "checkpoint.json")})


# ---------------------------------------------------------------------------
# eval


def cmd_eval(cfg: RunConfig, out_dir: Path, checkpoint=None) -> dict:
    t0 = time.time()
    ae, _ = load_checkpoint(checkpoint or out_dir / "checkpoint.json")
    ds = load_dataset(resolve_path(out_dir, cfg.dataset.path))
    _, val = split(ds, cfg.training.options.split, cfg.training.options.seed)
    n = ds.n

    pred_rows, rec_rows = [], []
    sq_err, sq_count = 0.0, 0
    first_plot = None
    for tid in val.trajectory_ids:
        states, inputs = val.trajectory(int(tid))
        pred = predict_rollout(ae, states[0], inputs)
        err = pred - states
        sq_err += float(np.sum(err ** 2))
        sq_count += err.size
        for k in range(states.shape[0]):
            pred_rows.append([int(tid), k] + list(states[k]) + list(pred[k])
                             + list(err[k]))
        if first_plot is None:
            first_plot = (int(tid), states, pred)
    rollout_rmse = float(np.sqrt(sq_err / sq_count))

    x_rec = ae.decode_state(ae.encode_state(val.X))
    u_rec = ae.decode_input(val.X, ae.encode_input(val.X, val.U))
    ex = x_rec - val.X
    eu = u_rec - val.U
    for i in range(len(val)):
        rec_rows.append([int(val.traj[i]), int(val.k[i])] + list(ex[i]) + [eu[i]])
    rec_rmse_x = np.sqrt(np.mean(ex ** 2, axis=0))
    rec_rmse_u = float(np.sqrt(np.mean(eu ** 2)))

    header = (["traj", "k"] + [f"x{i+1}" for i in range(n)]
              + [f"xhat{i+1}" for i in range(n)] + [f"err{i+1}" for i in range(n)])
    write_csv(out_dir / "prediction.csv", header, pred_rows)
    write_csv(out_dir / "reconstruction.csv",
              ["traj", "k"] + [f"ex{i+1}" for i in range(n)] + ["eu"], rec_rows)

    tid, states, pred = first_plot
    series = []
    for i in range(n):
        series.append((f"x{i+1}", states[:, i]))
        series.append((f"xhat{i+1}", pred[:, i]))
    line_plot(out_dir / "prediction.svg", series,
              title=f"model rollout vs recorded trajectory {tid}", xlabel="k")
    line_plot(out_dir / "reconstruction.svg",
              [(f"ex{i+1}", ex[:200, i]) for i in range(n)] + [("eu", eu[:200])],
              title="reconstruction errors (first 200 validation samples)",
              xlabel="sample")

    scales = ds.norm.x_scale if ds.norm is not None else np.std(ds.X, axis=0)
    u_scale = ds.norm.u_scale if ds.norm is not None else float(np.std(ds.U))
    return write_report(out_dir, "eval", cfg, t0, {
        "rollout_rmse": rollout_rmse,
        "state_std_rms": float(np.sqrt(np.mean(np.asarray(scales) ** 2))),
        "reconstruction_rmse_x": rec_rmse_x.tolist(),
        "reconstruction_rmse_u": rec_rmse_u,
        "x_channel_scales": np.asarray(scales).tolist(),
        "u_channel_scale": u_scale,
        "n_validation_trajectories": int(val.trajectory_ids.size)})


# ---------------------------------------------------------------------------
# plan / simulate


def build_plan(ae: AutoEncoder, c: ControlConfig):
    """Encode the requested boundary states and plan between them.

    With `equilibrium_boundaries` the encoded rest states are projected to
    exact shift-register fixed points (all components equal).  Encoder
    noise otherwise rides on the boundary samples and gets amplified by the
    polynomial interpolant far away from the clusters.  The held terminal
    feedforward is then made stationary as well: the raw v_d(N) is a
    one-step polynomial extrapolation past the last boundary node, and its
    offset from the fixed-point input would act as a constant force bias
    during the hold phase.
    """
    z0 = ae.encode_state(c.start_state)
    zN = ae.encode_state(c.goal_state)
    if not c.equilibrium_boundaries:
        return plan_trajectory(z0, zN, c.horizon)
    z0, _ = equilibrium_projection(z0)
    zN, c1 = equilibrium_projection(zN)
    plan = plan_trajectory(z0, zN, c.horizon)
    v_d = plan.v_d.copy()
    v_d[-1] = c1
    return dataclasses.replace(plan, v_d=v_d)


def build_controller(ae: AutoEncoder, c: ControlConfig) -> ClosedLoopController:
    gains = pole_placement(c.poles)
    plan = build_plan(ae, c)
    return ClosedLoopController(transforms=ae, gains=gains, plan=plan)


def _require_control(cfg: RunConfig) -> ControlConfig:
    from .config import ConfigError
    if cfg.control is None:
        raise ConfigError("this command needs a 'control' section in the config")
    return cfg.control


def cmd_plan(cfg: RunConfig, out_dir: Path, checkpoint=None) -> dict:
    t0 = time.time()
    c = _require_control(cfg)
    ae, _ = load_checkpoint(checkpoint or out_dir / "checkpoint.json")
    plan = build_plan(ae, c)
    export_plan_csv(plan, out_dir / "plan.csv")
    line_plot(out_dir / "plan.svg",
              [(f"zd{i+1}", plan.z_d[:, i]) for i in range(plan.n)]
              + [("vd", plan.v_d)],
              title="canonical reference trajectory", xlabel="k")
    return write_report(out_dir, "plan", cfg, t0, {
        "horizon": plan.horizon,
        "z0": plan.z_d[0].tolist(),
        "zN": plan.z_d[-1].tolist(),
        "alpha": plan.alpha.tolist()})


def simulate_once(sys: DiscreteSystem, ae: AutoEncoder, c: ControlConfig):
    """Run the standard maneuver: plan start->goal, offset initial state."""
    ctrl = build_controller(ae, c)
    x0 = c.start_state.copy()
    x0[0] += c.initial_offset
    steps = c.horizon + c.extra_steps
    trace = run_closed_loop(sys, ctrl, x0, steps)
    return trace, ctrl


def closed_loop_metrics(trace, c: ControlConfig) -> dict:
    N = c.horizon
    return {
        "rms_tracking_error": trace.rms_tracking_error(),
        "max_tracking_error": trace.max_tracking_error(),
        "terminal_position": float(trace.x[N, 0]),
        "terminal_position_error": float(abs(trace.x[N, 0] - c.goal_state[0])),
        "final_position_error": float(abs(trace.x[-1, 0] - c.goal_state[0])),
        "steps": trace.steps,
    }


def _trace_plots(out_dir: Path, stem: str, trace, ae: AutoEncoder, c: ControlConfig):
    x_ref = ae.decode_state(trace.z_d)
    n = trace.x.shape[1]
    line_plot(out_dir / f"{stem}_position.svg",
              [("x1", trace.x[:, 0]), ("x1 desired", x_ref[:, 0])],
              title="position vs reference", xlabel="k")
    line_plot(out_dir / f"{stem}_states.svg",
              [(f"x{i+1}", trace.x[:, i]) for i in range(n)],
              title="closed-loop states", xlabel="k")
    line_plot(out_dir / f"{stem}_input.svg", [("u", trace.u)],
              title="plant input", xlabel="k")
    line_plot(out_dir / f"{stem}_error.svg",
              [(f"e{i+1}", trace.e[:, i]) for i in range(n)],
              title="canonical tracking error", xlabel="k")


def cmd_simulate(cfg: RunConfig, out_dir: Path, checkpoint=None) -> dict:
    t0 = time.time()
    c = _require_control(cfg)
    ae, _ = load_checkpoint(checkpoint or out_dir / "checkpoint.json")
    sys = build_system(cfg.system)
    trace, ctrl = simulate_once(sys, ae, c)
    export_trace_csv(trace, out_dir / "trace.csv")
    export_plan_csv(ctrl.plan, out_dir / "plan.csv")
    _trace_plots(out_dir, "trace", trace, ae, c)
    return write_report(out_dir, "simulate", cfg, t0, {
        "poles": [repr(p) for p in c.poles],
        "initial_offset": c.initial_offset,
        "metrics": closed_loop_metrics(trace, c)})


# ---------------------------------------------------------------------------
# transfer


def record_experiments(sys_target: DiscreteSystem, ae: AutoEncoder,
                       c: ControlConfig, t: TransferConfig) -> Dataset:
    """Run the nominal controller on the target plant and record triples.

    Each experiment replans the standard maneuver toward a randomly drawn
    goal position with a randomly drawn initial offset, mimicking a batch
    of commissioning runs under the unadapted controller.
    """
    gains = pole_placement(c.poles)
    blocks = []
    for i in range(t.n_experiments):
        rng = np.random.default_rng([t.seed, i])
        goal = c.goal_state.copy()
        goal[0] = rng.uniform(t.goal_low, t.goal_high)
        bounds = ControlConfig(poles=c.poles, horizon=c.horizon,
                               start_state=c.start_state, goal_state=goal,
                               initial_offset=0.0, extra_steps=c.extra_steps,
                               equilibrium_boundaries=c.equilibrium_boundaries)
        ctrl = ClosedLoopController(transforms=ae, gains=gains,
                                    plan=build_plan(ae, bounds))
        x0 = c.start_state.copy()
        x0[0] += rng.uniform(-t.start_offset_range, t.start_offset_range)
        trace = run_closed_loop(sys_target, ctrl, x0, c.horizon + c.extra_steps)
        blocks.append((trace.x, trace.u))
    return dataset_from_trajectories(blocks, sys_target.sampling_time)


def cmd_transfer(cfg: RunConfig, out_dir: Path, checkpoint=None) -> dict:
    t0 = time.time()
    c = _require_control(cfg)
    if cfg.transfer is None:
        from .config import ConfigError
        raise ConfigError("transfer command needs a 'transfer' section in the config")
    t = cfg.transfer
    if cfg.system.name != "crane":
        from .config import ConfigError
        raise ConfigError("transfer is defined for the crane system")
    ae, _ = load_checkpoint(checkpoint or out_dir / "checkpoint.json")
    sys_target = build_system(cfg.system, params=t.target_params)

    # nominal controller applied to the perturbed plant
    trace_before, ctrl_before = simulate_once(sys_target, ae, c)
    export_trace_csv(trace_before, out_dir / "trace_before.csv")
    metrics_before = closed_loop_metrics(trace_before, c)
    log.info("nominal controller on target plant: rms e=%.4g, terminal err=%.4g",
             metrics_before["rms_tracking_error"],
             metrics_before["terminal_position_error"])

    ds = record_experiments(sys_target, ae, c, t)
    save_dataset(ds, out_dir / "transfer_data.csv")
    opts = TrainOptions(epochs=t.epochs, batch_size=t.batch_size, lr=t.lr,
                        seed=t.seed, split=cfg.training.options.split)
    adapted, history = transfer_finetune(ae, ds, cfg.training.weights, opts)
    save_checkpoint(adapted, out_dir / "checkpoint_adapted.json",
                    loss_weights=cfg.training.weights,
                    training_meta={"fine_tune_epochs": len(history),
                                   "n_experiments": t.n_experiments,
                                   "seed": t.seed})
    export_loss_history(history, out_dir / "transfer_loss_history.csv")

    trace_after, ctrl_after = simulate_once(sys_target, adapted, c)
    export_trace_csv(trace_after, out_dir / "trace_after.csv")
    metrics_after = closed_loop_metrics(trace_after, c)
    log.info("adapted controller on target plant: rms e=%.4g, terminal err=%.4g",
             metrics_after["rms_tracking_error"],
             metrics_after["terminal_position_error"])

    x_ref = ae.decode_state(trace_before.z_d)
    line_plot(out_dir / "transfer_comparison.svg",
              [("nominal ctrl on target", trace_before.x[:, 0]),
               ("adapted ctrl on target", trace_after.x[:, 0]),
               ("desired", x_ref[:, 0])],
              title="cart position before/after transfer adaptation", xlabel="k")
    _trace_plots(out_dir, "trace_after", trace_after, adapted, c)

    ratio = (metrics_after["rms_tracking_error"]
             / max(metrics_before["rms_tracking_error"], 1e-300))
    return write_report(out_dir, "transfer", cfg, t0, {
        "seed": t.seed,
        "n_experiments": t.n_experiments,
        "fine_tune_epochs": len(history),
        "before": metrics_before,
        "after": metrics_after,
        "rms_error_ratio": ratio,
        "adapted_checkpoint": str(out_dir / "checkpoint_adapted.json")})


# ---------------------------------------------------------------------------
# analysis helper


def decays_in_envelope(values, window: int, rtol: float = 0.05) -> bool:
    """True if the windowed peak magnitude is non-increasing (within rtol)."""
    values = np.abs(np.asarray(values, dtype=float))
    peaks = [values[i:i + window].max() for i in range(0, values.size, window)]
    floor = rtol * (peaks[0] if peaks[0] > 0 else 1.0)
    return all(peaks[i + 1] <= peaks[i] + floor for i in range(len(peaks) - 1))
