"""Crane desk-scale tuning: grid over excitation/lr/loss weights.

Trains each variant for a few hundred epochs, then evaluates the actual
closed-loop maneuver (0 -> 1 m, N=400, 0.1 m offset) with poles 0.85.
Writes progress to stdout (run redirected to a log file).
"""
import itertools
import sys
import time

import numpy as np

sys.path.insert(0, "src")
from canonctl import *
from canonctl.datasets import ExcitationPolicy, generate_dataset, normalize
from canonctl.pipeline import build_controller, decays_in_envelope
from canonctl.config import ControlConfig


def closed_loop_eval(ae, poles=(0.85, 0.85, 0.85, 0.85)):
    cm = crane_model(SIGMA_N, 0.005)
    c = ControlConfig(poles=list(poles), horizon=400,
                      start_state=np.zeros(4), goal_state=np.array([1.0, 0, 0, 0]),
                      initial_offset=0.1, extra_steps=100)
    try:
        ctrl = build_controller(ae, c)
        x0 = c.start_state.copy(); x0[0] += 0.1
        trace = run_closed_loop(cm.system(), ctrl, x0, 500)
    except Exception as exc:
        return {"fail": str(exc)[:100]}
    term = abs(trace.x[400, 0] - 1.0)
    # tracking error of the cart against the decoded reference
    x_ref = ae.decode_state(trace.z_d)
    pos_err = trace.x[:500, 0] - x_ref[:, 0]
    return {"terminal": term, "rms_e": trace.rms_tracking_error(),
            "max_pos_err_after_100": float(np.abs(pos_err[100:]).max()),
            "env_decay": decays_in_envelope(pos_err, 50),
            "u_range": (float(trace.u.min()), float(trace.u.max()))}


def run_variant(tag, kp, kd, hold, noise, lr, a3, epochs, seed=21):
    cm = crane_model(SIGMA_N, 0.005)
    pol = ExcitationPolicy(mode="mixed", seed=seed, kp=kp, kd=kd,
                           setpoint_low=0.0, setpoint_high=1.0,
                           setpoint_hold=hold, noise_amplitude=noise,
                           init_low=(-0.02, -0.005, -0.3, -0.02),
                           init_high=(0.02, 0.005, 0.3, 0.02))
    ds = generate_dataset(cm.system(), pol, 100, 400)
    dsn = normalize(ds)
    ae = init_autoencoder(4, 120, seed=1)
    ae.norm = dsn.norm
    w = LossWeights(1.0, 1.0, a3)
    t0 = time.time()
    stage = max(1, epochs // 4)
    hist_all = []
    for s in range(4):
        opts = TrainOptions(epochs=stage, seed=7 + s, lr=lr * (0.5 ** s))
        ae, hist = train(ae, dsn, w, opts)
        hist_all += hist
        ev = closed_loop_eval(ae)
        print(f"[{tag}] stage {s}: val={hist[-1].val_total:.3e} "
              f"pred2={hist[-1].l_pred_2:.3e} eval={ev} "
              f"({time.time()-t0:.0f}s)", flush=True)
    return ae, hist_all


if __name__ == "__main__":
    variants = [
        # tag,            kp,  kd, hold, noise, lr,    a3, epochs
        ("base",          20., 5.,   0,  4.0, 1e-3,  1.0, 400),
        ("fast-pd",       40., 10., 150, 4.0, 1e-3,  1.0, 400),
        ("fast-pd-a3",    40., 10., 150, 4.0, 1e-3, 10.0, 400),
        ("fast-pd-lr3",   40., 10., 150, 4.0, 3e-3,  1.0, 400),
    ]
    for v in variants:
        print(f"=== variant {v[0]} ===", flush=True)
        try:
            run_variant(*v)
        except Exception as exc:
            print(f"[{v[0]}] FAILED: {exc}", flush=True)
