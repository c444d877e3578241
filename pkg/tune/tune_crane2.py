"""Crane tuning round 2: slow poles, longer training, lr decay."""
import sys
import time

import numpy as np

sys.path.insert(0, "src")
from canonctl import *
from canonctl.datasets import ExcitationPolicy, generate_dataset, normalize
from canonctl.pipeline import build_controller, decays_in_envelope
from canonctl.config import ControlConfig


def closed_loop_eval(ae, poles):
    cm = crane_model(SIGMA_N, 0.005)
    c = ControlConfig(poles=list(poles), horizon=400,
                      start_state=np.zeros(4), goal_state=np.array([1.0, 0, 0, 0]),
                      initial_offset=0.1, extra_steps=100)
    try:
        ctrl = build_controller(ae, c)
        x0 = c.start_state.copy(); x0[0] += 0.1
        trace = run_closed_loop(cm.system(), ctrl, x0, 500)
    except Exception as exc:
        return {"fail": str(exc)[:80]}
    x_ref = ae.decode_state(trace.z_d)
    pos_err = trace.x[:500, 0] - x_ref[:, 0]
    return {"terminal": round(abs(trace.x[400, 0] - 1.0), 5),
            "max_u": round(float(np.abs(trace.u).max()), 1),
            "env": decays_in_envelope(pos_err, 50),
            "max_pos_err_tail": round(float(np.abs(pos_err[200:]).max()), 5)}


def run_variant(tag, kp, kd, hold, noise, lr, a3, epochs, stages=5, seed=21):
    cm = crane_model(SIGMA_N, 0.005)
    pol = ExcitationPolicy(mode="mixed", seed=seed, kp=kp, kd=kd,
                           setpoint_low=0.0, setpoint_high=1.0,
                           setpoint_hold=hold, noise_amplitude=noise,
                           init_low=(-0.02, -0.005, -0.3, -0.02),
                           init_high=(0.02, 0.005, 0.3, 0.02))
    ds = generate_dataset(cm.system(), pol, 100, 400)
    dsn = normalize(ds)
    print(f"[{tag}] u range {ds.u_min:.1f}..{ds.u_max:.1f}, x std {ds.X.std(axis=0)}",
          flush=True)
    ae = init_autoencoder(4, 120, seed=1)
    ae.norm = dsn.norm
    w = LossWeights(1.0, 1.0, a3)
    t0 = time.time()
    stage = max(1, epochs // stages)
    for s in range(stages):
        opts = TrainOptions(epochs=stage, seed=7 + s, lr=lr * (0.6 ** s))
        ae, hist = train(ae, dsn, w, opts)
        ev85 = closed_loop_eval(ae, [0.85] * 4)
        ev98 = closed_loop_eval(ae, [0.98] * 4)
        print(f"[{tag}] s{s}: val={hist[-1].val_total:.3e} "
              f"p2={hist[-1].l_pred_2:.3e} |p85 {ev85} |p98 {ev98} "
              f"({time.time()-t0:.0f}s)", flush=True)
    return ae


if __name__ == "__main__":
    variants = [
        ("pd20-a3x10",  20., 5.,  150, 4.0, 1e-3, 10.0, 1500),
        ("pd20-a3x1",   20., 5.,  150, 4.0, 1e-3,  1.0, 1500),
        ("pd40-a3x10",  40., 10., 150, 8.0, 1e-3, 10.0, 1500),
    ]
    for v in variants:
        print(f"=== {v[0]} ===", flush=True)
        try:
            run_variant(*v)
        except Exception as exc:
            print(f"[{v[0]}] FAILED: {type(exc).__name__}: {exc}", flush=True)
