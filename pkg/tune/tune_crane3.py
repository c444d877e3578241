"""Crane tuning round 3: loss-weight balance and pole radius.

Mechanism under test: the input-reconstruction weight keeps a usable input
channel in v (moderate dv/du), while the prediction weight pulls toward the
exact-but-ill-conditioned canonical structure.
"""
import sys
import time

import numpy as np

sys.path.insert(0, "src")
from canonctl import *
from canonctl.datasets import ExcitationPolicy, generate_dataset, normalize
from canonctl.pipeline import build_controller, decays_in_envelope
from canonctl.config import ControlConfig


def diag_gains(ae, ds):
    """Measure dv/du of the input encoder and du/dv of the decoder on data."""
    idx = np.arange(0, len(ds.X), max(1, len(ds.X) // 200))
    X, U = ds.X[idx], ds.U[idx]
    h = 1e-4
    v_hi = ae.encode_input(ds.norm.denormalize_x(X), ds.norm.denormalize_u(U + h))
    v_lo = ae.encode_input(ds.norm.denormalize_x(X), ds.norm.denormalize_u(U - h))
    beta = np.mean(np.abs(v_hi - v_lo)) / (2 * h)   # dv/du-normalized
    v = ae.encode_input(ds.norm.denormalize_x(X), ds.norm.denormalize_u(U))
    u_hi = ae.decode_input(ds.norm.denormalize_x(X), v + h)
    u_lo = ae.decode_input(ds.norm.denormalize_x(X), v - h)
    vgain = np.mean(np.abs(ds.norm.normalize_u(u_hi) - ds.norm.normalize_u(u_lo))) / (2 * h)
    return float(beta), float(vgain)


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
        return {"fail": str(exc)[:60]}
    return {"term": round(abs(trace.x[400, 0] - 1.0), 4),
            "final": round(abs(trace.x[-1, 0] - 1.0), 4),
            "max_u": round(float(np.abs(trace.u).max()), 1)}


def run_variant(tag, kp, kd, noise, a2, a3, lr, epochs, stages=4, seed=21):
    cm = crane_model(SIGMA_N, 0.005)
    pol = ExcitationPolicy(mode="mixed", seed=seed, kp=kp, kd=kd,
                           setpoint_low=0.0, setpoint_high=1.0,
                           setpoint_hold=150, noise_amplitude=noise,
                           init_low=(-0.02, -0.005, -0.3, -0.02),
                           init_high=(0.02, 0.005, 0.3, 0.02))
    ds = generate_dataset(cm.system(), pol, 100, 400)
    dsn = normalize(ds)
    ae = init_autoencoder(4, 120, seed=1)
    ae.norm = dsn.norm
    w = LossWeights(1.0, a2, a3)
    t0 = time.time()
    stage = max(1, epochs // stages)
    for s in range(stages):
        opts = TrainOptions(epochs=stage, seed=7 + s, lr=lr * (0.5 ** s))
        ae, hist = train(ae, dsn, w, opts)
        h = hist[-1]
        beta, vgain = diag_gains(ae, dsn)
        evs = {p: closed_loop_eval(ae, [p] * 4) for p in (0.98, 0.95)}
        print(f"[{tag}] s{s}: ru={h.l_rec_u:.2e} rx={h.l_rec_x:.2e} "
              f"p1={h.l_pred_1:.2e} p2={h.l_pred_2:.2e} beta={beta:.2e} "
              f"vg={vgain:.1f} |98 {evs[0.98]} |95 {evs[0.95]} "
              f"({time.time()-t0:.0f}s)", flush=True)
    return ae


if __name__ == "__main__":
    variants = [
        ("a2x1",   20., 5., 4.0, 1.0, 1.0, 1e-3, 2000),
        ("a2x3",   20., 5., 4.0, 3.0, 1.0, 1e-3, 2000),
        ("a3x0.3", 20., 5., 4.0, 1.0, 0.3, 1e-3, 2000),
        ("hot",    40., 10., 8.0, 3.0, 1.0, 1e-3, 2000),
    ]
    for v in variants:
        print(f"=== {v[0]} ===", flush=True)
        try:
            run_variant(*v)
        except Exception as exc:
            print(f"[{v[0]}] FAILED: {type(exc).__name__}: {exc}", flush=True)
