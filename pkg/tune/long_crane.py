"""Long-haul crane training with stage checkpoints for offline analysis."""
import sys
import time

import numpy as np

sys.path.insert(0, "src")
from canonctl import *
from canonctl.autoencoder import save_checkpoint
from canonctl.datasets import ExcitationPolicy, generate_dataset, normalize
from canonctl.pipeline import build_controller, decays_in_envelope
from canonctl.config import ControlConfig


def closed_loop_eval(ae, poles, offset=0.1):
    cm = crane_model(SIGMA_N, 0.005)
    c = ControlConfig(poles=list(poles), horizon=400,
                      start_state=np.zeros(4), goal_state=np.array([1.0, 0, 0, 0]),
                      initial_offset=offset, extra_steps=100)
    try:
        ctrl = build_controller(ae, c)
        x0 = c.start_state.copy(); x0[0] += offset
        trace = run_closed_loop(cm.system(), ctrl, x0, 500)
    except Exception as exc:
        return {"fail": str(exc)[:60]}
    return {"term": round(abs(trace.x[400, 0] - 1.0), 4),
            "final": round(abs(trace.x[-1, 0] - 1.0), 4),
            "max_u": round(float(np.abs(trace.u).max()), 1)}


def diag_beta(ae, dsn):
    idx = np.arange(0, len(dsn.X), max(1, len(dsn.X) // 200))
    X, U = dsn.X[idx], dsn.U[idx]
    h = 1e-4
    Xp_phys = dsn.norm.denormalize_x(X)
    v_hi = ae.encode_input(Xp_phys, dsn.norm.denormalize_u(U + h))
    v_lo = ae.encode_input(Xp_phys, dsn.norm.denormalize_u(U - h))
    return float(np.mean(np.abs(v_hi - v_lo)) / (2 * h))


def main(epochs_total=6000, stage=500, batch=128, lr0=2e-3):
    cm = crane_model(SIGMA_N, 0.005)
    pol = ExcitationPolicy(mode="mixed", seed=21, kp=20.0, kd=5.0,
                           setpoint_low=0.0, setpoint_high=1.0,
                           setpoint_hold=150, noise_amplitude=4.0,
                           init_low=(-0.02, -0.005, -0.3, -0.02),
                           init_high=(0.02, 0.005, 0.3, 0.02))
    ds = generate_dataset(cm.system(), pol, 100, 400)
    dsn = normalize(ds)
    ae = init_autoencoder(4, 120, seed=1)
    ae.norm = dsn.norm
    w = LossWeights()
    t0 = time.time()
    n_stages = epochs_total // stage
    for s in range(n_stages):
        # gentle decay late: full lr for half the run, then halve twice
        lr = lr0 * (0.5 ** max(0, (s - n_stages // 2) // (n_stages // 4 or 1) + 1)) \
            if s >= n_stages // 2 else lr0
        opts = TrainOptions(epochs=stage, batch_size=batch, seed=100 + s, lr=lr)
        ae, hist = train(ae, dsn, w, opts)
        h = hist[-1]
        beta = diag_beta(ae, dsn)
        ratio = np.sqrt(h.l_pred_2) / max(beta, 1e-12)
        evs = {p: closed_loop_eval(ae, [p] * 4) for p in (0.98, 0.99)}
        print(f"s{s:02d} ep{(s+1)*stage} lr={lr:.1e}: rx={h.l_rec_x:.2e} "
              f"ru={h.l_rec_u:.2e} p1={h.l_pred_1:.2e} p2={h.l_pred_2:.2e} "
              f"beta={beta:.2e} noise/chan={ratio:.2f} "
              f"|98 {evs[0.98]} |99 {evs[0.99]} ({time.time()-t0:.0f}s)",
              flush=True)
        save_checkpoint(ae, f"tune/ckpt_s{s:02d}.json")
    return ae


if __name__ == "__main__":
    main()
