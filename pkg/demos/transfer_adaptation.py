"""Transfer a trained crane controller to a parameter-perturbed crane.

1. train a nominal controller (as in crane_tracking.py),
2. apply it unchanged to the perturbed crane and record the degradation,
3. collect closed-loop experiments on the perturbed crane, fine-tune the
   transformation networks on them,
4. re-run the maneuver and compare cart trajectories before/after.

Demo scale; `configs/crane-transfer.json` is the full-size counterpart.
"""
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from canonctl import (SIGMA_N, SIGMA_T, LossWeights, TrainOptions, crane_model,
                      generate_dataset, init_autoencoder, normalize, train,
                      transfer_finetune)
from canonctl.config import ControlConfig, TransferConfig
from canonctl.datasets import ExcitationPolicy
from canonctl.pipeline import record_experiments, simulate_once
from canonctl.svgplot import line_plot

OUT = pathlib.Path("runs/demo-transfer")
N_TRAJ, TRAJ_LEN, EPOCHS = 60, 400, 1200

print("1) training the nominal controller")
nominal = crane_model(SIGMA_N, T_a=0.005)
target = crane_model(SIGMA_T, T_a=0.005)
policy = ExcitationPolicy(mode="mixed", seed=21, kp=20.0, kd=5.0,
                          setpoint_low=0.0, setpoint_high=1.0,
                          setpoint_hold=150, noise_amplitude=4.0,
                          init_low=(-0.02, -0.005, -0.3, -0.02),
                          init_high=(0.02, 0.005, 0.3, 0.02))
data = normalize(generate_dataset(nominal.system(), policy, N_TRAJ, TRAJ_LEN))
ae = init_autoencoder(n=4, n_l=120, seed=1, norm=data.norm)
ae, _ = train(ae, data, LossWeights(),
              TrainOptions(epochs=EPOCHS, batch_size=128, seed=7, lr=2e-3))

maneuver = ControlConfig(poles=[0.98] * 4, horizon=400,
                         start_state=np.zeros(4),
                         goal_state=np.array([1.0, 0, 0, 0]),
                         initial_offset=0.1, extra_steps=100)

print("2) nominal controller applied to the perturbed crane")
trace_before, _ = simulate_once(target.system(), ae, maneuver)
e_before = trace_before.rms_tracking_error()
print(f"   rms canonical tracking error: {e_before:.4e}, "
      f"cart at k=400: {trace_before.x[400, 0]:.4f} m")

print("3) recording experiments on the perturbed crane and fine-tuning")
tcfg = TransferConfig(target_params=SIGMA_T, n_experiments=20, seed=2,
                      epochs=150)
recordings = record_experiments(target.system(), ae, maneuver, tcfg)
adapted, _ = transfer_finetune(ae, recordings, LossWeights(),
                               TrainOptions(epochs=tcfg.epochs, seed=2,
                                            batch_size=256, lr=tcfg.lr))

print("4) adapted controller on the perturbed crane")
trace_after, _ = simulate_once(target.system(), adapted, maneuver)
e_after = trace_after.rms_tracking_error()
print(f"   rms canonical tracking error: {e_after:.4e} "
      f"({e_after / e_before:.2f} of the unadapted value), "
      f"cart at k=400: {trace_after.x[400, 0]:.4f} m")

x_ref = ae.decode_state(trace_before.z_d)
line_plot(OUT / "comparison.svg",
          [("nominal ctrl on perturbed crane", trace_before.x[:, 0]),
           ("adapted ctrl", trace_after.x[:, 0]),
           ("desired", x_ref[:, 0])],
          title="cart position before/after transfer adaptation",
          xlabel="k", ylabel="m")
print("done ->", OUT)
