"""Plan and track a 1-meter crane maneuver with a learned controller.

Demonstrates the full control stack on the elastic stacker-crane model:

1. record PD-excited trajectories from the nominal crane,
2. train the transformation auto-encoder,
3. plan a rest-to-rest reference (0 m -> 1 m over 400 samples at 5 ms) in
   the learned canonical coordinates,
4. close the loop with companion-form pole placement from an initial
   positioning error and export the traces.

Demo-scale training keeps this in the minutes range; the acceptance suite
and `configs/crane-nominal.json` run the same recipe larger.
"""
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from canonctl import (SIGMA_N, LossWeights, TrainOptions, crane_model,
                      generate_dataset, init_autoencoder, normalize,
                      run_closed_loop, train)
from canonctl.config import ControlConfig
from canonctl.control import export_trace_csv
from canonctl.datasets import ExcitationPolicy
from canonctl.pipeline import build_controller, closed_loop_metrics
from canonctl.svgplot import line_plot

OUT = pathlib.Path("runs/demo-crane")
N_TRAJ, TRAJ_LEN, EPOCHS = 60, 400, 1200

print("1) recording PD-excited crane data")
crane = crane_model(SIGMA_N, T_a=0.005)
policy = ExcitationPolicy(mode="mixed", seed=21, kp=20.0, kd=5.0,
                          setpoint_low=0.0, setpoint_high=1.0,
                          setpoint_hold=150, noise_amplitude=4.0,
                          init_low=(-0.02, -0.005, -0.3, -0.02),
                          init_high=(0.02, 0.005, 0.3, 0.02))
data = normalize(generate_dataset(crane.system(), policy, N_TRAJ, TRAJ_LEN))
print(f"   {len(data)} samples, forces within "
      f"[{data.norm.denormalize_u(data.u_min):.1f}, "
      f"{data.norm.denormalize_u(data.u_max):.1f}] N")

print(f"2) training the auto-encoder ({EPOCHS} epochs, hidden width 120)")
ae = init_autoencoder(n=4, n_l=120, seed=1, norm=data.norm)
ae, history = train(ae, data, LossWeights(),
                    TrainOptions(epochs=EPOCHS, batch_size=128, seed=7, lr=2e-3))
print(f"   validation loss {history[0].val_total:.3e} -> {history[-1].val_total:.3e}")

print("3) planning 0 m -> 1 m in 400 samples and closing the loop")
maneuver = ControlConfig(poles=[0.98] * 4, horizon=400,
                         start_state=np.zeros(4),
                         goal_state=np.array([1.0, 0, 0, 0]),
                         initial_offset=0.1, extra_steps=100)
ctrl = build_controller(ae, maneuver)
x0 = maneuver.start_state.copy()
x0[0] += maneuver.initial_offset          # 0.1 m initial positioning error
trace = run_closed_loop(crane.system(), ctrl, x0, 500)

metrics = closed_loop_metrics(trace, maneuver)
print(f"   cart at k=400: {metrics['terminal_position']:.4f} m "
      f"(error {metrics['terminal_position_error']:.4f} m), "
      f"max force {np.abs(trace.u).max():.1f} N")

export_trace_csv(trace, OUT / "trace.csv")
x_ref = ae.decode_state(trace.z_d)
line_plot(OUT / "position.svg",
          [("cart position", trace.x[:, 0]), ("desired", x_ref[:, 0])],
          title="closed-loop cart position vs reference", xlabel="k",
          ylabel="m")
line_plot(OUT / "input.svg", [("force", trace.u)],
          title="commanded force", xlabel="k", ylabel="N")
line_plot(OUT / "error.svg",
          [(f"e{i+1}", trace.e[:, i]) for i in range(4)],
          title="canonical tracking error", xlabel="k")
print("done ->", OUT)
