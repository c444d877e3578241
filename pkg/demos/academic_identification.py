"""Identify the 3-state nonlinear benchmark system from random recordings.

Walks the core capability end to end at demo scale:

1. record excitation data from the plant,
2. train the four-network auto-encoder so the dynamics become a shift
   register in the learned coordinates,
3. compare a multi-step open-loop rollout of the identified model against
   a held-out recording, and check the reconstruction quality of both
   transformations.

Writes plots and CSVs to runs/demo-academic/.  Takes about a minute; bump
EPOCHS / N_TRAJ toward the shipped `configs/academic.json` preset for
paper-scale accuracy.
"""
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from canonctl import (LossWeights, TrainOptions, academic_system,
                      generate_dataset, init_autoencoder, normalize,
                      predict_rollout, train)
from canonctl.autoencoder import export_loss_history
from canonctl.datasets import ExcitationPolicy, split
from canonctl.svgplot import line_plot

OUT = pathlib.Path("runs/demo-academic")
N_TRAJ, TRAJ_LEN, EPOCHS = 40, 50, 600

print("1) recording", N_TRAJ * TRAJ_LEN, "samples from the academic system")
plant = academic_system()
policy = ExcitationPolicy(mode="random_input", seed=11, input_amplitude=0.5,
                          init_low=(-0.3, -0.3, -0.3), init_high=(0.3, 0.3, 0.3))
data = generate_dataset(plant, policy, N_TRAJ, TRAJ_LEN,
                        safety_low=[-3] * 3, safety_high=[3] * 3)
data_n = normalize(data)

print(f"2) training the auto-encoder ({EPOCHS} epochs, hidden width 80)")
ae = init_autoencoder(n=3, n_l=80, seed=1, norm=data_n.norm)
ae, history = train(ae, data_n, LossWeights(),
                    TrainOptions(epochs=EPOCHS, batch_size=256, seed=7))
print(f"   validation loss {history[0].val_total:.3e} -> {history[-1].val_total:.3e}")
export_loss_history(history, OUT / "loss_history.csv")
line_plot(OUT / "loss_history.svg",
          [("train total", [h.total for h in history]),
           ("validation", [h.val_total for h in history])],
          title="composite training loss", xlabel="epoch")

print("3) rolling the identified model along a held-out trajectory")
_, held_out = split(data, 0.9, seed=7)
tid = int(held_out.trajectory_ids[0])
states, inputs = held_out.trajectory(tid)
prediction = predict_rollout(ae, states[0], inputs)
rmse = float(np.sqrt(np.mean((prediction - states) ** 2)))
print(f"   {len(inputs)}-step rollout RMSE: {rmse:.4f} "
      f"(state std ~ {np.sqrt(np.mean(data.norm.x_scale ** 2)):.3f})")
series = []
for i in range(3):
    series.append((f"x{i+1} recorded", states[:, i]))
    series.append((f"x{i+1} model", prediction[:, i]))
line_plot(OUT / "rollout.svg", series,
          title=f"identified model vs held-out trajectory {tid}", xlabel="k")

print("4) reconstruction errors through both transformation pairs")
x_rec = ae.decode_state(ae.encode_state(held_out.X))
u_rec = ae.decode_input(held_out.X, ae.encode_input(held_out.X, held_out.U))
line_plot(OUT / "reconstruction.svg",
          [(f"x{i+1} error", (x_rec - held_out.X)[:, i]) for i in range(3)]
          + [("u error", u_rec - held_out.U)],
          title="auto-encoder reconstruction errors (held-out samples)",
          xlabel="sample")
print(f"   state: {np.sqrt(np.mean((x_rec - held_out.X) ** 2)):.2e} rms, "
      f"input: {np.sqrt(np.mean((u_rec - held_out.U) ** 2)):.2e} rms")
print("done ->", OUT)
