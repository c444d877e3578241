"""Data-driven feedback linearization in discrete-time Brunovsky form.

A four-network auto-encoder learns state and input transformations from
recorded plant data so that the transformed dynamics become a shift
register; trajectories are then planned and stabilized with linear
companion-form control, and the learned transformations can be adapted to
a parameter-perturbed plant from new recordings.
"""

from .autoencoder import (AutoEncoder, LossReport, LossWeights, TrainOptions,
                          init_autoencoder, load_checkpoint, loss_batch,
                          predict_rollout, save_checkpoint, train,
                          transfer_finetune)
from .brunovsky import equilibrium_projection, shift, shift_matrices
from .control import (ClosedLoopController, ControllerGains, IdentityTransforms,
                      LinearTransforms, control_step, pole_placement,
                      run_closed_loop)
from .datasets import (Dataset, ExcitationPolicy, Normalization, generate_dataset,
                       load_dataset, normalize, save_dataset, split)
from .nets import AdamState, Gradients, Network, adam_step, backward, forward, init_network
from .planning import TrajectoryPlan, plan_trajectory
from .systems import (SIGMA_N, SIGMA_T, CraneModel, CraneParams, DiscreteSystem,
                      academic_step, academic_system, build_crane_matrices,
                      crane_model, simulate, zoh_discretize)

__version__ = "0.1.0"
