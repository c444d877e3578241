"""Four-network auto-encoder that learns feedback-linearizing transformations.

Two encoders map plant state and input into coordinates where the dynamics
are the Brunovsky shift register; two decoders map back:

    state encoder   phi_x     : R^n      -> R^n
    state decoder   phi_x_inv : R^n      -> R^n
    input encoder   phi_u     : R^(n+1)  -> R   (consumes (x, u))
    input decoder   phi_u_inv : R^(n+1)  -> R   (consumes (x, v))

Training minimizes a weighted sum of two reconstruction losses and two
one-step prediction losses through the shift; gradients are exact analytic
derivatives through every composition, including both evaluation points of
the state encoder in the consistency term.

Networks operate on normalized data; the public encode/decode API applies
the stored normalization so callers work in physical units throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nets
from .brunovsky import shift
from .csvio import write_csv
from .datasets import Dataset, Normalization, normalize, split
from .nets import AdamState, Gradients, Network, adam_step, backward, forward


class LossError(FloatingPointError):
    """A loss term went non-finite; the message names the term."""


class TrainingDiverged(RuntimeError):
    """Total loss exceeded the divergence guard or went non-finite."""


class RolloutError(RuntimeError):
    """Model rollout produced a non-finite state; message carries the index."""


NET_NAMES = ("phi_x", "phi_x_inv", "phi_u", "phi_u_inv")


@dataclass
class AutoEncoder:
    """The four transformation networks plus dimensions and normalization."""

    phi_x: Network
    phi_x_inv: Network
    phi_u: Network
    phi_u_inv: Network
    n: int
    n_l: int
    norm: Normalization

    def networks(self):
        return [(name, getattr(self, name)) for name in NET_NAMES]

    def copy(self) -> "AutoEncoder":
        return AutoEncoder(self.phi_x.copy(), self.phi_x_inv.copy(),
                           self.phi_u.copy(), self.phi_u_inv.copy(),
                           self.n, self.n_l, self.norm)

    def validate(self) -> None:
        expect = {"phi_x": (self.n, self.n), "phi_x_inv": (self.n, self.n),
                  "phi_u": (self.n + 1, 1), "phi_u_inv": (self.n + 1, 1)}
        for name, net in self.networks():
            net.validate()
            if (net.in_dim, net.out_dim) != expect[name]:
                raise ValueError(f"{name} wiring {net.in_dim}->{net.out_dim} "
                                 f"does not match n={self.n}")

    # -- physical-unit transformation API ---------------------------------

    def encode_state(self, x):
        """z = phi_x(x); accepts (n,) or (B, n) in physical units."""
        z, _ = forward(self.phi_x, self.norm.normalize_x(x))
        return z

    def decode_state(self, z):
        """x = phi_x_inv(z) mapped back to physical units."""
        xh, _ = forward(self.phi_x_inv, z)
        return self.norm.denormalize_x(xh)

    def encode_input(self, x, u):
        """v = phi_u(x, u); scalar for a single sample, (B,) for batches."""
        xn = self.norm.normalize_x(x)
        un = self.norm.normalize_u(u)
        if xn.ndim == 1:
            v, _ = forward(self.phi_u, np.concatenate([xn, [float(un)]]))
            return float(v[0])
        v, _ = forward(self.phi_u, np.column_stack([xn, un]))
        return v[:, 0]

    def decode_input(self, x, v):
        """u = phi_u_inv(x, v) mapped back to physical input units."""
        xn = self.norm.normalize_x(x)
        if xn.ndim == 1:
            uh, _ = forward(self.phi_u_inv, np.concatenate([xn, [float(v)]]))
            return float(self.norm.denormalize_u(uh[0]))
        uh, _ = forward(self.phi_u_inv, np.column_stack([xn, np.asarray(v, dtype=float)]))
        return self.norm.denormalize_u(uh[:, 0])


def init_autoencoder(n: int, n_l: int, seed: int, activation: str = "sigmoid",
                     norm: Normalization | None = None) -> AutoEncoder:
    """Fresh auto-encoder with seeded Xavier initialization per network."""
    if norm is None:
        norm = Normalization.identity(n)
    seeds = np.random.SeedSequence(seed).spawn(4)
    ae = AutoEncoder(
        phi_x=nets.init_network(n, n_l, n, seeds[0], activation),
        phi_x_inv=nets.init_network(n, n_l, n, seeds[1], activation),
        phi_u=nets.init_network(n + 1, n_l, 1, seeds[2], activation),
        phi_u_inv=nets.init_network(n + 1, n_l, 1, seeds[3], activation),
        n=n, n_l=n_l, norm=norm)
    ae.validate()
    return ae


# ---------------------------------------------------------------------------
# Composite loss


@dataclass(frozen=True)
class LossWeights:
    """Weights of the reconstruction and prediction penalty terms."""

    alpha1: float = 1.0  # state reconstruction
    alpha2: float = 1.0  # input reconstruction
    alpha3: float = 1.0  # one-step prediction pair

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ValueError("loss weights must be nonnegative")
        if max(self.alpha1, self.alpha2, self.alpha3) <= 0:
            raise ValueError("at least one loss weight must be positive")


@dataclass
class LossReport:
    """Per-term losses of one batch or epoch."""

    l_rec_x: float
    l_rec_u: float
    l_pred_1: float
    l_pred_2: float
    total: float
    epoch: int = 0
    val_total: float = float("nan")


def _check_finite(value: float, term: str) -> None:
    if not np.isfinite(value):
        raise LossError(f"loss term {term} is non-finite ({value})")


def loss_batch(ae: AutoEncoder, X, U, Xp, w: LossWeights, with_grads: bool = True):
    """Composite loss and exact parameter gradients on one normalized batch.

    Returns (LossReport, {net name: Gradients} or None).  The four terms:

        l_rec_x  = MSE(x,  phi_x_inv(phi_x(x)))
        l_rec_u  = MSE(u,  phi_u_inv(x, phi_u(x, u)))
        l_pred_1 = MSE(x+, phi_x_inv(shift(phi_x(x), phi_u(x, u))))
        l_pred_2 = MSE(phi_x(x+), shift(phi_x(x), phi_u(x, u)))
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xp = np.atleast_2d(np.asarray(Xp, dtype=float))
    U = np.asarray(U, dtype=float).reshape(-1, 1)
    B, n = X.shape
    if B == 0:
        raise ValueError("empty batch")
    if Xp.shape != (B, n) or U.shape[0] != B or n != ae.n:
        raise ValueError(f"batch shapes X{X.shape} U{U.shape} Xp{Xp.shape} "
                         f"inconsistent with n={ae.n}")

    # one stacked pass through each network: rows [0:B] belong to the
    # current states, rows [B:2B] to the successors / prediction path
    zz, c_x = forward(ae.phi_x, np.vstack([X, Xp]))
    z, z_plus = zz[:B], zz[B:]
    v, c_u = forward(ae.phi_u, np.hstack([X, U]))
    u_rec, c_ui = forward(ae.phi_u_inv, np.hstack([X, v]))
    z_next = shift(z, v[:, 0])
    xx, c_xi = forward(ae.phi_x_inv, np.vstack([z, z_next]))
    x_rec, x_pred = xx[:B], xx[B:]
    r2 = z_plus - z_next

    l_rec_x = float(np.mean((x_rec - X) ** 2))
    l_rec_u = float(np.mean((u_rec - U) ** 2))
    l_pred_1 = float(np.mean((x_pred - Xp) ** 2))
    l_pred_2 = float(np.mean(r2 ** 2))
    for name, val in [("l_rec_x", l_rec_x), ("l_rec_u", l_rec_u),
                      ("l_pred_1", l_pred_1), ("l_pred_2", l_pred_2)]:
        _check_finite(val, name)
    total = (w.alpha1 * l_rec_x + w.alpha2 * l_rec_u
             + w.alpha3 * (l_pred_1 + l_pred_2))
    report = LossReport(l_rec_x, l_rec_u, l_pred_1, l_pred_2, total)
    if not with_grads:
        return report, None

    # decoder: reconstruction cotangent on the first block, decoded
    # prediction on the second
    d_x_rec = (2.0 * w.alpha1 / (B * n)) * (x_rec - X)
    d_x_pred = (2.0 * w.alpha3 / (B * n)) * (x_pred - Xp)
    g_xi, d_zz = backward(ae.phi_x_inv, c_xi, np.vstack([d_x_rec, d_x_pred]))
    d_z_rec, d_znext = d_zz[:B], d_zz[B:]

    d_u_rec = (2.0 * w.alpha2 / B) * (u_rec - U)
    g_ui, d_xv = backward(ae.phi_u_inv, c_ui, d_u_rec)

    # latent consistency hits phi_x at x+ (via z_plus) and the shift output
    d_r2 = (2.0 * w.alpha3 / (B * n)) * r2
    d_znext = d_znext - d_r2

    # pull the shift apart: slot i of z_next is z[i+1], last slot is v
    d_z = d_z_rec.copy()
    d_z[:, 1:] += d_znext[:, :n - 1]
    d_v = d_xv[:, n:] + d_znext[:, n - 1:]

    g_x, _ = backward(ae.phi_x, c_x, np.vstack([d_z, d_r2]))
    g_u, _ = backward(ae.phi_u, c_u, d_v)

    grads = {"phi_x": g_x, "phi_x_inv": g_xi, "phi_u": g_u, "phi_u_inv": g_ui}
    return report, grads


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainOptions:
    """Minibatch Adam settings; everything is seeded and deterministic."""

    epochs: int
    batch_size: int = 256
    lr: float | None = None          # None: 1e-3 for train, 1e-4 for fine-tune
    seed: int = 0
    split: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay: float = 1.0            # multiply lr by this factor ...
    lr_decay_every: int = 0          # ... every this many epochs (0: never)
    plateau_patience: int = 0        # stop after this many epochs without
    plateau_rtol: float = 1e-3       # relative validation improvement (0: off)
    divergence_limit: float = 1e6

    def resolve_lr(self, default: float) -> float:
        return default if self.lr is None else self.lr


def _epoch_lr(base: float, epoch: int, opts: TrainOptions) -> float:
    if opts.lr_decay_every <= 0 or opts.lr_decay == 1.0:
        return base
    return base * opts.lr_decay ** (epoch // opts.lr_decay_every)


def train(ae: AutoEncoder, dataset: Dataset, w: LossWeights, opts: TrainOptions,
          base_lr: float = 1e-3):
    """Minibatch Adam over the composite loss.

    The dataset must be normalized; it is split into train/validation by
    whole trajectories using opts.split and opts.seed.  Returns a trained
    copy of the auto-encoder and the per-epoch loss history (train terms
    plus validation total).  The input auto-encoder is not mutated.
    """
    if not dataset.normalized:
        raise ValueError("train requires a normalized dataset")
    if opts.epochs == 0:
        return ae, []
    train_ds, val_ds = split(dataset, opts.split, opts.seed)
    Xtr, Utr, Xptr = train_ds.X, train_ds.U, train_ds.Xp
    n_train = len(train_ds)
    lr0 = opts.resolve_lr(base_lr)

    work = ae.copy()
    states = {name: AdamState.for_network(net, lr=lr0, beta1=opts.beta1,
                                          beta2=opts.beta2, eps=opts.eps)
              for name, net in work.networks()}
    rng = np.random.default_rng([opts.seed, 0xA11CE])
    history: list[LossReport] = []
    best_val, best_epoch = np.inf, 0

    for epoch in range(1, opts.epochs + 1):
        lr = _epoch_lr(lr0, epoch - 1, opts)
        for state in states.values():
            state.lr = lr
        perm = rng.permutation(n_train)
        term_sums = np.zeros(4)
        for start in range(0, n_train, opts.batch_size):
            idx = perm[start:start + opts.batch_size]
            report, grads = loss_batch(work, Xtr[idx], Utr[idx], Xptr[idx], w)
            if not np.isfinite(report.total) or report.total > opts.divergence_limit:
                raise TrainingDiverged(
                    f"total loss {report.total:.3e} at epoch {epoch} "
                    f"(limit {opts.divergence_limit:.1e})")
            for name in NET_NAMES:
                new_net, states[name] = adam_step(getattr(work, name),
                                                  grads[name], states[name])
                setattr(work, name, new_net)
            term_sums += idx.size * np.array([report.l_rec_x, report.l_rec_u,
                                              report.l_pred_1, report.l_pred_2])
        terms = term_sums / n_train
        total = w.alpha1 * terms[0] + w.alpha2 * terms[1] + w.alpha3 * (terms[2] + terms[3])
        val_report, _ = loss_batch(work, val_ds.X, val_ds.U, val_ds.Xp, w,
                                   with_grads=False)
        history.append(LossReport(*terms, total, epoch=epoch,
                                  val_total=val_report.total))
        if not np.isfinite(val_report.total) or val_report.total > opts.divergence_limit:
            raise TrainingDiverged(f"validation loss {val_report.total:.3e} "
                                   f"at epoch {epoch}")
        if opts.plateau_patience > 0:
            if val_report.total < best_val * (1.0 - opts.plateau_rtol):
                best_val, best_epoch = val_report.total, epoch
            elif epoch - best_epoch >= opts.plateau_patience:
                break
    return work, history


def transfer_finetune(ae_nominal: AutoEncoder, new_dataset: Dataset,
                      w: LossWeights, opts: TrainOptions):
    """Warm-started retraining on data from a perturbed plant.

    The new recordings are expressed in the nominal model's normalization;
    all four networks stay trainable at a reduced default learning rate.
    Returns (adapted ae, history); the nominal auto-encoder is left intact.
    """
    if new_dataset.normalized:
        same = (np.array_equal(new_dataset.norm.x_mean, ae_nominal.norm.x_mean)
                and np.array_equal(new_dataset.norm.x_scale, ae_nominal.norm.x_scale)
                and new_dataset.norm.u_mean == ae_nominal.norm.u_mean
                and new_dataset.norm.u_scale == ae_nominal.norm.u_scale)
        if not same:
            raise ValueError("fine-tune dataset normalized with foreign constants")
    else:
        new_dataset = normalize(new_dataset, constants=ae_nominal.norm)
    if opts.epochs == 0:
        return ae_nominal.copy(), []
    return train(ae_nominal, new_dataset, w, opts, base_lr=1e-4)


# ---------------------------------------------------------------------------
# Identified-model rollout


def predict_rollout(ae: AutoEncoder, x0, inputs) -> np.ndarray:
    """Iterate the identified model x+ = phi_x_inv(shift(phi_x(x), phi_u(x, u))).

    Physical units in and out; returns (len(inputs)+1, n).
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1)
    x0 = np.asarray(x0, dtype=float)
    traj = np.empty((inputs.size + 1, ae.n))
    traj[0] = x0
    x = x0
    for k, u in enumerate(inputs):
        z = ae.encode_state(x)
        v = ae.encode_input(x, float(u))
        x = ae.decode_state(shift(z, v))
        if not np.all(np.isfinite(x)):
            raise RolloutError(f"non-finite predicted state at step {k + 1}")
        traj[k + 1] = x
    return traj


# ---------------------------------------------------------------------------
# Persistence

CHECKPOINT_FORMAT = "canonctl-autoencoder"
CHECKPOINT_VERSION = 1

LOSS_HISTORY_HEADER = ["epoch", "L_rec_x", "L_rec_u", "L_pred_1", "L_pred_2",
                       "total", "val_total"]


def save_checkpoint(ae: AutoEncoder, path, loss_weights: LossWeights | None = None,
                    training_meta: dict | None = None) -> None:
    """One JSON document holding the four networks plus model metadata."""
    ae.validate()
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "n": ae.n,
        "n_l": ae.n_l,
        "activation": ae.phi_x.activation,
        "normalization": ae.norm.to_dict(),
        "loss_weights": None if loss_weights is None else {
            "alpha1": loss_weights.alpha1, "alpha2": loss_weights.alpha2,
            "alpha3": loss_weights.alpha3},
        "training": training_meta or {},
        "networks": {name: nets.network_to_dict(net)
                     for name, net in ae.networks()},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path):
    """Load a checkpoint; returns (AutoEncoder, full document)."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an auto-encoder checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    ae = AutoEncoder(
        **{name: nets.network_from_dict(doc["networks"][name]) for name in NET_NAMES},
        n=int(doc["n"]), n_l=int(doc["n_l"]),
        norm=Normalization.from_dict(doc["normalization"]))
    ae.validate()
    return ae, doc


def export_loss_history(history, path) -> None:
    rows = ([r.epoch, r.l_rec_x, r.l_rec_u, r.l_pred_1, r.l_pred_2,
             r.total, r.val_total] for r in history)
    write_csv(path, LOSS_HISTORY_HEADER, rows)
