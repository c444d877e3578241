"""Recorded-triple datasets: generation, normalization, splitting, persistence.

A dataset is the training substrate (x_k, u_k, x_{k+1}) harvested from
simulated experiments.  Trajectory structure is kept (trajectory id and step
index per sample) so that splits never leak adjacent samples of one
recording across partitions and chained samples stay bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, asdict, replace
from pathlib import Path

import numpy as np

from .csvio import CsvFormatError, read_csv, write_csv
from .systems import DiscreteSystem

log = logging.getLogger(__name__)

POLICY_MODES = ("random_input", "pd_setpoint", "pd_plus_noise", "mixed")


class GenerationError(RuntimeError):
    """Excitation produced too many unusable trajectories."""


class DatasetFormatError(ValueError):
    """Dataset file disagrees with its metadata sidecar."""


@dataclass(frozen=True)
class Normalization:
    """Per-channel affine map to zero mean, unit scale."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    u_mean: float
    u_scale: float

    def normalize_x(self, x):
        return (np.asarray(x, dtype=float) - self.x_mean) / self.x_scale

    def denormalize_x(self, x):
        return np.asarray(x, dtype=float) * self.x_scale + self.x_mean

    def normalize_u(self, u):
        return (np.asarray(u, dtype=float) - self.u_mean) / self.u_scale

    def denormalize_u(self, u):
        return np.asarray(u, dtype=float) * self.u_scale + self.u_mean

    def to_dict(self) -> dict:
        return {"x_mean": self.x_mean.tolist(), "x_scale": self.x_scale.tolist(),
                "u_mean": self.u_mean, "u_scale": self.u_scale}

    @classmethod
    def from_dict(cls, doc: dict) -> "Normalization":
        return cls(x_mean=np.array(doc["x_mean"], dtype=float),
                   x_scale=np.array(doc["x_scale"], dtype=float),
                   u_mean=float(doc["u_mean"]), u_scale=float(doc["u_scale"]))

    @classmethod
    def identity(cls, n: int) -> "Normalization":
        return cls(np.zeros(n), np.ones(n), 0.0, 1.0)


@dataclass(frozen=True)
class Sample:
    """One recorded transition of one trajectory."""

    x: np.ndarray
    u: float
    x_plus: np.ndarray
    trajectory_id: int
    k: int


@dataclass
class Dataset:
    """Columnar storage of recorded triples plus recording metadata."""

    X: np.ndarray          # (N, n) states
    U: np.ndarray          # (N,) inputs
    Xp: np.ndarray         # (N, n) successor states
    traj: np.ndarray       # (N,) trajectory ids
    k: np.ndarray          # (N,) step index within trajectory
    T_a: float
    x_min: np.ndarray
    x_max: np.ndarray
    u_min: float
    u_max: float
    norm: Normalization | None = None
    normalized: bool = False
    policy_fingerprint: str | None = None

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def trajectory_ids(self) -> np.ndarray:
        return np.unique(self.traj)

    def sample(self, i: int) -> Sample:
        return Sample(self.X[i].copy(), float(self.U[i]), self.Xp[i].copy(),
                      int(self.traj[i]), int(self.k[i]))

    def trajectory(self, traj_id: int):
        """Full state/input arrays of one recording: (states (K+1, n), inputs (K,))."""
        mask = self.traj == traj_id
        if not mask.any():
            raise KeyError(f"no trajectory with id {traj_id}")
        order = np.argsort(self.k[mask])
        X = self.X[mask][order]
        Xp = self.Xp[mask][order]
        U = self.U[mask][order]
        return np.vstack([X, Xp[-1:]]), U


def verify_chain(ds: Dataset) -> None:
    """Assert the chain invariant: x_plus of step k equals x of step k+1."""
    for tid in ds.trajectory_ids:
        mask = ds.traj == tid
        order = np.argsort(ds.k[mask])
        X = ds.X[mask][order]
        Xp = ds.Xp[mask][order]
        if X.shape[0] > 1 and not np.array_equal(Xp[:-1], X[1:]):
            raise AssertionError(f"chain broken within trajectory {tid}")


# ---------------------------------------------------------------------------
# Excitation


@dataclass(frozen=True)
class ExcitationPolicy:
    """Seeded input policy used to excite a plant for recording.

    Modes: `random_input` draws i.i.d. uniform inputs; `pd_setpoint` runs a
    trivial PD law on one position/velocity channel toward a randomly drawn
    setpoint (operating-point changes and stabilization); `pd_plus_noise`
    adds uniform exploration noise on top; `mixed` alternates the two PD
    variants per trajectory.
    """

    mode: str
    seed: int
    kp: float = 20.0
    kd: float = 5.0
    setpoint_low: float = 0.0
    setpoint_high: float = 1.0
    setpoint_hold: int = 0      # redraw the setpoint every this many steps (0: never)
    noise_amplitude: float = 0.0
    input_amplitude: float = 1.0
    init_low: tuple = ()
    init_high: tuple = ()
    pos_index: int = 0
    vel_index: int = 2

    def __post_init__(self):
        if self.mode not in POLICY_MODES:
            raise ValueError(f"unknown excitation mode {self.mode!r}; "
                             f"expected one of {POLICY_MODES}")
        if len(self.init_low) != len(self.init_high):
            raise ValueError("init_low and init_high must have equal length")

    def fingerprint(self) -> str:
        doc = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]


def _trajectory_mode(policy: ExcitationPolicy, index: int) -> str:
    if policy.mode != "mixed":
        return policy.mode
    return "pd_setpoint" if index % 2 == 0 else "pd_plus_noise"


def generate_dataset(sys: DiscreteSystem, policy: ExcitationPolicy,
                     n_traj: int, traj_len: int,
                     safety_low=None, safety_high=None) -> Dataset:
    """Record n_traj trajectories of traj_len transitions each.

    Trajectories that leave the safety box or go non-finite are discarded
    (a discard rate above 50% aborts).  Each trajectory draws from its own
    seed stream derived from (policy.seed, attempt index), so the dataset is
    a pure function of (plant, policy, counts).
    """
    if n_traj < 1 or traj_len < 1:
        raise ValueError("n_traj and traj_len must be >= 1")
    n = sys.state_dim
    if len(policy.init_low) not in (0, n):
        raise ValueError(f"init box dimension {len(policy.init_low)} "
                         f"does not match state_dim {n}")
    lo = np.full(n, -np.inf) if safety_low is None else np.asarray(safety_low, dtype=float)
    hi = np.full(n, np.inf) if safety_high is None else np.asarray(safety_high, dtype=float)

    init_lo = np.array(policy.init_low, dtype=float) if policy.init_low else np.zeros(n)
    init_hi = np.array(policy.init_high, dtype=float) if policy.init_high else np.zeros(n)

    blocks, attempts, discards = [], 0, 0
    while len(blocks) < n_traj:
        rng = np.random.default_rng([policy.seed, attempts])
        mode = _trajectory_mode(policy, attempts)
        states = np.empty((traj_len + 1, n))
        inputs = np.empty(traj_len)

        jitter = rng.uniform(init_lo, init_hi) if policy.init_low else np.zeros(n)
        if mode == "random_input":
            x = jitter
            setpoint = 0.0
        else:
            start = rng.uniform(policy.setpoint_low, policy.setpoint_high)
            x = jitter.copy()
            x[policy.pos_index] += start
            # half the PD trajectories stabilize in place, half change setpoint
            if rng.random() < 0.5:
                setpoint = start
            else:
                setpoint = rng.uniform(policy.setpoint_low, policy.setpoint_high)
        states[0] = x

        ok = True
        for k in range(traj_len):
            if mode == "random_input":
                u = policy.input_amplitude * rng.uniform(-1.0, 1.0)
            else:
                if policy.setpoint_hold > 0 and k > 0 and k % policy.setpoint_hold == 0:
                    setpoint = rng.uniform(policy.setpoint_low, policy.setpoint_high)
                u = policy.kp * (setpoint - x[policy.pos_index]) \
                    - policy.kd * x[policy.vel_index]
                if mode == "pd_plus_noise":
                    u += policy.noise_amplitude * rng.uniform(-1.0, 1.0)
            try:
                x = sys.step(x, float(u))
            except Exception as exc:
                log.warning("discarding trajectory attempt %d: step %d failed: %s",
                            attempts, k, exc)
                ok = False
                break
            if not np.all(np.isfinite(x)) or np.any(x < lo) or np.any(x > hi):
                log.warning("discarding trajectory attempt %d: left safety box at step %d",
                            attempts, k)
                ok = False
                break
            inputs[k] = u
            states[k + 1] = x

        attempts += 1
        if ok:
            blocks.append((states, inputs))
        else:
            discards += 1
            if attempts >= 10 and discards > 0.5 * attempts:
                raise GenerationError(
                    f"discard rate {discards}/{attempts} exceeds 50%; "
                    "excitation policy or safety box unsuitable")

    return dataset_from_trajectories(blocks, sys.sampling_time,
                                     policy_fingerprint=policy.fingerprint())


def dataset_from_trajectories(blocks, T_a: float,
                              policy_fingerprint: str | None = None) -> Dataset:
    """Assemble a dataset from (states (K+1, n), inputs (K,)) recordings.

    Bounds and normalization constants are computed from the data; the
    chain invariant holds by construction.
    """
    if not blocks:
        raise ValueError("no trajectories to assemble")
    X = np.concatenate([np.asarray(s, dtype=float)[:-1] for s, _ in blocks])
    Xp = np.concatenate([np.asarray(s, dtype=float)[1:] for s, _ in blocks])
    U = np.concatenate([np.asarray(u, dtype=float) for _, u in blocks])
    lengths = [len(u) for _, u in blocks]
    traj = np.repeat(np.arange(len(blocks)), lengths)
    kidx = np.concatenate([np.arange(m) for m in lengths])
    all_x = np.vstack([X, Xp])
    ds = Dataset(X=X, U=U, Xp=Xp, traj=traj, k=kidx, T_a=T_a,
                 x_min=all_x.min(axis=0), x_max=all_x.max(axis=0),
                 u_min=float(U.min()), u_max=float(U.max()),
                 policy_fingerprint=policy_fingerprint)
    ds.norm = compute_normalization(ds)
    return ds


# ---------------------------------------------------------------------------
# Normalization and splitting


def compute_normalization(ds: Dataset) -> Normalization:
    """Per-channel mean/std over the recorded states and inputs.

    Zero-variance channels get scale 1 (with a warning) so the map stays
    invertible.
    """
    x_mean = ds.X.mean(axis=0)
    x_scale = ds.X.std(axis=0)
    u_mean = float(ds.U.mean())
    u_scale = float(ds.U.std())
    for i in np.flatnonzero(x_scale == 0.0):
        log.warning("state channel %d has zero variance; scale forced to 1", i)
        x_scale[i] = 1.0
    if u_scale == 0.0:
        log.warning("input channel has zero variance; scale forced to 1")
        u_scale = 1.0
    return Normalization(x_mean, x_scale, u_mean, u_scale)


def normalize(ds: Dataset, constants: Normalization | None = None) -> Dataset:
    """Return a normalized copy of the dataset.

    Uses, in order of preference: explicit `constants` (e.g. a trained
    model's normalization when preparing adaptation data), the constants
    already attached to the dataset, or freshly computed statistics.
    """
    if ds.normalized:
        raise ValueError("dataset is already normalized")
    norm = constants if constants is not None else ds.norm
    if norm is None:
        norm = compute_normalization(ds)
    return replace(ds,
                   X=norm.normalize_x(ds.X), Xp=norm.normalize_x(ds.Xp),
                   U=norm.normalize_u(ds.U),
                   x_min=norm.normalize_x(ds.x_min), x_max=norm.normalize_x(ds.x_max),
                   u_min=float(norm.normalize_u(ds.u_min)),
                   u_max=float(norm.normalize_u(ds.u_max)),
                   norm=norm, normalized=True)


def denormalize(ds: Dataset, x=None, u=None):
    """Map value arrays from normalized back to physical units."""
    if ds.norm is None:
        raise ValueError("dataset carries no normalization constants")
    out = []
    if x is not None:
        out.append(ds.norm.denormalize_x(x))
    if u is not None:
        out.append(ds.norm.denormalize_u(u))
    return out[0] if len(out) == 1 else tuple(out)


def _subset(ds: Dataset, traj_ids: np.ndarray) -> Dataset:
    mask = np.isin(ds.traj, traj_ids)
    return replace(ds, X=ds.X[mask], U=ds.U[mask], Xp=ds.Xp[mask],
                   traj=ds.traj[mask], k=ds.k[mask])


def split(ds: Dataset, ratio: float, seed: int):
    """Split by whole trajectories with a seeded shuffle: (train, validation)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    ids = ds.trajectory_ids
    if ids.size < 2:
        raise ValueError("need at least 2 trajectories to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(ids)
    n_train = int(np.clip(round(ratio * ids.size), 1, ids.size - 1))
    return _subset(ds, order[:n_train]), _subset(ds, order[n_train:])


# ---------------------------------------------------------------------------
# Persistence

DATASET_FORMAT = "canonctl-dataset"
DATASET_VERSION = 1


def _header(n: int) -> list[str]:
    return (["traj", "k"] + [f"x{i+1}" for i in range(n)] + ["u"]
            + [f"x{i+1}p" for i in range(n)])


def _meta_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def save_dataset(ds: Dataset, path) -> None:
    """Write samples as CSV plus a `<path>.meta.json` metadata sidecar."""
    n = ds.n
    rows = ([int(t), int(kk)] + [float(v) for v in x] + [float(u)]
            + [float(v) for v in xp]
            for t, kk, x, u, xp in zip(ds.traj, ds.k, ds.X, ds.U, ds.Xp))
    write_csv(path, _header(n), rows)
    meta = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "n": n,
        "T_a": ds.T_a,
        "n_samples": len(ds),
        "n_trajectories": int(ds.trajectory_ids.size),
        "bounds": {"x_min": ds.x_min.tolist(), "x_max": ds.x_max.tolist(),
                   "u_min": ds.u_min, "u_max": ds.u_max},
        "normalized": ds.normalized,
        "normalization": None if ds.norm is None else ds.norm.to_dict(),
        "policy_fingerprint": ds.policy_fingerprint,
    }
    with open(_meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def load_dataset(path) -> Dataset:
    """Load a dataset saved by `save_dataset`, validating against metadata."""
    meta_path = _meta_path(path)
    if not meta_path.exists():
        raise DatasetFormatError(f"missing metadata sidecar {meta_path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    if meta.get("format") != DATASET_FORMAT:
        raise DatasetFormatError(f"{meta_path}: not a dataset sidecar")
    if meta.get("version") != DATASET_VERSION:
        raise DatasetFormatError(f"{meta_path}: unsupported version {meta.get('version')!r}")
    n = int(meta["n"])

    with open(path) as fh:
        actual_header = fh.readline().strip().split(",")
    expected = _header(n)
    if len(actual_header) != len(expected):
        raise DatasetFormatError(
            f"{path}: {len(actual_header)} columns but metadata declares n={n} "
            f"({len(expected)} columns expected)")
    rows = read_csv(path, expected)
    if len(rows) != meta["n_samples"]:
        raise DatasetFormatError(f"{path}: {len(rows)} samples, metadata "
                                 f"declares {meta['n_samples']}")
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(expected)))
    traj = data[:, 0].astype(int)
    kidx = data[:, 1].astype(int)
    if rows and (np.any(traj != data[:, 0]) or np.any(kidx != data[:, 1])):
        raise DatasetFormatError(f"{path}: non-integer trajectory id or step index")
    bounds = meta["bounds"]
    norm = meta.get("normalization")
    return Dataset(X=data[:, 2:2 + n], U=data[:, 2 + n],
                   Xp=data[:, 3 + n:3 + 2 * n],
                   traj=traj, k=kidx, T_a=float(meta["T_a"]),
                   x_min=np.array(bounds["x_min"], dtype=float),
                   x_max=np.array(bounds["x_max"], dtype=float),
                   u_min=float(bounds["u_min"]), u_max=float(bounds["u_max"]),
                   norm=None if norm is None else Normalization.from_dict(norm),
                   normalized=bool(meta["normalized"]),
                   policy_fingerprint=meta.get("policy_fingerprint"))
