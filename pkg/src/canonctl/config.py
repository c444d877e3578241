"""Run configuration: one JSON document driving the whole pipeline.

Every key is validated up front and unknown keys are rejected by name, so
a typo fails fast instead of silently falling back to a default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autoencoder import LossWeights, TrainOptions
from .datasets import ExcitationPolicy
from .systems import SIGMA_N, CraneParams


class ConfigError(ValueError):
    """Invalid or unknown configuration entry; message names the key."""


def _reject_unknown(section: dict, known, where: str) -> None:
    unknown = set(section) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _get(section: dict, key: str, kind, where: str, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key {where}.{key}")
        return default
    value = section[key]
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind is bool and isinstance(value, bool):
        return value
    if kind is str and isinstance(value, str):
        return value
    if kind is list and isinstance(value, list):
        return value
    raise ConfigError(f"{where}.{key} must be of type {kind.__name__}, "
                      f"got {type(value).__name__}")


@dataclass
class SystemConfig:
    name: str
    T_a: float
    params: CraneParams | None = None
    ansatz: str = "quadratic"
    m22_tip_mass: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        _reject_unknown(d, ["name", "T_a", "params", "ansatz", "m22_tip_mass"], "system")
        name = _get(d, "name", str, "system", required=True)
        if name not in ("academic", "crane"):
            raise ConfigError(f"system.name must be 'academic' or 'crane', got {name!r}")
        params = None
        if name == "crane":
            pd = d.get("params", {})
            if not isinstance(pd, dict):
                raise ConfigError("system.params must be an object")
            _reject_unknown(pd, ["L", "m_c", "m_h", "rhoA", "EI"], "system.params")
            base = SIGMA_N
            params = CraneParams(
                L=float(pd.get("L", base.L)), m_c=float(pd.get("m_c", base.m_c)),
                m_h=float(pd.get("m_h", base.m_h)), rhoA=float(pd.get("rhoA", base.rhoA)),
                EI=float(pd.get("EI", base.EI)))
        elif "params" in d:
            raise ConfigError("system.params is only valid for the crane system")
        T_a = _get(d, "T_a", float, "system",
                   default=0.005 if name == "crane" else 1.0)
        if T_a <= 0:
            raise ConfigError("system.T_a must be positive")
        return cls(name=name, T_a=T_a, params=params,
                   ansatz=_get(d, "ansatz", str, "system", default="quadratic"),
                   m22_tip_mass=_get(d, "m22_tip_mass", bool, "system", default=False))


_POLICY_KEYS = ["mode", "seed", "kp", "kd", "setpoint_low", "setpoint_high",
                "setpoint_hold", "noise_amplitude", "input_amplitude",
                "init_low", "init_high", "pos_index", "vel_index"]


@dataclass
class DatasetConfig:
    path: str
    n_traj: int
    traj_len: int
    policy: ExcitationPolicy
    safety_low: list | None = None
    safety_high: list | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        _reject_unknown(d, ["path", "n_traj", "traj_len", "policy",
                            "safety_low", "safety_high"], "dataset")
        pol = d.get("policy")
        if not isinstance(pol, dict):
            raise ConfigError("dataset.policy must be an object")
        _reject_unknown(pol, _POLICY_KEYS, "dataset.policy")
        try:
            policy = ExcitationPolicy(
                mode=_get(pol, "mode", str, "dataset.policy", required=True),
                seed=_get(pol, "seed", int, "dataset.policy", default=0),
                kp=_get(pol, "kp", float, "dataset.policy", default=20.0),
                kd=_get(pol, "kd", float, "dataset.policy", default=5.0),
                setpoint_low=_get(pol, "setpoint_low", float, "dataset.policy", default=0.0),
                setpoint_high=_get(pol, "setpoint_high", float, "dataset.policy", default=1.0),
                setpoint_hold=_get(pol, "setpoint_hold", int, "dataset.policy", default=0),
                noise_amplitude=_get(pol, "noise_amplitude", float, "dataset.policy", default=0.0),
                input_amplitude=_get(pol, "input_amplitude", float, "dataset.policy", default=1.0),
                init_low=tuple(_get(pol, "init_low", list, "dataset.policy", default=[])),
                init_high=tuple(_get(pol, "init_high", list, "dataset.policy", default=[])),
                pos_index=_get(pol, "pos_index", int, "dataset.policy", default=0),
                vel_index=_get(pol, "vel_index", int, "dataset.policy", default=2))
        except ValueError as exc:
            raise ConfigError(f"dataset.policy: {exc}") from exc
        n_traj = _get(d, "n_traj", int, "dataset", required=True)
        traj_len = _get(d, "traj_len", int, "dataset", required=True)
        if n_traj < 1 or traj_len < 1:
            raise ConfigError("dataset.n_traj and dataset.traj_len must be >= 1")
        return cls(path=_get(d, "path", str, "dataset", default="dataset.csv"),
                   n_traj=n_traj, traj_len=traj_len, policy=policy,
                   safety_low=_get(d, "safety_low", list, "dataset", default=None),
                   safety_high=_get(d, "safety_high", list, "dataset", default=None))


@dataclass
class NetworkConfig:
    n_l: int
    activation: str = "sigmoid"
    seed: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        _reject_unknown(d, ["n_l", "activation", "seed"], "network")
        n_l = _get(d, "n_l", int, "network", required=True)
        if n_l < 1:
            raise ConfigError("network.n_l must be >= 1")
        activation = _get(d, "activation", str, "network", default="sigmoid")
        if activation not in ("sigmoid", "tanh", "linear"):
            raise ConfigError(f"network.activation {activation!r} is not supported")
        return cls(n_l=n_l, activation=activation,
                   seed=_get(d, "seed", int, "network", default=1))


@dataclass
class TrainingConfig:
    options: TrainOptions
    weights: LossWeights

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        _reject_unknown(d, ["epochs", "batch_size", "lr", "lr_decay",
                            "lr_decay_every", "loss_weights", "split", "seed",
                            "plateau_patience", "plateau_rtol"], "training")
        lw = _get(d, "loss_weights", list, "training", default=[1.0, 1.0, 1.0])
        if len(lw) != 3:
            raise ConfigError("training.loss_weights must have 3 entries")
        try:
            weights = LossWeights(*[float(v) for v in lw])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"training.loss_weights: {exc}") from exc
        split = _get(d, "split", float, "training", default=0.9)
        if not 0.0 < split < 1.0:
            raise ConfigError("training.split must be in (0, 1)")
        opts = TrainOptions(
            epochs=_get(d, "epochs", int, "training", required=True),
            batch_size=_get(d, "batch_size", int, "training", default=256),
            lr=_get(d, "lr", float, "training", default=None),
            seed=_get(d, "seed", int, "training", default=0),
            split=split,
            lr_decay=_get(d, "lr_decay", float, "training", default=1.0),
            lr_decay_every=_get(d, "lr_decay_every", int, "training", default=0),
            plateau_patience=_get(d, "plateau_patience", int, "training", default=0),
            plateau_rtol=_get(d, "plateau_rtol", float, "training", default=1e-3))
        if opts.epochs < 0:
            raise ConfigError("training.epochs must be >= 0")
        return cls(options=opts, weights=weights)


@dataclass
class ControlConfig:
    poles: list
    horizon: int
    start_state: np.ndarray
    goal_state: np.ndarray
    initial_offset: float = 0.1
    extra_steps: int = 100
    equilibrium_boundaries: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "ControlConfig":
        _reject_unknown(d, ["poles", "horizon", "start_state", "goal_state",
                            "initial_offset", "extra_steps",
                            "equilibrium_boundaries"], "control")
        poles = _get(d, "poles", list, "control", default=[0.85, 0.85, 0.85, 0.85])
        horizon = _get(d, "horizon", int, "control", required=True)
        if horizon < 1:
            raise ConfigError("control.horizon must be >= 1")
        start = _get(d, "start_state", list, "control", required=True)
        goal = _get(d, "goal_state", list, "control", required=True)
        if len(start) != len(goal):
            raise ConfigError("control.start_state and goal_state lengths differ")
        return cls(poles=[complex(p) if isinstance(p, str) else float(p) for p in poles],
                   horizon=horizon,
                   start_state=np.array(start, dtype=float),
                   goal_state=np.array(goal, dtype=float),
                   initial_offset=_get(d, "initial_offset", float, "control", default=0.1),
                   extra_steps=_get(d, "extra_steps", int, "control", default=100),
                   equilibrium_boundaries=_get(d, "equilibrium_boundaries", bool,
                                               "control", default=True))


@dataclass
class TransferConfig:
    target_params: CraneParams
    n_experiments: int = 50
    seed: int = 2
    epochs: int = 200
    lr: float | None = 1e-4
    batch_size: int = 256
    start_offset_range: float = 0.1
    goal_low: float = 0.2
    goal_high: float = 1.0

    @classmethod
    def from_dict(cls, d: dict) -> "TransferConfig":
        _reject_unknown(d, ["target_params", "n_experiments", "seed", "epochs",
                            "lr", "batch_size", "start_offset_range",
                            "goal_low", "goal_high"], "transfer")
        pd = d.get("target_params")
        if not isinstance(pd, dict):
            raise ConfigError("transfer.target_params must be an object")
        _reject_unknown(pd, ["L", "m_c", "m_h", "rhoA", "EI"], "transfer.target_params")
        try:
            params = CraneParams(L=float(pd["L"]), m_c=float(pd["m_c"]),
                                 m_h=float(pd["m_h"]), rhoA=float(pd["rhoA"]),
                                 EI=float(pd["EI"]))
        except KeyError as exc:
            raise ConfigError(f"transfer.target_params missing {exc}") from exc
        return cls(target_params=params,
                   n_experiments=_get(d, "n_experiments", int, "transfer", default=50),
                   seed=_get(d, "seed", int, "transfer", default=2),
                   epochs=_get(d, "epochs", int, "transfer", default=200),
                   lr=_get(d, "lr", float, "transfer", default=1e-4),
                   batch_size=_get(d, "batch_size", int, "transfer", default=256),
                   start_offset_range=_get(d, "start_offset_range", float,
                                           "transfer", default=0.1),
                   goal_low=_get(d, "goal_low", float, "transfer", default=0.2),
                   goal_high=_get(d, "goal_high", float, "transfer", default=1.0))


@dataclass
class RunConfig:
    system: SystemConfig
    dataset: DatasetConfig
    network: NetworkConfig
    training: TrainingConfig
    control: ControlConfig | None
    transfer: TransferConfig | None
    output: str
    fingerprint: str = ""

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("configuration root must be a JSON object")
        _reject_unknown(doc, ["system", "dataset", "network", "training",
                              "control", "transfer", "output"], "config")
        for key in ("system", "dataset", "network", "training"):
            if key not in doc:
                raise ConfigError(f"missing required section {key!r}")
        fingerprint = hashlib.sha256(
            json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]
        return cls(system=SystemConfig.from_dict(doc["system"]),
                   dataset=DatasetConfig.from_dict(doc["dataset"]),
                   network=NetworkConfig.from_dict(doc["network"]),
                   training=TrainingConfig.from_dict(doc["training"]),
                   control=ControlConfig.from_dict(doc["control"])
                   if "control" in doc else None,
                   transfer=TransferConfig.from_dict(doc["transfer"])
                   if "transfer" in doc else None,
                   output=str(doc.get("output", "runs/out")),
                   fingerprint=fingerprint)

    def reseed(self, seed: int) -> None:
        """Derive all stage seeds from one master seed (CLI --seed flag)."""
        base = int(seed)
        self.dataset.policy = dataclasses.replace(self.dataset.policy, seed=base)
        self.network.seed = base + 1
        self.training.options.seed = base + 2
        if self.transfer is not None:
            self.transfer.seed = base + 3


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return RunConfig.from_dict(doc)
