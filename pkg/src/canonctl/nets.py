"""One-hidden-layer feed-forward networks with exact manual backpropagation.

The whole toolchain runs on networks of the fixed shape

    y = W2 @ phi(W1 @ x + b1) + b2

in float64.  Forward passes return a cache from which `backward` computes
analytic parameter gradients and the input cotangent; `adam_step` applies a
standard Adam update.  Everything is pure: functions never mutate their
arguments and return fresh arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NetError(ValueError):
    """Dimension mismatch, bad activation name, or non-finite parameters."""


# ---------------------------------------------------------------------------
# Activations


def _sigmoid(h):
    # clipping keeps exp() in range; beyond +-500 the result saturates anyway
    return 1.0 / (1.0 + np.exp(-np.clip(h, -500.0, 500.0)))


def _sigmoid_deriv(s, h):
    # derivative expressed through the activation value s = sigmoid(h)
    return s * (1.0 - s)


def _tanh(h):
    return np.tanh(h)


def _tanh_deriv(s, h):
    return 1.0 - s * s


def _linear(h):
    return h


def _linear_deriv(s, h):
    return np.ones_like(h)


ACTIVATIONS = {
    "sigmoid": (_sigmoid, _sigmoid_deriv),
    "tanh": (_tanh, _tanh_deriv),
    "linear": (_linear, _linear_deriv),
}


def activation_pair(name: str):
    """Return (function, derivative) for a named activation."""
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise NetError(f"unknown activation {name!r}; expected one of "
                       f"{sorted(ACTIVATIONS)}") from None


# ---------------------------------------------------------------------------
# Network container


@dataclass
class Network:
    """Parameters of a single-hidden-layer network.

    W1: (hidden, in), b1: (hidden,), W2: (out, hidden), b2: (out,).
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    activation: str = "sigmoid"

    @property
    def in_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W2.shape[0]

    def copy(self) -> "Network":
        return Network(self.W1.copy(), self.b1.copy(),
                       self.W2.copy(), self.b2.copy(), self.activation)

    def params(self):
        """Ordered (name, array) view of the parameters."""
        return [("W1", self.W1), ("b1", self.b1),
                ("W2", self.W2), ("b2", self.b2)]

    def validate(self) -> None:
        n_l, n_in = self.W1.shape
        n_out = self.W2.shape[0]
        if self.b1.shape != (n_l,) or self.W2.shape != (n_out, n_l) \
                or self.b2.shape != (n_out,):
            raise NetError(f"inconsistent parameter shapes: W1 {self.W1.shape}, "
                           f"b1 {self.b1.shape}, W2 {self.W2.shape}, b2 {self.b2.shape}")
        activation_pair(self.activation)
        for name, arr in self.params():
            if not np.all(np.isfinite(arr)):
                raise NetError(f"non-finite entries in parameter {name}")


@dataclass
class Gradients:
    """Parameter gradients, shape-compatible with a Network."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def zeros_like(cls, net: Network) -> "Gradients":
        return cls(np.zeros_like(net.W1), np.zeros_like(net.b1),
                   np.zeros_like(net.W2), np.zeros_like(net.b2))

    def params(self):
        return [("W1", self.W1), ("b1", self.b1),
                ("W2", self.W2), ("b2", self.b2)]

    def add_(self, other: "Gradients") -> "Gradients":
        self.W1 += other.W1
        self.b1 += other.b1
        self.W2 += other.W2
        self.b2 += other.b2
        return self


def init_network(in_dim: int, hidden_dim: int, out_dim: int, seed: int,
                 activation: str = "sigmoid") -> Network:
    """Xavier-uniform weights, zero biases, reproducible from the seed."""
    if min(in_dim, hidden_dim, out_dim) < 1:
        raise NetError("network dimensions must be positive")
    activation_pair(activation)
    rng = np.random.default_rng(seed)

    def xavier(fan_out, fan_in):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in))

    return Network(W1=xavier(hidden_dim, in_dim),
                   b1=np.zeros(hidden_dim),
                   W2=xavier(out_dim, hidden_dim),
                   b2=np.zeros(out_dim),
                   activation=activation)


# ---------------------------------------------------------------------------
# Forward / backward


def forward(net: Network, x: np.ndarray):
    """Evaluate the network on `x` ((in,) vector or (batch, in) matrix).

    Returns (y, cache); the cache holds everything `backward` needs.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.in_dim:
        raise NetError(f"input shape {x.shape} incompatible with "
                       f"in_dim {net.in_dim}")
    act, _ = activation_pair(net.activation)
    H = X @ net.W1.T + net.b1
    S = act(H)
    Y = S @ net.W2.T + net.b2
    cache = (X, H, S, single)
    return (Y[0] if single else Y), cache


def backward(net: Network, cache, dy: np.ndarray):
    """Backpropagate the cotangent `dy` through a cached forward pass.

    Returns (Gradients, dx) where dx has the same leading shape as the
    forward input.  Gradients are summed over the batch.
    """
    X, H, S, single = cache
    dy = np.asarray(dy, dtype=float)
    dY = dy[None, :] if single else dy
    if dY.shape != (X.shape[0], net.out_dim):
        raise NetError(f"cotangent shape {dy.shape} does not match cache "
                       f"batch {X.shape[0]} / out_dim {net.out_dim}")
    if H.shape != (X.shape[0], net.hidden_dim) or X.shape[1] != net.in_dim:
        raise NetError("cache does not belong to this network")
    _, deriv = activation_pair(net.activation)

    dW2 = dY.T @ S
    db2 = dY.sum(axis=0)
    dH = (dY @ net.W2) * deriv(S, H)
    dW1 = dH.T @ X
    db1 = dH.sum(axis=0)
    dX = dH @ net.W1
    grads = Gradients(dW1, db1, dW2, db2)
    return grads, (dX[0] if single else dX)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Adam moment buffers and hyperparameters for one Network."""

    m: list
    v: list
    t: int
    lr: float
    beta1: float
    beta2: float
    eps: float

    @classmethod
    def for_network(cls, net: Network, lr: float = 1e-3, beta1: float = 0.9,
                    beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        zeros = [np.zeros_like(arr) for _, arr in net.params()]
        return cls(m=zeros, v=[z.copy() for z in zeros], t=0,
                   lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(net: Network, grads: Gradients, state: AdamState):
    """One Adam update with bias correction; returns fresh (net, state)."""
    for name, g in grads.params():
        if not np.all(np.isfinite(g)):
            raise NetError(f"non-finite gradient in {name}")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = [], [], []
    for (_, p), (_, g), m, v in zip(net.params(), grads.params(),
                                    state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_net = Network(*new_params, activation=net.activation)
    new_state = AdamState(m=new_m, v=new_v, t=t, lr=state.lr,
                          beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return new_net, new_state


# ---------------------------------------------------------------------------
# Serialization

NETWORK_FORMAT = "canonctl-network"
NETWORK_VERSION = 1


def network_to_dict(net: Network) -> dict:
    """Versioned JSON-ready document; floats round-trip bit-exactly."""
    return {
        "format": NETWORK_FORMAT,
        "version": NETWORK_VERSION,
        "in_dim": net.in_dim,
        "hidden_dim": net.hidden_dim,
        "out_dim": net.out_dim,
        "activation": net.activation,
        "W1": net.W1.tolist(),
        "b1": net.b1.tolist(),
        "W2": net.W2.tolist(),
        "b2": net.b2.tolist(),
    }


def network_from_dict(doc: dict) -> Network:
    if doc.get("format") != NETWORK_FORMAT:
        raise NetError(f"not a network document: format={doc.get('format')!r}")
    if doc.get("version") != NETWORK_VERSION:
        raise NetError(f"unsupported network document version {doc.get('version')!r}")
    net = Network(W1=np.array(doc["W1"], dtype=float),
                  b1=np.array(doc["b1"], dtype=float),
                  W2=np.array(doc["W2"], dtype=float),
                  b2=np.array(doc["b2"], dtype=float),
                  activation=doc["activation"])
    net.validate()
    if (net.in_dim, net.hidden_dim, net.out_dim) != \
            (doc["in_dim"], doc["hidden_dim"], doc["out_dim"]):
        raise NetError("declared dimensions disagree with stored arrays")
    return net
