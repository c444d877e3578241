"""Discrete-time Brunovsky canonical form: a pure shift register.

In these coordinates the dynamics are z+ = A_B z + b_B v with A_B carrying
ones on the superdiagonal and b_B the last unit vector, i.e. the state
shifts up by one slot and the input enters at the bottom.
"""

from __future__ import annotations

import numpy as np


def shift(z: np.ndarray, v) -> np.ndarray:
    """Apply the shift register: out[i] = z[i+1], out[n-1] = v.

    Accepts a single state (n,) with scalar v, or a batch (B, n) with
    v of shape (B,) or (B, 1).
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        out = np.empty_like(z)
        out[:-1] = z[1:]
        out[-1] = v
        return out
    v = np.asarray(v, dtype=float).reshape(z.shape[0])
    return np.concatenate([z[:, 1:], v[:, None]], axis=1)


def shift_matrices(n: int):
    """Return (A_B, b_B) for dimension n."""
    A = np.zeros((n, n))
    A[np.arange(n - 1), np.arange(1, n)] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    return A, b


def error_companion(a: np.ndarray) -> np.ndarray:
    """Companion matrix of the closed-loop error dynamics.

    Last row is [-a_0, ..., -a_{n-1}]; its characteristic polynomial is
    z^n + a_{n-1} z^{n-1} + ... + a_0.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    A, b = shift_matrices(n)
    return A - np.outer(b, a)


def equilibrium_projection(z: np.ndarray):
    """Nearest shift-register equilibrium (c, ..., c) to a given z.

    Fixed points of z+ = shift(z, v) are exactly the constant vectors with
    v = c, so the least-squares projection is the component mean.
    """
    z = np.asarray(z, dtype=float)
    c = float(z.mean())
    return np.full_like(z, c), c
