"""One-hidden-layer ReLU network with hand-written backprop and Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MlpParams:
    w1: np.ndarray  # (n_in, n_hidden)
    b1: np.ndarray
    w2: np.ndarray  # (n_hidden, n_out)
    b2: np.ndarray

    NAMES = ("w1", "b1", "w2", "b2")

    @classmethod
    def init(cls, rng: np.random.Generator, n_in: int = 10, n_hidden: int = 256, n_out: int = 5):
        # uniform fan-in scaling
        lim1 = 1.0 / np.sqrt(n_in)
        lim2 = 1.0 / np.sqrt(n_hidden)
        return cls(
            rng.uniform(-lim1, lim1, (n_in, n_hidden)),
            rng.uniform(-lim1, lim1, n_hidden),
            rng.uniform(-lim2, lim2, (n_hidden, n_out)),
            rng.uniform(-lim2, lim2, n_out),
        )

    @classmethod
    def zeros(cls, n_in: int = 10, n_hidden: int = 256, n_out: int = 5):
        return cls(np.zeros((n_in, n_hidden)), np.zeros(n_hidden),
                   np.zeros((n_hidden, n_out)), np.zeros(n_out))

    @property
    def shapes(self) -> list:
        return [list(getattr(self, n).shape) for n in self.NAMES]

    def arrays(self) -> list:
        return [getattr(self, n) for n in self.NAMES]

    def copy(self) -> "MlpParams":
        return MlpParams(*(a.copy() for a in self.arrays()))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, flat: np.ndarray, shapes) -> "MlpParams":
        arrays, pos = [], 0
        for shape in shapes:
            size = int(np.prod(shape))
            arrays.append(np.array(flat[pos:pos + size], dtype=np.float64).reshape(shape))
            pos += size
        if pos != flat.size:
            raise ValueError("parameter block does not match layer shapes")
        return cls(*arrays)

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def forward(params: MlpParams, x: np.ndarray, keep=False):
    """Action values for a single input (1-D) or a batch (2-D)."""
    pre = x @ params.w1 + params.b1
    hidden = np.maximum(pre, 0.0)
    out = hidden @ params.w2 + params.b2
    if keep:
        return out, (x, pre, hidden)
    return out


def backward(params: MlpParams, cache, dout: np.ndarray) -> MlpParams:
    x, pre, hidden = cache
    dw2 = hidden.T @ dout
    db2 = dout.sum(axis=0)
    dhidden = dout @ params.w2.T
    dhidden *= pre > 0.0
    dw1 = x.T @ dhidden
    db1 = dhidden.sum(axis=0)
    return MlpParams(dw1, db1, dw2, db2)


def td_loss_and_grad(params: MlpParams, obs: np.ndarray, actions: np.ndarray,
                     targets: np.ndarray, loss: str = "huber"):
    """Mean TD loss over a batch and its gradient wrt ``params``.

    ``targets`` are treated as constants (they come from the target network).
    ``loss="mse"`` uses 0.5 * err**2, ``"huber"`` the smooth-L1 variant.
    """
    q, cache = forward(params, obs, keep=True)
    n = obs.shape[0]
    idx = np.arange(n)
    err = q[idx, actions] - targets
    if loss == "mse":
        value = 0.5 * np.mean(err ** 2)
        derr = err / n
    elif loss == "huber":
        absr = np.abs(err)
        quad = absr <= 1.0
        value = np.mean(np.where(quad, 0.5 * err ** 2, absr - 0.5))
        derr = np.where(quad, err, np.sign(err)) / n
    else:
        raise ValueError(f"unknown loss {loss!r}")
    dout = np.zeros_like(q)
    dout[idx, actions] = derr
    return value, backward(params, cache, dout)


def clip_grad_norm(grads: MlpParams, max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.arrays())))
    if max_norm and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.arrays():
            g *= scale
    return norm


class Adam:
    def __init__(self, params: MlpParams, lr: float = 6.3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]

    def update(self, params: MlpParams, grads: MlpParams) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params.arrays(), grads.arrays(), self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
