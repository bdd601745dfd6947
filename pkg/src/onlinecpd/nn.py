"""Small dense networks with hand-written backprop and an Adam optimizer.

All parameters live in one flat float64 vector; per-layer weights and
biases are views into it. That keeps the Adam update to a handful of
vector operations, which dominates the cost of the online detectors.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

HEADS = ("sigmoid", "softplus", "square")
ACTIVATIONS = ("tanh", "relu", "identity")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _sigmoid(z):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softplus(z):
    return np.logaddexp(0.0, z)


class NeuralNet:
    """Feed-forward net ``dim_in -> hidden... -> 1`` with a bounded output head.

    Parameters
    ----------
    dim_in : int
        Input dimension (``k * d`` for embedded series).
    hidden : sequence of int
        Hidden layer widths. An empty sequence gives an affine model.
    head : {"sigmoid", "softplus"}
        Output nonlinearity. ``sigmoid`` yields values in (0, 1) for the
        classifier, ``softplus`` yields nonnegative values for the density
        ratio regressor.
    activation : {"tanh", "relu", "identity"}
    lr : float
        Adam learning rate.
    seed : int
        Seed for the uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight draw.
    """

    def __init__(self, dim_in: int, hidden: Sequence[int] = (32,), head: str = "sigmoid",
                 activation: str = "tanh", lr: float = 0.01, seed: int = 0):
        if dim_in < 1:
            raise ValueError("dim_in must be >= 1")
        if lr < 0:
            raise ValueError("lr must be >= 0")
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}, expected one of {HEADS}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}, expected one of {ACTIVATIONS}")
        self.sizes = [int(dim_in), *(int(h) for h in hidden), 1]
        if any(s < 1 for s in self.sizes):
            raise ValueError("layer widths must be >= 1")
        self.head = head
        self.activation = activation
        self.lr = float(lr)
        self.seed = seed

        self.params = np.zeros(self.n_params)
        self.weights, self.biases = self._views(self.params)
        rng = np.random.default_rng(seed)
        for W in self.weights:
            bound = 1.0 / np.sqrt(W.shape[0])
            W[...] = rng.uniform(-bound, bound, size=W.shape)

        self.m = np.zeros_like(self.params)
        self.v = np.zeros_like(self.params)
        self.step = 0
        self.nonfinite_skips = 0
        self._grad = np.zeros_like(self.params)
        self._grad_w, self._grad_b = self._views(self._grad)
        self._tmp = np.zeros_like(self.params)
        self._cache = None

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))

    @property
    def dim_in(self) -> int:
        return self.sizes[0]

    def _views(self, flat):
        weights, biases = [], []
        pos = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            weights.append(flat[pos:pos + a * b].reshape(a, b))
            pos += a * b
            biases.append(flat[pos:pos + b])
            pos += b
        return weights, biases

    def _act(self, z):
        if self.activation == "tanh":
            return np.tanh(z)
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        return z

    def _act_grad(self, a, z):
        if self.activation == "tanh":
            return 1.0 - a * a
        if self.activation == "relu":
            return (z > 0).astype(float)
        return np.ones_like(z)

    def forward(self, X) -> np.ndarray | float:
        """Network output for one vector (returns float) or a batch (returns (n,))."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.dim_in:
            raise ValueError("input dimension mismatch")
        acts, pre = [X], []
        a = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            pre.append(z)
            if i < last:
                a = self._act(z)
                acts.append(a)
        logit = pre[-1][:, 0]
        if self.head == "sigmoid":
            out = _sigmoid(logit)
        elif self.head == "softplus":
            out = _softplus(logit)
        else:
            out = logit * logit
        self._cache = (acts, pre, logit, out)
        return float(out[0]) if single else out

    __call__ = forward

    def backward(self, grad_output=None, *, grad_logit=None) -> np.ndarray:
        """Gradient of ``sum_i u_i * out_i`` w.r.t. the flat parameters.

        ``grad_output`` holds the per-example upstream gradients dL/d(out_i)
        for the most recent ``forward`` batch. ``grad_logit`` may be given
        instead as dL/d(logit_i), which avoids dividing by a saturated
        sigmoid. The returned array is reused between calls; copy it if it
        must outlive the next ``backward``. Parameters are not modified.
        """
        if self._cache is None:
            raise RuntimeError("backward before forward")
        acts, pre, logit, out = self._cache
        if grad_logit is None:
            if grad_output is None:
                raise ValueError("either grad_output or grad_logit is required")
            g = np.asarray(grad_output, dtype=float).reshape(-1)
            if self.head == "sigmoid":
                dz = g * out * (1.0 - out)
            elif self.head == "softplus":
                dz = g * _sigmoid(logit)
            else:
                dz = 2.0 * g * logit
        else:
            dz = np.asarray(grad_logit, dtype=float).reshape(-1)
        if dz.shape[0] != out.shape[0]:
            raise ValueError("upstream gradient does not match batch size")

        gw, gb = self._grad_w, self._grad_b
        delta = dz[:, None]
        for i in range(len(self.weights) - 1, -1, -1):
            np.dot(acts[i].T, delta, out=gw[i])
            gb[i][...] = delta.sum(axis=0)
            if i > 0:
                back = delta @ self.weights[i].T
                delta = back * self._act_grad(acts[i], pre[i - 1])
        return self._grad

    def adam_step(self, grad: np.ndarray) -> "NeuralNet":
        """One Adam update with bias correction, in place.

        A gradient containing NaN/Inf is skipped and counted in
        ``nonfinite_skips``.
        """
        grad = np.asarray(grad, dtype=float)
        if grad.shape != self.params.shape:
            raise ValueError("gradient shape does not match parameters")
        # a finite sum can only come from finite entries
        if not np.isfinite(grad.sum()) and not np.all(np.isfinite(grad)):
            self.nonfinite_skips += 1
            logger.warning("non-finite gradient, update skipped (%d so far)", self.nonfinite_skips)
            return self
        self.step += 1
        m, v, tmp = self.m, self.v, self._tmp
        m *= ADAM_BETA1
        np.multiply(grad, 1.0 - ADAM_BETA1, out=tmp)
        m += tmp
        v *= ADAM_BETA2
        np.multiply(grad, grad, out=tmp)
        tmp *= 1.0 - ADAM_BETA2
        v += tmp
        m_hat_scale = 1.0 / (1.0 - ADAM_BETA1 ** self.step)
        v_hat_scale = 1.0 / (1.0 - ADAM_BETA2 ** self.step)
        np.multiply(v, v_hat_scale, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += ADAM_EPS
        np.divide(m, tmp, out=tmp)
        tmp *= self.lr * m_hat_scale
        self.params -= tmp
        return self

    def state_size(self) -> int:
        """Number of floats held by the network (parameters and Adam moments)."""
        return self.params.size + self.m.size + self.v.size

    def copy(self) -> "NeuralNet":
        other = NeuralNet(self.dim_in, self.sizes[1:-1], self.head, self.activation, self.lr, self.seed)
        other.params[...] = self.params
        other.m[...] = self.m
        other.v[...] = self.v
        other.step = self.step
        return other

    def save(self, path) -> None:
        """Write a text checkpoint.

        Layout: a header line ``onlinecpd-mlp 1``, then ``sizes``,
        ``activation`` and ``head`` lines, then for every layer its weight
        rows (row-major, one row per line) followed by one bias line.
        """
        lines = ["onlinecpd-mlp 1",
                 "sizes " + " ".join(map(str, self.sizes)),
                 f"activation {self.activation}",
                 f"head {self.head}"]
        for W, b in zip(self.weights, self.biases):
            lines.extend(" ".join(repr(float(x)) for x in row) for row in W)
            lines.append(" ".join(repr(float(x)) for x in b))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path, lr: float = 0.01) -> "NeuralNet":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != "onlinecpd-mlp 1":
            raise ValueError("not an onlinecpd checkpoint")
        sizes = [int(s) for s in lines[1].split()[1:]]
        activation = lines[2].split()[1]
        head = lines[3].split()[1]
        net = cls(sizes[0], sizes[1:-1], head=head, activation=activation, lr=lr)
        rows = iter(lines[4:])
        for W, b in zip(net.weights, net.biases):
            for r in range(W.shape[0]):
                W[r] = [float(x) for x in next(rows).split()]
            b[...] = [float(x) for x in next(rows).split()]
        return net


def init(dim_in: int, hidden: Sequence[int] = (32,), head: str = "sigmoid", lr: float = 0.01,
         seed: int = 0, activation: str = "tanh") -> NeuralNet:
    return NeuralNet(dim_in, hidden, head=head, activation=activation, lr=lr, seed=seed)


def forward(net: NeuralNet, X):
    return net.forward(X)


def backward(net: NeuralNet, grad_output) -> np.ndarray:
    return net.backward(grad_output).copy()


def adam_step(net: NeuralNet, gradient) -> NeuralNet:
    return net.adam_step(gradient)
