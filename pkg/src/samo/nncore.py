"""Dense feed-forward networks with hand-written backprop and Adam.

Every network keeps all of its parameters in one flat float64 vector; the
per-layer weight and bias arrays are views into it. That makes Adam, soft
target updates and checkpointing single-array operations.

Layout of the flat vector, per layer: ``W`` (n_in x n_out, row-major) then ``b``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from samo.errors import ConfigError

ACTIVATIONS = ("tanh", "relu")


def param_count(layer_sizes: Sequence[int]) -> int:
    return sum((n_in + 1) * n_out for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]))


class DenseNet:
    """Fully connected net: hidden layers use ``activation``, the output is affine."""

    def __init__(self, layer_sizes: Sequence[int], activation: str = "tanh",
                 params: np.ndarray | None = None):
        sizes = tuple(int(n) for n in layer_sizes)
        if len(sizes) < 2 or any(n <= 0 for n in sizes):
            raise ConfigError(f"layer sizes must be >= 2 positive integers, got {layer_sizes!r}")
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        self.layer_sizes = sizes
        self.activation = activation
        n = param_count(sizes)
        if params is None:
            self.params = np.zeros(n)
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (n,):
                raise ConfigError(f"expected {n} parameters, got shape {params.shape}")
            self.params = params.copy()
        self._bind()

    def _bind(self) -> None:
        self.layers: list[tuple[np.ndarray, np.ndarray]] = []
        self._slices: list[tuple[slice, slice]] = []
        off = 0
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w_sl = slice(off, off + n_in * n_out)
            off += n_in * n_out
            b_sl = slice(off, off + n_out)
            off += n_out
            self.layers.append((self.params[w_sl].reshape(n_in, n_out), self.params[b_sl]))
            self._slices.append((w_sl, b_sl))

    @classmethod
    def init(cls, layer_sizes: Sequence[int], activation: str, rng: np.random.Generator) -> "DenseNet":
        """Uniform init in +-1/sqrt(n_in) for weights and biases of each layer."""
        net = cls(layer_sizes, activation)
        for (w, b), n_in in zip(net.layers, net.layer_sizes[:-1]):
            bound = 1.0 / np.sqrt(n_in)
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        return net

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "DenseNet":
        return DenseNet(self.layer_sizes, self.activation, self.params)

    def load_params(self, params: np.ndarray) -> None:
        self.params[...] = params

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in or x.ndim > 2:
            raise ConfigError(f"net expects input length {self.n_in}, got shape {x.shape}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        h = x
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = h @ w + b
            if i < last:
                h = np.tanh(h) if self.activation == "tanh" else np.maximum(h, 0.0)
        return h

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass on a 2-D batch, also returning each layer's input."""
        h = self._check_input(x)
        if h.ndim == 1:
            h = h[None, :]
        acts = []
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            acts.append(h)
            h = h @ w + b
            if i < last:
                h = np.tanh(h) if self.activation == "tanh" else np.maximum(h, 0.0)
        return h, acts

    def backward_cached(self, acts: list[np.ndarray], grad_out: np.ndarray,
                        need_params: bool = True, need_input: bool = True
                        ) -> tuple[np.ndarray | None, np.ndarray | None]:
        g = np.asarray(grad_out, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        if g.shape != (acts[0].shape[0], self.n_out):
            raise ConfigError(f"upstream gradient shape {g.shape} does not match output "
                              f"({acts[0].shape[0]}, {self.n_out})")
        grads = np.empty_like(self.params) if need_params else None
        for i in range(len(self.layers) - 1, -1, -1):
            w, _ = self.layers[i]
            a_in = acts[i]
            if need_params:
                w_sl, b_sl = self._slices[i]
                grads[w_sl] = (a_in.T @ g).ravel()
                grads[b_sl] = g.sum(axis=0)
            if i == 0 and not need_input:
                break
            g = g @ w.T
            if i > 0:
                if self.activation == "tanh":
                    g = g * (1.0 - a_in * a_in)
                else:
                    g = g * (a_in > 0.0)
        return grads, (g if need_input else None)


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def backward(net: DenseNet, x: np.ndarray, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Parameter gradient (flat, same layout as ``net.params``) and input gradient.

    A 1-D ``x`` gives a 1-D input gradient; a batch gives summed parameter
    gradients over the batch.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape[-1] != net.n_out:
        raise ConfigError(f"upstream length {upstream.shape[-1]} != output size {net.n_out}")
    _, acts = net.forward_cached(x)
    gp, gx = net.backward_cached(acts, upstream)
    if x.ndim == 1:
        gx = gx[0]
    return gp, gx


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params: np.ndarray, **kw) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params), **kw)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float
              ) -> tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ConfigError(f"shape mismatch: params {params.shape}, grads {grads.shape}")
    if lr <= 0:
        raise ConfigError("learning rate must be positive")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient rejected by adam_step")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


# -- checkpoint fragments ---------------------------------------------------

def write_net(fp: BinaryIO, net: DenseNet) -> None:
    """Header: int32 count of layer sizes, then the sizes; body: float64 params. All LE."""
    sizes = net.layer_sizes
    fp.write(struct.pack("<i", len(sizes)))
    fp.write(struct.pack(f"<{len(sizes)}i", *sizes))
    fp.write(net.params.astype("<f8").tobytes())


def read_net(fp: BinaryIO, activation: str) -> DenseNet:
    (count,) = struct.unpack("<i", _read_exact(fp, 4))
    if count < 2:
        raise ConfigError(f"corrupt net fragment: {count} layer sizes")
    sizes = struct.unpack(f"<{count}i", _read_exact(fp, 4 * count))
    n = param_count(sizes)
    params = np.frombuffer(_read_exact(fp, 8 * n), dtype="<f8").astype(np.float64)
    return DenseNet(sizes, activation, params)


def _read_exact(fp: BinaryIO, n: int) -> bytes:
    data = fp.read(n)
    if len(data) != n:
        raise ConfigError("truncated checkpoint fragment")
    return data
