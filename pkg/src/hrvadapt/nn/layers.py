"""Parameter containers and forward maps for the model building blocks:
per-step MLP, bidirectional LSTM, 1-D CNN over raw slices, and the additive
aggregation that merges the tail and auxiliary branches.

Parameters live as plain float64 arrays; a training step wraps them in
gradient-tracking tensors via the ``tensorize_*`` helpers, so the same apply
functions serve inference (no graph) and training (full graph).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, concat, conv1d, stack


def _uniform_fanin(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    limit = 1.0 / np.sqrt(max(1, fan_in))
    return rng.uniform(-limit, limit, size=shape)


# -- multilayer perceptron -------------------------------------------------


@dataclass
class MlpParams:
    """Affine layers with rectifier hidden activations and a linear output."""

    weights: list  # each (in, out)
    biases: list  # each (out,)

    @classmethod
    def init(cls, sizes: list[int], rng: np.random.Generator) -> "MlpParams":
        if len(sizes) < 2:
            raise ShapeError("an MLP needs at least input and output sizes")
        weights = [_uniform_fanin(rng, sizes[i], (sizes[i], sizes[i + 1])) for i in range(len(sizes) - 1)]
        biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
        return cls(weights, biases)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("weights and biases must pair up")
        for i in range(len(self.weights) - 1):
            if _dim(self.weights[i], 1) != _dim(self.weights[i + 1], 0):
                raise ShapeError("consecutive MLP layer dimensions must match")

    @property
    def input_dim(self) -> int:
        return _dim(self.weights[0], 0)

    @property
    def output_dim(self) -> int:
        return _dim(self.weights[-1], 1)

    def clone(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def _dim(arr, axis: int) -> int:
    data = arr.data if isinstance(arr, Tensor) else arr
    return data.shape[axis]


def mlp_apply(m: MlpParams, x) -> Tensor:
    """Apply the MLP independently along the last axis of ``x`` ([..., in] ->
    [..., out])."""
    x = as_tensor(x)
    in_dim = m.input_dim
    if x.data.shape[-1] != in_dim:
        raise ShapeError(f"MLP expects trailing dimension {in_dim}, got {x.data.shape[-1]}")
    lead = x.data.shape[:-1]
    h = x.reshape(-1, in_dim) if x.data.ndim != 2 else x
    last = len(m.weights) - 1
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        h = h @ as_tensor(w) + as_tensor(b)
        if i != last:
            h = h.relu()
    if lead != h.data.shape[:-1]:
        h = h.reshape(*lead, m.output_dim)
    return h


# -- bidirectional LSTM ------------------------------------------------------


@dataclass
class LstmDirection:
    wx: np.ndarray  # (in, 4h), gate order i, f, g, o
    wh: np.ndarray  # (h, 4h)
    b: np.ndarray  # (4h,)


@dataclass
class LstmParams:
    """Two independent recurrences; outputs are the concatenation of the
    forward and backward hidden states, so output dim = 2 * hidden_size."""

    input_size: int
    hidden_size: int
    fwd: LstmDirection
    bwd: LstmDirection

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> "LstmParams":
        def direction():
            b = np.zeros(4 * hidden_size)
            b[hidden_size : 2 * hidden_size] = 1.0  # forget gate bias
            return LstmDirection(
                wx=_uniform_fanin(rng, input_size, (input_size, 4 * hidden_size)),
                wh=_uniform_fanin(rng, hidden_size, (hidden_size, 4 * hidden_size)),
                b=b,
            )

        return cls(input_size, hidden_size, direction(), direction())

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden_size

    def clone(self) -> "LstmParams":
        return LstmParams(
            self.input_size,
            self.hidden_size,
            LstmDirection(self.fwd.wx.copy(), self.fwd.wh.copy(), self.fwd.b.copy()),
            LstmDirection(self.bwd.wx.copy(), self.bwd.wh.copy(), self.bwd.b.copy()),
        )


def _lstm_direction(
    d: LstmDirection, seq2d: Tensor, batch: int, n: int, hidden: int
) -> list[Tensor]:
    # the input projection of every step is one large matmul; the recurrence
    # itself only adds h @ wh per step
    xproj = (seq2d @ as_tensor(d.wx) + as_tensor(d.b)).reshape(batch, n, 4 * hidden)
    wh = as_tensor(d.wh)
    h = as_tensor(np.zeros((batch, hidden)))
    c = as_tensor(np.zeros((batch, hidden)))
    out = []
    for t in range(n):
        gates = xproj[:, t, :] + h @ wh
        i = gates[:, :hidden].sigmoid()
        f = gates[:, hidden : 2 * hidden].sigmoid()
        g = gates[:, 2 * hidden : 3 * hidden].tanh()
        o = gates[:, 3 * hidden :].sigmoid()
        c = f * c + i * g
        h = o * c.tanh()
        out.append(h)
    return out


def bilstm_apply(s: LstmParams, seq) -> Tensor:
    """Run both recurrences over ``seq`` ([n, in] or [batch, n, in]) and
    concatenate their hidden states per step ([..., n, 2h])."""
    seq = as_tensor(seq)
    squeeze = seq.data.ndim == 2
    if squeeze:
        seq = seq.reshape(1, *seq.data.shape)
    if seq.data.ndim != 3 or seq.data.shape[-1] != s.input_size:
        raise ShapeError(
            f"BiLSTM expects [batch, n, {s.input_size}], got {tuple(seq.data.shape)}"
        )
    batch, n, _ = seq.data.shape
    if n < 1:
        raise ShapeError("BiLSTM needs at least one time step")
    seq2d = seq.reshape(batch * n, s.input_size)
    fwd = _lstm_direction(s.fwd, seq2d, batch, n, s.hidden_size)
    rev_in = seq[:, ::-1, :].reshape(batch * n, s.input_size)
    rev = _lstm_direction(s.bwd, rev_in, batch, n, s.hidden_size)[::-1]
    out = stack([concat([f, r], axis=1) for f, r in zip(fwd, rev)], axis=1)
    if squeeze:
        out = out.reshape(n, s.output_dim)
    return out


# -- 1-D convolutional auxiliary branch -------------------------------------


@dataclass
class ConvLayer:
    w: np.ndarray  # (out_ch, in_ch, kernel)
    b: np.ndarray  # (out_ch,)
    stride: int


@dataclass
class CnnParams:
    """Strided rectified convolutions over each raw window slice, mean-pooled
    along the remaining time axis, then projected to the tail output width."""

    layers: list[ConvLayer]
    proj_w: np.ndarray  # (last_channels, out_dim)
    proj_b: np.ndarray  # (out_dim,)

    @classmethod
    def init(
        cls,
        out_dim: int,
        rng: np.random.Generator,
        channels: tuple[int, ...] = (8, 16),
        kernel: int = 7,
        stride: int = 2,
    ) -> "CnnParams":
        layers = []
        in_ch = 1
        for ch in channels:
            layers.append(
                ConvLayer(
                    w=_uniform_fanin(rng, in_ch * kernel, (ch, in_ch, kernel)),
                    b=np.zeros(ch),
                    stride=stride,
                )
            )
            in_ch = ch
        return cls(
            layers,
            proj_w=_uniform_fanin(rng, in_ch, (in_ch, out_dim)),
            proj_b=np.zeros(out_dim),
        )

    @property
    def output_dim(self) -> int:
        return _dim(self.proj_w, 1)

    def clone(self) -> "CnnParams":
        return CnnParams(
            [ConvLayer(l.w.copy(), l.b.copy(), l.stride) for l in self.layers],
            self.proj_w.copy(),
            self.proj_b.copy(),
        )


def cnn_apply(c: CnnParams, raw) -> Tensor:
    """Encode raw slices ([n, slice_len] or [batch, n, slice_len]) into
    per-step vectors ([..., n, out_dim])."""
    raw = as_tensor(raw)
    squeeze = raw.data.ndim == 2
    if squeeze:
        raw = raw.reshape(1, *raw.data.shape)
    if raw.data.ndim != 3:
        raise ShapeError(f"CNN expects [batch, n, slice_len], got {tuple(raw.data.shape)}")
    batch, n, slice_len = raw.data.shape
    h = raw.reshape(batch * n, slice_len, 1)
    for layer in c.layers:
        h = conv1d(h, as_tensor(layer.w), as_tensor(layer.b), stride=layer.stride).relu()
    h = h.mean(axis=1)
    h = h @ as_tensor(c.proj_w) + as_tensor(c.proj_b)
    out = h.reshape(batch, n, c.output_dim)
    if squeeze:
        out = out.reshape(n, c.output_dim)
    return out


def aggregate_add(u, v) -> Tensor:
    """Elementwise sum of the tail and auxiliary branches; shapes must match
    exactly (no broadcasting)."""
    u, v = as_tensor(u), as_tensor(v)
    if u.data.shape != v.data.shape:
        raise ShapeError(f"aggregation shapes differ: {u.data.shape} vs {v.data.shape}")
    return u + v
