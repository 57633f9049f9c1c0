"""Teacher and student model containers and their forward passes.

The teacher is tail -> bidirectional body -> head, applied to normalized
per-window feature sequences.  The student clones the tail and body, keeps
the teacher's head frozen, and may merge an auxiliary CNN over raw target
slices into the tail output by addition.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError, ShapeError
from .layers import (
    CnnParams,
    ConvLayer,
    LstmDirection,
    LstmParams,
    MlpParams,
    aggregate_add,
    bilstm_apply,
    cnn_apply,
    mlp_apply,
)
from .tensor import Tensor, as_tensor


@dataclass
class Normalization:
    """Per-feature z-scoring statistics, frozen at teacher training time and
    reused verbatim for student inputs so domain shift is not silently
    absorbed by re-normalization."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "Normalization":
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def fit(cls, features: np.ndarray) -> "Normalization":
        if features.size == 0:
            return cls.identity(features.shape[-1])
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        return cls(mean, np.where(std < 1e-8, 1.0, std))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def clone(self) -> "Normalization":
        return Normalization(self.mean.copy(), self.std.copy())


@dataclass
class TeacherModel:
    tail: MlpParams
    body: LstmParams
    head: MlpParams
    norm: Normalization
    platt_a: float = 1.0
    platt_b: float = 0.0

    def __post_init__(self):
        if self.tail.output_dim != self.body.input_size:
            raise ShapeError("tail output dim must equal body input size")
        if self.body.output_dim != self.head.input_dim:
            raise ShapeError("body output dim must equal head input dim")
        if self.head.output_dim != 1:
            raise ShapeError("head must emit one logit per step")

    @property
    def feature_dim(self) -> int:
        return self.tail.input_dim

    @property
    def representation_dim(self) -> int:
        return self.body.output_dim

    def clone(self) -> "TeacherModel":
        return TeacherModel(
            self.tail.clone(), self.body.clone(), self.head.clone(), self.norm.clone(),
            self.platt_a, self.platt_b,
        )


@dataclass
class StudentModel:
    tail: MlpParams
    body: LstmParams
    head: MlpParams  # frozen: never receives gradients or optimizer updates
    norm: Normalization
    aux: CnnParams | None = None
    platt_a: float = 1.0
    platt_b: float = 0.0

    def __post_init__(self):
        if self.aux is not None and self.aux.output_dim != self.tail.output_dim:
            raise ShapeError("auxiliary output dim must equal tail output dim")


@dataclass
class ModelDims:
    """Architecture hyperparameters; head deliberately the widest module."""

    feature_dim: int = 5
    tail_hidden: tuple[int, ...] = (32, 32)
    lstm_hidden: int = 32
    head_hidden: tuple[int, ...] = (128, 128)
    cnn_channels: tuple[int, ...] = (8, 16)
    cnn_kernel: int = 7
    cnn_stride: int = 2


def init_teacher(dims: ModelDims, rng: np.random.Generator) -> TeacherModel:
    tail = MlpParams.init([dims.feature_dim, *dims.tail_hidden], rng)
    body = LstmParams.init(tail.output_dim, dims.lstm_hidden, rng)
    head = MlpParams.init([body.output_dim, *dims.head_hidden, 1], rng)
    return TeacherModel(tail, body, head, Normalization.identity(dims.feature_dim))


def init_aux(dims: ModelDims, tail_dim: int, rng: np.random.Generator) -> CnnParams:
    return CnnParams.init(
        tail_dim, rng, channels=dims.cnn_channels, kernel=dims.cnn_kernel, stride=dims.cnn_stride
    )


def _masked_input(model, x, mask) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.tail.input_dim:
        raise ShapeError(
            f"feature dimension {x.shape[-1]} does not match tail input {model.tail.input_dim}"
        )
    x = model.norm.apply(x)
    if mask is not None:
        x = x * np.asarray(mask, dtype=np.float64)[..., None]
    return x


def _mask_raw(raw, mask) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    if mask is not None:
        raw = raw * np.asarray(mask, dtype=np.float64)[..., None]
    return raw


def teacher_forward(t: TeacherModel, x, mask=None) -> tuple[Tensor, Tensor]:
    """Per-step logits and the intermediate representation q = body(tail(x)).

    ``x`` is [n, features] or [batch, n, features]; masked steps are zeroed on
    input so they cannot influence anything downstream.  Returns (q, logits)
    with logits shaped like x without its feature axis.
    """
    h = as_tensor(_masked_input(t, x, mask))
    r = mlp_apply(t.tail, h)
    q = bilstm_apply(t.body, r)
    logits = mlp_apply(t.head, q)
    return q, logits.reshape(logits.data.shape[:-1])


def student_forward(s: StudentModel, xB, xBraw=None, mask=None) -> tuple[Tensor, Tensor]:
    """Student pass q' = body'(phi[tail'(xB), aux(xBraw)]) and logits through
    the frozen head.  When no auxiliary branch is configured the raw slices
    are ignored; when one is configured they are required."""
    if s.aux is not None and xBraw is None:
        raise InputError("student has an auxiliary branch but no raw slices were given")
    h = as_tensor(_masked_input(s, xB, mask))
    u = mlp_apply(s.tail, h)
    if s.aux is not None:
        raw = as_tensor(_mask_raw(xBraw, mask))
        if raw.data.shape[:-1] != np.asarray(xB).shape[:-1]:
            raise ShapeError("raw slices and features must share leading dimensions")
        u = aggregate_add(u, cnn_apply(s.aux, raw))
    q = bilstm_apply(s.body, u)
    logits = mlp_apply(s.head, q)
    return q, logits.reshape(logits.data.shape[:-1])


# -- flat parameter access ---------------------------------------------------


def mlp_named(m: MlpParams, prefix: str):
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        yield f"{prefix}.w{i}", w
        yield f"{prefix}.b{i}", b


def lstm_named(s: LstmParams, prefix: str):
    for tag, d in (("fwd", s.fwd), ("bwd", s.bwd)):
        yield f"{prefix}.{tag}.wx", d.wx
        yield f"{prefix}.{tag}.wh", d.wh
        yield f"{prefix}.{tag}.b", d.b


def cnn_named(c: CnnParams, prefix: str):
    for i, layer in enumerate(c.layers):
        yield f"{prefix}.conv{i}.w", layer.w
        yield f"{prefix}.conv{i}.b", layer.b
    yield f"{prefix}.proj.w", c.proj_w
    yield f"{prefix}.proj.b", c.proj_b


def named_parameters(model) -> dict[str, np.ndarray]:
    """Flat name -> array view of a TeacherModel or StudentModel (the arrays
    are the live model arrays, not copies)."""
    out: dict[str, np.ndarray] = {}
    out.update(mlp_named(model.tail, "tail"))
    out.update(lstm_named(model.body, "body"))
    out.update(mlp_named(model.head, "head"))
    if isinstance(model, StudentModel) and model.aux is not None:
        out.update(cnn_named(model.aux, "aux"))
    return out


def trainable_parameter_names(model, freeze_head: bool) -> list[str]:
    names = [k for k in named_parameters(model) if not (freeze_head and k.startswith("head."))]
    return names


def _tensorize_mlp(m: MlpParams, leaves: dict[str, Tensor], prefix: str, trainable) -> MlpParams:
    ws, bs = [], []
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        tw = Tensor(w, requires_grad=f"{prefix}.w{i}" in trainable)
        tb = Tensor(b, requires_grad=f"{prefix}.b{i}" in trainable)
        leaves[f"{prefix}.w{i}"], leaves[f"{prefix}.b{i}"] = tw, tb
        ws.append(tw)
        bs.append(tb)
    out = object.__new__(MlpParams)
    out.weights, out.biases = ws, bs
    return out


def _tensorize_lstm(s: LstmParams, leaves: dict[str, Tensor], prefix: str, trainable) -> LstmParams:
    def direction(tag: str, d: LstmDirection) -> LstmDirection:
        parts = {}
        for nm, arr in (("wx", d.wx), ("wh", d.wh), ("b", d.b)):
            key = f"{prefix}.{tag}.{nm}"
            t = Tensor(arr, requires_grad=key in trainable)
            leaves[key] = t
            parts[nm] = t
        return LstmDirection(**parts)

    return LstmParams(s.input_size, s.hidden_size, direction("fwd", s.fwd), direction("bwd", s.bwd))


def _tensorize_cnn(c: CnnParams, leaves: dict[str, Tensor], prefix: str, trainable) -> CnnParams:
    layers = []
    for i, layer in enumerate(c.layers):
        tw = Tensor(layer.w, requires_grad=f"{prefix}.conv{i}.w" in trainable)
        tb = Tensor(layer.b, requires_grad=f"{prefix}.conv{i}.b" in trainable)
        leaves[f"{prefix}.conv{i}.w"], leaves[f"{prefix}.conv{i}.b"] = tw, tb
        layers.append(ConvLayer(tw, tb, layer.stride))
    pw = Tensor(c.proj_w, requires_grad=f"{prefix}.proj.w" in trainable)
    pb = Tensor(c.proj_b, requires_grad=f"{prefix}.proj.b" in trainable)
    leaves[f"{prefix}.proj.w"], leaves[f"{prefix}.proj.b"] = pw, pb
    out = object.__new__(CnnParams)
    out.layers, out.proj_w, out.proj_b = layers, pw, pb
    return out


def tensorize(model, trainable: set[str]) -> tuple[object, dict[str, Tensor]]:
    """Build a gradient-tracking view of a model for one training step.

    Returns (view, leaves) where ``view`` mirrors the model's structure with
    tensors in place of arrays, and ``leaves`` maps parameter names to those
    tensors.  Names absent from ``trainable`` become constants: they receive
    no gradient entries (this is how the frozen head is enforced).
    """
    leaves: dict[str, Tensor] = {}
    tail = _tensorize_mlp(model.tail, leaves, "tail", trainable)
    body = _tensorize_lstm(model.body, leaves, "body", trainable)
    head = _tensorize_mlp(model.head, leaves, "head", trainable)
    if isinstance(model, StudentModel):
        aux = _tensorize_cnn(model.aux, leaves, "aux", trainable) if model.aux is not None else None
        view = object.__new__(StudentModel)
        view.tail, view.body, view.head, view.aux = tail, body, head, aux
        view.norm, view.platt_a, view.platt_b = model.norm, model.platt_a, model.platt_b
    else:
        view = object.__new__(TeacherModel)
        view.tail, view.body, view.head = tail, body, head
        view.norm, view.platt_a, view.platt_b = model.norm, model.platt_a, model.platt_b
    return view, leaves


def collect_grads(leaves: dict[str, Tensor], trainable: set[str]) -> dict[str, np.ndarray]:
    out = {}
    for name in trainable:
        leaf = leaves[name]
        out[name] = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
    return out
