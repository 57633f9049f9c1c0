"""Teacher pre-training, Platt calibration, student cloning, the hybrid
distillation loss, and the training loops shared by every experiment variant.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .errors import CalibrationError, DataError, ValidationError
from .features import PairedExample
from .nn.layers import CnnParams
from .nn.models import (
    ModelDims,
    Normalization,
    StudentModel,
    TeacherModel,
    collect_grads,
    init_aux,
    init_teacher,
    named_parameters,
    student_forward,
    teacher_forward,
    tensorize,
)
from .nn.optim import AdamState, adam_step
from .nn.tensor import Tensor, as_tensor

LOSS_MODES = ("bce_labels", "hybrid_distill", "cross_entropy_da")


def _loss_value(loss) -> float:
    value = float(loss.data)
    if not np.isfinite(value):
        raise DataError("training loss is not finite (diverged or bad inputs)")
    return value


@dataclass(frozen=True)
class HybridLossConfig:
    """Weights of the two distillation terms: mean squared logit error plus
    alpha times the mean squared representation error."""

    alpha: float = 1.0
    include_output_term: bool = True
    include_activation_term: bool = True

    def __post_init__(self):
        if self.alpha < 0:
            raise ValidationError("alpha must be >= 0")
        if not (self.include_output_term or self.include_activation_term):
            raise ValidationError("at least one loss term must be enabled")


@dataclass(frozen=True)
class PlattParams:
    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValidationError("Platt parameters must be finite")

    def apply(self, z: np.ndarray) -> np.ndarray:
        return self.a * np.asarray(z) + self.b


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    patience: int = 10
    loss_mode: str = "hybrid_distill"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValidationError("epochs must be >= 0 and batch_size >= 1")
        if self.loss_mode not in LOSS_MODES:
            raise ValidationError(f"loss_mode must be one of {LOSS_MODES}")


# -- batching ----------------------------------------------------------------


@dataclass
class Batch:
    xA: np.ndarray | None
    xB: np.ndarray | None
    xBraw: np.ndarray | None
    labels: np.ndarray  # NaN where absent
    mask: np.ndarray
    teacher_q: np.ndarray | None = None
    teacher_p: np.ndarray | None = None


def _stack(examples: list[PairedExample], idxs, attr: str):
    arrs = [getattr(examples[i], attr) for i in idxs]
    if any(a is None for a in arrs):
        return None
    return np.stack(arrs)


def _make_batch(examples, idxs) -> Batch:
    return Batch(
        xA=_stack(examples, idxs, "xA"),
        xB=_stack(examples, idxs, "xB"),
        xBraw=_stack(examples, idxs, "xBraw"),
        labels=np.stack([examples[i].labels for i in idxs]),
        mask=np.stack([examples[i].mask for i in idxs]),
    )


def _batch_plan(examples, batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    """Shuffled batches of examples grouped by sequence length."""
    buckets: dict[int, list[int]] = {}
    for i, ex in enumerate(examples):
        buckets.setdefault(ex.n_steps, []).append(i)
    batches: list[list[int]] = []
    for n in sorted(buckets):
        idxs = np.array(buckets[n])
        idxs = idxs[rng.permutation(idxs.size)]
        for lo in range(0, idxs.size, batch_size):
            batches.append(idxs[lo : lo + batch_size].tolist())
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


# -- losses --------------------------------------------------------------------


def masked_bce_loss(logits: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over steps that are unmasked and labelled."""
    label_mask = mask * np.isfinite(labels)
    n = float(label_mask.sum())
    if n == 0:
        raise DataError("no labelled unmasked steps to train on")
    y = np.nan_to_num(labels, nan=0.0)
    per_step = (-logits).softplus() * y + logits.softplus() * (1.0 - y)
    return (per_step * label_mask).sum() / n


def hybrid_loss(
    student_q: Tensor,
    student_logits: Tensor,
    teacher_q,
    teacher_logits,
    mask,
    cfg: HybridLossConfig = HybridLossConfig(),
) -> Tensor:
    """The distillation objective

        (1/n) sum_i (pB_i - pA_i)^2  +  (alpha/(n d)) sum_ij (q'_ij - q_ij)^2

    over unmasked steps only; n is the unmasked step count and d the
    representation width.  Teacher quantities are treated as constants."""
    student_q = as_tensor(student_q)
    student_logits = as_tensor(student_logits)
    teacher_q = np.asarray(teacher_q, dtype=np.float64)
    teacher_logits = np.asarray(teacher_logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if student_q.data.shape != teacher_q.shape:
        raise ValidationError(
            f"representation shapes differ: {student_q.data.shape} vs {teacher_q.shape}"
        )
    if student_logits.data.shape != teacher_logits.shape or mask.shape != teacher_logits.shape:
        raise ValidationError("logit and mask shapes must match")
    n = float(mask.sum())
    if n == 0:
        raise DataError("hybrid loss needs at least one unmasked step")
    d = student_q.data.shape[-1]

    loss = as_tensor(0.0)
    if cfg.include_output_term:
        diff = student_logits - teacher_logits
        loss = loss + (diff * diff * mask).sum() / n
    if cfg.include_activation_term:
        qdiff = student_q - teacher_q
        loss = loss + (cfg.alpha / (n * d)) * (qdiff * qdiff * mask[..., None]).sum()
    return loss


# -- Platt calibration ---------------------------------------------------------


def _platt_nll(z: np.ndarray, y: np.ndarray, a: float, b: float) -> float:
    s = a * z + b
    # -log sigma(s) = softplus(-s); -log(1 - sigma(s)) = softplus(s)
    return float(np.sum(y * np.logaddexp(0.0, -s) + (1.0 - y) * np.logaddexp(0.0, s)))


def platt_calibrate(
    logits, labels, tol: float = 1e-8, max_iter: int = 60
) -> PlattParams:
    """Fit (a, b) minimizing the negative log-likelihood of sigmoid(a z + b)
    by damped Newton steps from the identity (1, 0).

    Targets carry the method's prior correction (positives fit toward
    (n+ + 1)/(n+ + 2), negatives toward 1/(n- + 2)), which keeps the scale
    finite when the calibration set happens to be separable.  A final guard
    rejects any fit whose raw-label likelihood is worse than the identity's,
    so calibration can never end worse than it began."""
    z = np.asarray(logits, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if z.shape != y.shape or z.size == 0:
        raise ValidationError("logits and labels must be non-empty with equal length")
    if not (np.any(y == 0) and np.any(y == 1)):
        raise CalibrationError("Platt calibration needs both classes present")
    n_pos = float(np.sum(y == 1))
    n_neg = float(np.sum(y == 0))
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def objective(a: float, b: float) -> float:
        s = a * z + b
        return float(np.sum(t * np.logaddexp(0.0, -s) + (1.0 - t) * np.logaddexp(0.0, s)))

    a, b = 1.0, 0.0
    obj = objective(a, b)
    for _ in range(max_iter):
        p = expit(a * z + b)
        r = p - t
        grad = np.array([np.dot(r, z), np.sum(r)])
        if np.linalg.norm(grad) < tol:
            break
        w = p * (1.0 - p)
        h11 = np.dot(w, z * z)
        h12 = np.dot(w, z)
        h22 = np.sum(w)
        hess = np.array([[h11, h12], [h12, h22]]) + 1e-10 * np.eye(2)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        improved = False
        for _ in range(40):
            cand = objective(a - scale * step[0], b - scale * step[1])
            if cand < obj:
                a, b = a - scale * step[0], b - scale * step[1]
                obj = cand
                improved = True
                break
            scale *= 0.5
        if not improved:
            break
    if _platt_nll(z, y, a, b) > _platt_nll(z, y, 1.0, 0.0):
        return PlattParams(1.0, 0.0)
    return PlattParams(a, b)


def calibrate_teacher(teacher: TeacherModel, examples: list[PairedExample]) -> TeacherModel:
    """Fit Platt parameters on held-out labelled source examples and return a
    copy of the teacher carrying them."""
    logits, labels = [], []
    for ex in examples:
        _, z = teacher_forward(teacher, ex.xA, ex.mask)
        keep = ex.label_mask > 0
        logits.append(z.data[keep])
        labels.append(ex.labels[keep])
    platt = platt_calibrate(np.concatenate(logits), np.concatenate(labels))
    out = teacher.clone()
    out.platt_a, out.platt_b = platt.a, platt.b
    return out


# -- cloning -----------------------------------------------------------------


def clone_student(
    t: TeacherModel,
    use_cnn: bool = False,
    dims: ModelDims | None = None,
    seed: int = 0,
) -> StudentModel:
    """Clone the teacher's tail and body value-for-value, attach its head
    frozen, and (optionally) initialize a fresh auxiliary CNN."""
    aux: CnnParams | None = None
    if use_cnn:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(11,)))
        aux = init_aux(dims or ModelDims(), t.tail.output_dim, rng)
    return StudentModel(
        tail=t.tail.clone(),
        body=t.body.clone(),
        head=t.head.clone(),
        norm=t.norm.clone(),
        aux=aux,
        platt_a=t.platt_a,
        platt_b=t.platt_b,
    )


# -- training loops ------------------------------------------------------------


def _fit_normalization(examples: list[PairedExample], attr: str) -> Normalization:
    rows = []
    for ex in examples:
        x = getattr(ex, attr)
        keep = ex.mask > 0
        if x is not None and keep.any():
            rows.append(x[keep])
    if not rows:
        raise DataError("no valid windows to fit normalization statistics")
    return Normalization.fit(np.concatenate(rows))


def _check_labelled(examples: list[PairedExample]) -> None:
    if not examples:
        raise DataError("training data is empty")
    if not any(ex.label_mask.sum() > 0 for ex in examples):
        raise DataError("training data has no labelled unmasked windows")


def pretrain_teacher(
    data: list[PairedExample],
    cfg: TrainConfig,
    dims: ModelDims | None = None,
) -> tuple[TeacherModel, list[float]]:
    """Pre-train a teacher on labelled source features with masked per-window
    binary cross-entropy.  Deterministic given cfg.seed; returns the model and
    the per-epoch training-loss curve."""
    _check_labelled(data)
    dims = dims or ModelDims(feature_dim=data[0].xA.shape[-1])
    root = np.random.SeedSequence(cfg.seed)
    init_rng, batch_rng = (np.random.default_rng(s) for s in root.spawn(2))
    model = init_teacher(dims, init_rng)
    model.norm = _fit_normalization(data, "xA")

    trainable = set(named_parameters(model))
    params = named_parameters(model)
    state = AdamState.for_params(params)
    curve: list[float] = []
    for _ in range(cfg.epochs):
        losses = []
        for idxs in _batch_plan(data, cfg.batch_size, batch_rng):
            batch = _make_batch(data, idxs)
            view, leaves = tensorize(model, trainable)
            _, logits = teacher_forward(view, batch.xA, batch.mask)
            loss = masked_bce_loss(logits, batch.labels, batch.mask)
            loss.backward()
            adam_step(params, collect_grads(leaves, trainable), state, lr=cfg.lr)
            losses.append(_loss_value(loss))
        curve.append(float(np.mean(losses)))
    return model, curve


def _teacher_targets(teacher: TeacherModel, batch: Batch) -> Batch:
    """Fill the calibrated distillation targets (q, a*z + b) for one batch.

    Targets are computed on the batch exactly as shaped for the student's
    pass, so a student whose forward reproduces the teacher's sees a
    bit-exact zero loss (same arithmetic, same array shapes)."""
    platt = PlattParams(teacher.platt_a, teacher.platt_b)
    q, z = teacher_forward(teacher, batch.xA, batch.mask)
    batch.teacher_q = q.data
    batch.teacher_p = platt.apply(z.data)
    return batch


def _forward_for(model, batch: Batch) -> tuple[Tensor, Tensor]:
    if isinstance(model, StudentModel):
        return student_forward(model, batch.xB, batch.xBraw, batch.mask)
    return teacher_forward(model, batch.xB, batch.mask)


def train_student(
    student,
    teacher: TeacherModel,
    data: list[PairedExample],
    cfg: TrainConfig,
    loss_cfg: HybridLossConfig = HybridLossConfig(),
    val_data: list[PairedExample] | None = None,
) -> tuple[object, list[float]]:
    """Train a student (frozen head) or a full teacher-shaped model (transfer
    learning) against the pre-trained teacher on paired examples.

    ``cfg.loss_mode`` picks the objective: ``hybrid_distill`` matches the
    teacher's calibrated logits and representations; ``cross_entropy_da``
    replaces the logit term with binary cross-entropy against window labels
    (the representation term still follows ``loss_cfg``).  The head of a
    StudentModel never receives gradients or updates.

    ``val_data`` enables early stopping (patience cfg.patience) and applies
    only in cross_entropy_da mode; the label-free distillation mode always
    runs its fixed epoch budget."""
    if not data:
        raise DataError("training data is empty")
    if any(ex.xB is None for ex in data):
        raise DataError("paired training data must provide target features")
    if cfg.loss_mode == "cross_entropy_da":
        _check_labelled(data)
    elif cfg.loss_mode != "hybrid_distill":
        raise ValidationError(f"train_student cannot use loss_mode {cfg.loss_mode!r}")
    early_stop = cfg.loss_mode == "cross_entropy_da" and val_data

    freeze_head = isinstance(student, StudentModel)
    trainable = {
        k for k in named_parameters(student) if not (freeze_head and k.startswith("head."))
    }
    params = named_parameters(student)
    state = AdamState.for_params({k: params[k] for k in trainable})
    batch_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))

    def val_loss() -> float:
        total, count = 0.0, 0.0
        for ex in val_data:
            batch = _make_batch([ex], [0])
            _, logits = _forward_for(student, batch)
            lmask = ex.label_mask
            if lmask.sum() == 0:
                continue
            y = np.nan_to_num(ex.labels, nan=0.0)
            z = logits.data[0]
            per = y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)
            total += float((per * lmask).sum())
            count += float(lmask.sum())
        if count == 0:
            raise DataError("validation data has no labelled windows")
        return total / count

    best = None
    best_loss = np.inf
    since_best = 0
    curve: list[float] = []
    for _ in range(cfg.epochs):
        losses = []
        for idxs in _batch_plan(data, cfg.batch_size, batch_rng):
            batch = _teacher_targets(teacher, _make_batch(data, idxs))
            view, leaves = tensorize(student, trainable)
            q, logits = _forward_for(view, batch)
            if cfg.loss_mode == "hybrid_distill":
                loss = hybrid_loss(q, logits, batch.teacher_q, batch.teacher_p, batch.mask, loss_cfg)
            else:
                loss = masked_bce_loss(logits, batch.labels, batch.mask)
                if loss_cfg.include_activation_term:
                    loss = loss + hybrid_loss(
                        q,
                        logits,
                        batch.teacher_q,
                        batch.teacher_p,
                        batch.mask,
                        replace(loss_cfg, include_output_term=False),
                    )
            loss.backward()
            adam_step(params, collect_grads(leaves, trainable), state, lr=cfg.lr)
            losses.append(_loss_value(loss))
        curve.append(float(np.mean(losses)))
        if early_stop:
            v = val_loss()
            if v < best_loss - 1e-12:
                best_loss = v
                best = {k: p.copy() for k, p in params.items()}
                since_best = 0
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    break
    if best is not None:
        for k, p in params.items():
            p[...] = best[k]
    return student, curve


def train_supervised(
    model,
    data: list[PairedExample],
    cfg: TrainConfig,
    *,
    domain: str = "target",
    val_data: list[PairedExample] | None = None,
) -> tuple[object, list[float]]:
    """Label-supervised training (binary cross-entropy) of a teacher-shaped
    model on source or target features, with optional early stopping on a
    validation split (patience cfg.patience, best weights restored)."""
    _check_labelled(data)
    attr = "xA" if domain == "source" else "xB"
    if any(getattr(ex, attr) is None for ex in data):
        raise DataError(f"training data lacks {attr} features")

    trainable = set(named_parameters(model))
    params = named_parameters(model)
    state = AdamState.for_params(params)
    batch_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))

    def val_loss() -> float:
        total, count = 0.0, 0.0
        for ex in val_data:
            x = getattr(ex, attr)
            _, logits = teacher_forward(model, x, ex.mask)
            lmask = ex.label_mask
            if lmask.sum() == 0:
                continue
            y = np.nan_to_num(ex.labels, nan=0.0)
            z = logits.data
            per = y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)
            total += float((per * lmask).sum())
            count += float(lmask.sum())
        if count == 0:
            raise DataError("validation data has no labelled windows")
        return total / count

    best = None
    best_loss = np.inf
    since_best = 0
    curve: list[float] = []
    for _ in range(cfg.epochs):
        losses = []
        for idxs in _batch_plan(data, cfg.batch_size, batch_rng):
            batch = _make_batch(data, idxs)
            view, leaves = tensorize(model, trainable)
            x = batch.xA if domain == "source" else batch.xB
            _, logits = teacher_forward(view, x, batch.mask)
            loss = masked_bce_loss(logits, batch.labels, batch.mask)
            loss.backward()
            adam_step(params, collect_grads(leaves, trainable), state, lr=cfg.lr)
            losses.append(_loss_value(loss))
        curve.append(float(np.mean(losses)))
        if val_data is not None:
            v = val_loss()
            if v < best_loss - 1e-12:
                best_loss = v
                best = {k: p.copy() for k, p in params.items()}
                since_best = 0
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    break
    if best is not None:
        for k, p in params.items():
            p[...] = best[k]
    return model, curve
