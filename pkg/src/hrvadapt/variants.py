"""The experiment matrix: every named training/evaluation recipe from the
main comparison table and the ablation table, as configurable procedures."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError
from .features import PairedExample
from .metrics import FoldPlan, PredictionSet, loso_folds
from .nn.models import (
    ModelDims,
    StudentModel,
    TeacherModel,
    init_teacher,
    student_forward,
    teacher_forward,
)
from .training import (
    HybridLossConfig,
    TrainConfig,
    _fit_normalization,
    calibrate_teacher,
    clone_student,
    pretrain_teacher,
    train_student,
    train_supervised,
)

#: main-table rows, in presentation order (target-only first, source-teacher last)
TABLE1_VARIANTS = (
    "label_supervised_target_only",
    "teacher_student_target_only",
    "label_supervised_domain_adaptation",
    "label_supervised_transfer_learning",
    "naive_transfer",
    "teacher_student_transfer_learning",
    "teacher_student_domain_adaptation",
    "teacher_on_source",
)

#: ablation rows; these are teacher-student domain-adaptation recipes with
#: individual ingredients removed
ABLATION_VARIANTS = ("minimal", "no_cnn", "no_output_loss", "no_activation_loss", "full")

ALL_VARIANTS = TABLE1_VARIANTS + ABLATION_VARIANTS


@dataclass(frozen=True)
class Recipe:
    kind: str  # fresh_supervised | fresh_distill | student_da | full_finetune | frozen_eval
    loss_mode: str = "hybrid_distill"
    include_output_term: bool = True
    include_activation_term: bool = True
    default_use_cnn: bool = False
    eval_domain: str = "target"
    label_supervised: bool = False


_RECIPES: dict[str, Recipe] = {
    "label_supervised_target_only": Recipe("fresh_supervised", "bce_labels", label_supervised=True),
    "teacher_student_target_only": Recipe(
        "fresh_distill", include_activation_term=False
    ),
    "label_supervised_domain_adaptation": Recipe(
        "student_da", "cross_entropy_da", default_use_cnn=True, label_supervised=True
    ),
    "label_supervised_transfer_learning": Recipe(
        "full_finetune", "bce_labels", label_supervised=True
    ),
    "naive_transfer": Recipe("frozen_eval"),
    "teacher_student_transfer_learning": Recipe("full_finetune", "hybrid_distill"),
    "teacher_student_domain_adaptation": Recipe("student_da", default_use_cnn=True),
    "teacher_on_source": Recipe("frozen_eval", eval_domain="source"),
    # ablations
    "full": Recipe("student_da", default_use_cnn=True),
    "no_cnn": Recipe("student_da", default_use_cnn=False),
    "no_output_loss": Recipe("student_da", include_output_term=False, default_use_cnn=True),
    "no_activation_loss": Recipe("student_da", include_activation_term=False, default_use_cnn=True),
    "minimal": Recipe("student_da", include_activation_term=False, default_use_cnn=False),
}


@dataclass(frozen=True)
class VariantSpec:
    """A named row of the experiment matrix, plus its training overrides."""

    name: str
    use_cnn: bool | None = None  # None: the recipe's default
    epochs: int | None = None
    lr: float | None = None
    seed: int | None = None
    alpha: float = 1.0

    def __post_init__(self):
        if self.name not in _RECIPES:
            raise ConfigError(
                f"unknown variant {self.name!r}; known variants: {', '.join(ALL_VARIANTS)}"
            )

    @property
    def recipe(self) -> Recipe:
        return _RECIPES[self.name]

    def resolved_use_cnn(self, data_has_raw: bool | None = None) -> bool:
        """The effective auxiliary-branch flag.  An unset flag follows the
        recipe's default but drops to False when the paired data carries no
        raw slices (synthetic mode omits the CNN); an explicit True is kept
        and will fail loudly downstream if the slices are missing."""
        use = self.recipe.default_use_cnn if self.use_cnn is None else self.use_cnn
        if self.use_cnn is None and data_has_raw is False:
            use = False
        return use and self.recipe.kind == "student_da"

    def loss_config(self) -> HybridLossConfig:
        r = self.recipe
        return HybridLossConfig(
            alpha=self.alpha,
            include_output_term=r.include_output_term,
            include_activation_term=r.include_activation_term,
        )

    def train_config(self, base: TrainConfig, seed: int) -> TrainConfig:
        return replace(
            base,
            epochs=base.epochs if self.epochs is None else self.epochs,
            lr=base.lr if self.lr is None else self.lr,
            loss_mode=self.recipe.loss_mode,
            seed=seed,
        )

    def config_digest(self, base: TrainConfig, extra: dict | None = None) -> str:
        payload = {
            "name": self.name,
            "use_cnn": self.resolved_use_cnn(),
            "loss": {
                "alpha": self.alpha,
                "output_term": self.recipe.include_output_term,
                "activation_term": self.recipe.include_activation_term,
            },
            "mode": self.recipe.loss_mode,
            "epochs": base.epochs if self.epochs is None else self.epochs,
            "lr": base.lr if self.lr is None else self.lr,
            "batch_size": base.batch_size,
            "extra": extra or {},
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def derive_seed(base: int, *parts: int) -> int:
    seq = np.random.SeedSequence(entropy=base, spawn_key=tuple(int(p) for p in parts))
    return int(seq.generate_state(1, np.uint64)[0] % (2**31))


def _split_holdout(ids: list, fraction: float, seed: int) -> tuple[list, list]:
    """Deterministic subject-level split; the holdout gets at least one
    subject whenever there are two or more."""
    ids = sorted(ids)
    if len(ids) < 2:
        return ids, []
    k = max(1, int(round(fraction * len(ids))))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(97,)))
    order = rng.permutation(len(ids))
    hold = {ids[i] for i in order[:k]}
    return [s for s in ids if s not in hold], sorted(hold)


def prepare_teacher(
    source_data: dict[str, list[PairedExample]],
    cfg: TrainConfig,
    dims: ModelDims,
    calib_fraction: float = 0.1,
) -> TeacherModel:
    """Pre-train on most source subjects, then Platt-calibrate on the held-out
    rest; the calibrated logit a*z+b is the distillation target downstream."""
    train_ids, calib_ids = _split_holdout(list(source_data), calib_fraction, cfg.seed)
    train_examples = [ex for sid in train_ids for ex in source_data[sid]]
    teacher, _ = pretrain_teacher(train_examples, cfg, dims)
    calib_examples = [ex for sid in calib_ids for ex in source_data[sid]]
    if calib_examples:
        teacher = calibrate_teacher(teacher, calib_examples)
    return teacher


def predict_examples(model, examples: list[PairedExample], domain: str = "target") -> PredictionSet:
    """Per-window logits on every unmasked, labelled window."""
    rows = []
    for ex in examples:
        if isinstance(model, StudentModel):
            _, logits = student_forward(model, ex.xB, ex.xBraw, ex.mask)
        else:
            x = ex.xA if domain == "source" else ex.xB
            if x is None:
                raise DataError(f"example for {ex.subject_id} lacks {domain} features")
            _, logits = teacher_forward(model, x, ex.mask)
        keep = ex.label_mask > 0
        for w, z, y in zip(
            ex.window_indices[keep], logits.data[keep], ex.labels[keep]
        ):
            rows.append((ex.subject_id, int(w), float(z), int(y)))
    return PredictionSet.from_rows(rows)


def _fresh_model(data: list[PairedExample], dims: ModelDims, seed: int) -> TeacherModel:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(5,)))
    model = init_teacher(dims, rng)
    model.norm = _fit_normalization(data, "xB")
    return model


def run_variant(
    spec: VariantSpec,
    teacher: TeacherModel,
    paired: dict[str, list[PairedExample]],
    base_cfg: TrainConfig,
    dims: ModelDims,
    folds: FoldPlan | None = None,
    holdout_fraction: float = 0.1,
) -> list[PredictionSet]:
    """Execute one named recipe under leave-one-subject-out folds and return
    the per-fold predictions on each fold's validation subject.

    The teacher is the fixed source-domain model; only target-side training
    happens inside the folds.  Frozen-evaluation variants perform zero
    updates.  Label-supervised variants early-stop on a held-out slice of the
    fold's training subjects."""
    recipe = spec.recipe
    if folds is None:
        folds = loso_folds(list(paired))
    data_has_raw = all(
        ex.xBraw is not None for exs in paired.values() for ex in exs
    )
    out: list[PredictionSet] = []
    for fold_idx, (val_ids, train_ids) in enumerate(folds.folds):
        seed = derive_seed(base_cfg.seed if spec.seed is None else spec.seed, fold_idx)
        cfg = spec.train_config(base_cfg, seed)
        val_examples = [ex for sid in val_ids for ex in paired[sid]]

        if recipe.kind == "frozen_eval":
            out.append(predict_examples(teacher, val_examples, recipe.eval_domain))
            continue

        if recipe.label_supervised:
            fit_ids, stop_ids = _split_holdout(list(train_ids), holdout_fraction, seed)
        else:
            fit_ids, stop_ids = sorted(train_ids), []
        fit_examples = [ex for sid in fit_ids for ex in paired[sid]]
        stop_examples = [ex for sid in stop_ids for ex in paired[sid]]

        if recipe.kind == "fresh_supervised":
            model = _fresh_model(fit_examples, dims, seed)
            model, _ = train_supervised(
                model, fit_examples, cfg, domain="target", val_data=stop_examples or None
            )
        elif recipe.kind == "fresh_distill":
            model = _fresh_model(fit_examples, dims, seed)
            model, _ = train_student(model, teacher, fit_examples, cfg, spec.loss_config())
        elif recipe.kind == "full_finetune":
            model = teacher.clone()
            if recipe.loss_mode == "bce_labels":
                model, _ = train_supervised(
                    model, fit_examples, cfg, domain="target", val_data=stop_examples or None
                )
            else:
                model, _ = train_student(model, teacher, fit_examples, cfg, spec.loss_config())
        elif recipe.kind == "student_da":
            model = clone_student(
                teacher, use_cnn=spec.resolved_use_cnn(data_has_raw), dims=dims, seed=seed
            )
            model, _ = train_student(
                model, teacher, fit_examples, cfg, spec.loss_config(),
                val_data=stop_examples or None,
            )
        else:  # pragma: no cover - registry guards this
            raise ConfigError(f"unhandled recipe kind {recipe.kind!r}")

        out.append(predict_examples(model, val_examples, "target"))
    return out
