import numpy as np
import pytest

from hrvadapt.errors import ConfigError
from hrvadapt.features import PairedExample
from hrvadapt.metrics import loso_folds
from hrvadapt.nn import ModelDims, named_parameters
from hrvadapt.training import TrainConfig
from hrvadapt.variants import (
    ABLATION_VARIANTS,
    TABLE1_VARIANTS,
    VariantSpec,
    predict_examples,
    prepare_teacher,
    run_variant,
)

SMALL = ModelDims(
    feature_dim=4, tail_hidden=(6,), lstm_hidden=4, head_hidden=(8,),
    cnn_channels=(2, 3), cnn_kernel=5, cnn_stride=2,
)


def make_example(rng, n=16, subject="s0", with_raw=False):
    labels = (rng.random(n) < 0.3).astype(float)
    xA = rng.standard_normal((n, 4)) + 2.0 * labels[:, None]
    xB = xA + 0.3 * rng.standard_normal((n, 4))
    raw = rng.standard_normal((n, 20)) if with_raw else None
    return PairedExample(subject, xA, xB, raw, labels, np.ones(n), np.arange(n))


def paired_study(rng, n_subjects=4, with_raw=False):
    return {
        f"p{i}": [make_example(rng, subject=f"p{i}", with_raw=with_raw)]
        for i in range(n_subjects)
    }


@pytest.fixture(scope="module")
def setup():
    rng = np.random.default_rng(7)
    source = {f"s{i}": [make_example(rng, subject=f"s{i}")] for i in range(5)}
    cfg = TrainConfig(epochs=15, batch_size=4, lr=1e-2, seed=0)
    teacher = prepare_teacher(source, cfg, SMALL)
    paired = paired_study(rng, n_subjects=4, with_raw=True)
    return teacher, paired, cfg


class TestRegistry:
    def test_exact_variant_lists(self):
        assert len(TABLE1_VARIANTS) == 8
        assert len(ABLATION_VARIANTS) == 5
        assert TABLE1_VARIANTS[0] == "label_supervised_target_only"
        assert TABLE1_VARIANTS[-1] == "teacher_on_source"
        assert set(ABLATION_VARIANTS) == {
            "minimal", "no_cnn", "no_output_loss", "no_activation_loss", "full",
        }

    def test_unknown_variant_rejected_by_name(self):
        with pytest.raises(ConfigError, match="frobnicate"):
            VariantSpec("frobnicate")

    def test_ablation_digests_distinct(self):
        base = TrainConfig(epochs=2)
        digests = {VariantSpec(n).config_digest(base) for n in ABLATION_VARIANTS}
        assert len(digests) == 5

    def test_loss_term_ablations_differ_from_full_only_in_their_term(self):
        full = VariantSpec("full")
        no_out = VariantSpec("no_output_loss")
        no_act = VariantSpec("no_activation_loss")
        assert full.loss_config().include_output_term
        assert full.loss_config().include_activation_term
        assert not no_out.loss_config().include_output_term
        assert no_out.loss_config().include_activation_term
        assert no_out.resolved_use_cnn() == full.resolved_use_cnn()
        assert no_act.loss_config().include_output_term
        assert not no_act.loss_config().include_activation_term
        assert no_act.resolved_use_cnn() == full.resolved_use_cnn()

    def test_minimal_is_output_only_without_cnn(self):
        minimal = VariantSpec("minimal")
        assert not minimal.resolved_use_cnn()
        assert not minimal.loss_config().include_activation_term
        assert minimal.loss_config().include_output_term


class TestFrozenVariants:
    def test_naive_transfer_keeps_teacher_parameters(self, setup):
        teacher, paired, cfg = setup
        before = {k: v.copy() for k, v in named_parameters(teacher).items()}
        run_variant(VariantSpec("naive_transfer"), teacher, paired, cfg, SMALL)
        after = named_parameters(teacher)
        for k in before:
            assert np.array_equal(before[k], after[k])

    def test_teacher_on_source_scores_source_features(self, setup):
        teacher, paired, cfg = setup
        preds = run_variant(VariantSpec("teacher_on_source"), teacher, paired, cfg, SMALL)
        # matches direct evaluation of the teacher on each subject's xA
        folds = loso_folds(list(paired))
        for (val_ids, _), got in zip(folds.folds, preds):
            examples = [ex for sid in val_ids for ex in paired[sid]]
            want = predict_examples(teacher, examples, domain="source")
            assert np.array_equal(got.scores, want.scores)

    def test_naive_and_source_eval_differ_under_shift(self, setup):
        teacher, paired, cfg = setup
        on_b = run_variant(VariantSpec("naive_transfer"), teacher, paired, cfg, SMALL)
        on_a = run_variant(VariantSpec("teacher_on_source"), teacher, paired, cfg, SMALL)
        assert not np.array_equal(on_b[0].scores, on_a[0].scores)


class TestTrainingVariants:
    def test_transfer_learning_updates_head(self, setup):
        teacher, paired, cfg = setup
        head_before = {
            k: v.copy() for k, v in named_parameters(teacher).items() if k.startswith("head.")
        }
        short = TrainConfig(epochs=2, batch_size=4, lr=1e-2, seed=3)
        run_variant(VariantSpec("teacher_student_transfer_learning"), teacher, paired, short, SMALL)
        # the teacher itself must stay untouched (each fold trains a clone)
        for k, v in named_parameters(teacher).items():
            if k.startswith("head."):
                assert np.array_equal(head_before[k], v)

    def test_domain_adaptation_trains_and_predicts(self, setup):
        teacher, paired, cfg = setup
        short = TrainConfig(epochs=3, batch_size=4, lr=3e-3, seed=4)
        preds = run_variant(
            VariantSpec("teacher_student_domain_adaptation", use_cnn=False),
            teacher, paired, short, SMALL,
        )
        assert len(preds) == len(paired)
        total = sum(len(p) for p in preds)
        assert total > 0

    def test_run_variant_is_reproducible(self, setup):
        teacher, paired, cfg = setup
        short = TrainConfig(epochs=2, batch_size=4, lr=3e-3, seed=5)
        spec = VariantSpec("teacher_student_domain_adaptation", use_cnn=False)
        a = run_variant(spec, teacher, paired, short, SMALL)
        b = run_variant(spec, teacher, paired, short, SMALL)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.scores, pb.scores)
            assert pa.subject_ids == pb.subject_ids

    def test_all_ablations_run_with_raw_slices(self, setup):
        teacher, paired, cfg = setup
        short = TrainConfig(epochs=1, batch_size=4, lr=3e-3, seed=6)
        for name in ABLATION_VARIANTS:
            preds = run_variant(VariantSpec(name), teacher, paired, short, SMALL)
            assert sum(len(p) for p in preds) > 0, name

    def test_label_supervised_variants_run(self, setup):
        teacher, paired, cfg = setup
        short = TrainConfig(epochs=2, batch_size=4, lr=1e-2, seed=7, patience=2)
        for name in (
            "label_supervised_target_only",
            "label_supervised_transfer_learning",
            "label_supervised_domain_adaptation",
            "teacher_student_target_only",
        ):
            preds = run_variant(VariantSpec(name, use_cnn=False), teacher, paired, short, SMALL)
            assert sum(len(p) for p in preds) > 0, name


class TestTransferLearningHeadMotion:
    def test_unfrozen_head_changes_during_tstl(self, setup):
        """Fine-tuning the full model must move the head weights."""
        teacher, paired, cfg = setup
        from hrvadapt.training import train_student

        model = teacher.clone()
        before = {k: v.copy() for k, v in named_parameters(model).items() if k.startswith("head.")}
        examples = [ex for exs in paired.values() for ex in exs]
        train_student(model, teacher, examples, TrainConfig(epochs=2, batch_size=4, lr=1e-2, seed=8))
        moved = any(
            not np.array_equal(before[k], v)
            for k, v in named_parameters(model).items()
            if k.startswith("head.")
        )
        assert moved
