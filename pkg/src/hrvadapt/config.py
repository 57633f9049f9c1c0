"""TOML experiment configuration: [data], [shift], [features], [model],
[train], and a [[variants]] list."""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .nn.models import ModelDims
from .shift import HmmShiftConfig, ToyStudyConfig, reference_shift_config
from .training import TrainConfig
from .variants import VariantSpec


@dataclass(frozen=True)
class FeatureConfig:
    window_len_s: float = 60.0
    stride_s: float = 60.0
    min_beats: int = 10
    chunk_len: int = 64
    consensus: float = 0.75


@dataclass(frozen=True)
class DataConfig:
    mode: str = "toy"
    source_dir: str | None = None
    paired_dir: str | None = None
    toy_source: ToyStudyConfig = field(default_factory=lambda: ToyStudyConfig(n_subjects=14))
    toy_paired: ToyStudyConfig = field(default_factory=lambda: ToyStudyConfig(n_subjects=12))

    def __post_init__(self):
        if self.mode not in ("toy", "records"):
            raise ConfigError(f"data mode must be 'toy' or 'records', got {self.mode!r}")
        if self.mode == "records" and not self.paired_dir:
            raise ConfigError("records mode needs data.paired_dir")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "out"
    data: DataConfig = field(default_factory=DataConfig)
    shift: HmmShiftConfig = field(default_factory=lambda: reference_shift_config(0.15))
    features: FeatureConfig = field(default_factory=FeatureConfig)
    dims: ModelDims = field(default_factory=ModelDims)
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(epochs=16, batch_size=8, lr=3e-3, patience=5)
    )
    teacher_epochs: int = 25
    calib_fraction: float = 0.1
    holdout_fraction: float = 0.1
    variants: tuple[VariantSpec, ...] = (
        VariantSpec("teacher_student_domain_adaptation"),
        VariantSpec("naive_transfer"),
    )


def _take(table: dict, keys: dict[str, type], where: str) -> dict:
    out = {}
    for key, value in table.items():
        if key not in keys:
            raise ConfigError(f"unknown key {key!r} in [{where}]")
        out[key] = value
    return out


def _toy_config(table: dict, where: str, default_seed: int) -> ToyStudyConfig:
    fields = {
        "n_subjects": int,
        "epochs_per_subject": int,
        "epoch_len_s": float,
        "apnea_chain": list,
        "normal_interval_mean_s": float,
        "normal_interval_sd_s": float,
        "apnea_amplitude_s": float,
        "apnea_period_s": float,
        "apnea_sd_s": float,
        "min_interval_s": float,
        "seed": int,
    }
    kwargs = _take(table, fields, where)
    if "apnea_chain" in kwargs:
        kwargs["apnea_chain"] = np.asarray(kwargs["apnea_chain"], dtype=np.float64)
    kwargs.setdefault("seed", default_seed)
    return ToyStudyConfig(**kwargs)


def _shift_config(table: dict) -> HmmShiftConfig:
    if "noise_scale" in table:
        extra = set(table) - {"noise_scale"}
        if extra:
            raise ConfigError(f"[shift] noise_scale cannot be combined with {sorted(extra)}")
        return reference_shift_config(float(table["noise_scale"]))
    keys = {"transition": list, "p": list, "mu": list, "sigma": list, "initial_state": int}
    kwargs = _take(table, keys, "shift")
    for name in ("transition", "p", "mu", "sigma"):
        if name not in kwargs:
            raise ConfigError(f"[shift] needs {name} (or a single noise_scale)")
        kwargs[name] = np.asarray(kwargs[name], dtype=np.float64)
    return HmmShiftConfig(**kwargs)


def parse_config(doc: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed TOML document; relative paths
    stay relative (resolved against the working directory at use time)."""
    known_top = {"seed", "out_dir", "data", "shift", "features", "model", "train", "variants"}
    unknown = set(doc) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")

    seed = int(doc.get("seed", 0))
    out_dir = str(doc.get("out_dir", "out"))

    data_tbl = dict(doc.get("data", {}))
    toy_source = _toy_config(data_tbl.pop("toy_source", {}), "data.toy_source", seed + 1)
    toy_paired = _toy_config(data_tbl.pop("toy_paired", {}), "data.toy_paired", seed + 2)
    data_kwargs = _take(
        data_tbl, {"mode": str, "source_dir": str, "paired_dir": str}, "data"
    )
    data = DataConfig(toy_source=toy_source, toy_paired=toy_paired, **data_kwargs)

    shift = _shift_config(doc["shift"]) if "shift" in doc else reference_shift_config(0.12)

    feat_kwargs = _take(
        doc.get("features", {}),
        {"window_len_s": float, "stride_s": float, "min_beats": int, "chunk_len": int, "consensus": float},
        "features",
    )
    features = FeatureConfig(**feat_kwargs)

    model_kwargs = _take(
        doc.get("model", {}),
        {
            "feature_dim": int,
            "tail_hidden": list,
            "lstm_hidden": int,
            "head_hidden": list,
            "cnn_channels": list,
            "cnn_kernel": int,
            "cnn_stride": int,
        },
        "model",
    )
    for key in ("tail_hidden", "head_hidden", "cnn_channels"):
        if key in model_kwargs:
            model_kwargs[key] = tuple(int(v) for v in model_kwargs[key])
    dims = ModelDims(**model_kwargs)

    train_tbl = dict(doc.get("train", {}))
    teacher_epochs = int(train_tbl.pop("teacher_epochs", 25))
    calib_fraction = float(train_tbl.pop("calib_fraction", 0.1))
    holdout_fraction = float(train_tbl.pop("holdout_fraction", 0.1))
    train_kwargs = _take(
        train_tbl,
        {"epochs": int, "batch_size": int, "lr": float, "patience": int},
        "train",
    )
    for key, value in (("epochs", 16), ("batch_size", 8), ("lr", 3e-3), ("patience", 5)):
        train_kwargs.setdefault(key, value)
    train = TrainConfig(seed=seed, **train_kwargs)

    variant_specs = []
    for i, vt in enumerate(doc.get("variants", [])):
        kwargs = _take(
            dict(vt),
            {"name": str, "use_cnn": bool, "epochs": int, "lr": float, "seed": int, "alpha": float},
            f"variants[{i}]",
        )
        if "name" not in kwargs:
            raise ConfigError(f"variants[{i}] needs a name")
        variant_specs.append(VariantSpec(**kwargs))
    variants = tuple(variant_specs) or ExperimentConfig.__dataclass_fields__["variants"].default

    return ExperimentConfig(
        seed=seed,
        out_dir=out_dir,
        data=data,
        shift=shift,
        features=features,
        dims=dims,
        train=train,
        teacher_epochs=teacher_epochs,
        calib_fraction=calib_fraction,
        holdout_fraction=holdout_fraction,
        variants=variants,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: invalid TOML: {e}") from e
    return parse_config(doc)
