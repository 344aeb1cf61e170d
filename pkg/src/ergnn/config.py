"""Flat ``key=value`` config files and the layering of presets, files and flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .graph import SyntheticConfig
from .trainer import PRESETS, TrainConfig


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    s = s.strip().strip("[]()")
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s: str) -> tuple[int, ...]:
    s = s.strip().strip("[]()")
    return tuple(int(x) for x in s.split(",") if x.strip())


def _names(s: str) -> tuple[str, ...]:
    s = s.strip().strip("[]()")
    return tuple(x.strip().strip("\"'") for x in s.split(",") if x.strip())


def _str(s: str) -> str:
    return s.strip().strip("\"'")


# key -> (section, field name, parser)
KEYS = {
    "epochs": ("train", "epochs", int),
    "layers": ("train", "layers", int),
    "learning_rate": ("train", "learning_rate", float),
    "batch_size": ("train", "batch_size", int),
    "lambda": ("train", "lambda_", float),
    "tau": ("train", "tau", float),
    "d_out": ("train", "d_out", int),
    "p_init": ("train", "p_init", float),
    "use_filter": ("train", "use_filter", _bool),
    "use_enhancer": ("train", "use_enhancer", _bool),
    "n_benign": ("synthetic", "n_benign", int),
    "n_fraud": ("synthetic", "n_fraud", int),
    "feature_dim": ("synthetic", "feature_dim", int),
    "benign_mean": ("synthetic", "benign_mean", _floats),
    "fraud_mean": ("synthetic", "fraud_mean", _floats),
    "camouflage_ratio": ("synthetic", "camouflage_ratio", float),
    "avg_degree": ("synthetic", "avg_degree", float),
    "num_relations": ("synthetic", "num_relations", int),
    "train_frac": ("synthetic", "train_frac", float),
    "val_frac": ("synthetic", "val_frac", float),
    "seed": ("run", "seed", int),
    "dataset": ("run", "dataset", _str),
    "preset": ("run", "preset", _str),
    "kinds": ("run", "kinds", _names),
    "seeds": ("run", "seeds", _ints),
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key=value`` lines into typed values. ``#`` starts a comment; unknown keys are errors."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            continue  # section headers are accepted and ignored; keys are flat
        if "=" not in line:
            raise ValidationError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in KEYS:
            raise ValidationError(f"{source}:{lineno}: unknown config key {key!r}")
        try:
            out[key] = KEYS[key][2](value)
        except ValueError as exc:
            raise ValidationError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return out


def read_config_file(path) -> dict:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    seed: int = 0
    dataset: str | None = None
    preset: str = "synthetic"
    kinds: tuple[str, ...] | None = None
    seeds: tuple[int, ...] | None = None

    def validate(self) -> None:
        self.train.validate()
        self.synthetic.validate()


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults < preset < config file < command-line overrides.

    ``overrides`` uses the same keys as config files. ``seed`` feeds both the
    model and the synthetic generator.
    """
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in merged:
        if key not in KEYS:
            raise ValidationError(f"unknown config key {key!r}")

    preset = merged.get("preset", "synthetic")
    if preset not in PRESETS:
        raise ValidationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    train_vals = dict(PRESETS[preset])
    synth_vals = {}
    run_vals = {"preset": preset}
    for key, value in merged.items():
        section, name, _ = KEYS[key]
        {"train": train_vals, "synthetic": synth_vals, "run": run_vals}[section][name] = value

    seed = run_vals.get("seed", 0)
    train_vals["seed"] = seed
    synth_vals["seed"] = seed
    cfg = RunConfig(
        train=dataclasses.replace(TrainConfig(), **train_vals),
        synthetic=dataclasses.replace(SyntheticConfig(), **synth_vals),
        seed=seed,
        dataset=run_vals.get("dataset"),
        preset=preset,
        kinds=run_vals.get("kinds"),
        seeds=run_vals.get("seeds"),
    )
    cfg.validate()
    return cfg
