"""Combined run configuration: one JSON document with "world", "model"
and "train" sections.  Validation errors carry a JSON-pointer path to the
offending field."""

import dataclasses
import json

from .errors import ConfigError
from .model import ModelConfig
from .trainer import TrainConfig
from .world import WorldConfig

_WORLD_FIELDS = {
    "num_known_concepts": int,
    "token_dim": int,
    "embed_dim": int,
    "feature_dim": int,
    "classifier_temperature": float,
    "render_noise_std": float,
    "seed": int,
}
_MODEL_FIELDS = {
    "hidden_dim": int,
    "latent_dim": int,
    "theta1": float,
    "theta2": float,
    "normalize_pair_input": bool,
    "seed": int,
}
_TRAIN_FIELDS = {
    "alpha": float,
    "beta": float,
    "gamma": float,
    "variance_anchor": float,
    "tau": float,
    "n_accumulation": int,
    "total_steps": int,
    "mix_probability": float,
    "sample_period": int,
    "samples_per_period": int,
    "initial_lr": float,
    "capacity_novel": int,
    "seed": int,
}

TOY_PRESET = {
    "world": {"num_known_concepts": 8, "token_dim": 32, "embed_dim": 32,
              "feature_dim": 32, "classifier_temperature": 0.125,
              "render_noise_std": 0.0, "seed": 7},
    "model": {"hidden_dim": 64, "latent_dim": 8, "seed": 11},
    "train": {"total_steps": 5000, "seed": 123},
}


def _coerce_section(section, raw, fields, defaults):
    if not isinstance(raw, dict):
        raise ConfigError(f"/{section}", "must be a JSON object")
    out = dict(defaults)
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError(f"/{section}/{key}", "unknown field")
        want = fields[key]
        if want is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"/{section}/{key}", "must be a boolean")
        elif want is int:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"/{section}/{key}", "must be an integer")
        elif want is float:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"/{section}/{key}", "must be a number")
            value = float(value)
        out[key] = value
    return out


def parse_config(doc):
    """Validate a combined config document into the three config objects."""
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a JSON object")
    for key in doc:
        if key not in ("world", "model", "train"):
            raise ConfigError(f"/{key}", "unknown section")
    if "world" not in doc:
        raise ConfigError("/world", "missing section")

    world_kwargs = _coerce_section("world", doc["world"], _WORLD_FIELDS, {})
    missing = [k for k in ("num_known_concepts", "token_dim", "embed_dim",
                           "feature_dim", "classifier_temperature")
               if k not in world_kwargs]
    if missing:
        raise ConfigError(f"/world/{missing[0]}", "missing required field")
    world_cfg = WorldConfig(**world_kwargs)
    world_cfg.validate()

    model_kwargs = _coerce_section("model", doc.get("model", {}), _MODEL_FIELDS, {})
    model_cfg = ModelConfig(token_dim=world_cfg.token_dim, **model_kwargs)
    model_cfg.validate()

    train_kwargs = _coerce_section("train", doc.get("train", {}), _TRAIN_FIELDS, {})
    train_cfg = TrainConfig(**train_kwargs)
    train_cfg.validate()
    return world_cfg, model_cfg, train_cfg


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from exc
    return parse_config(doc), doc


def config_doc(world_cfg, model_cfg, train_cfg):
    """Canonical document form of the three configs (for digests)."""
    return {
        "world": dataclasses.asdict(world_cfg),
        "model": dataclasses.asdict(model_cfg),
        "train": dataclasses.asdict(train_cfg),
    }
