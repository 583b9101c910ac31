"""JSON experiment configuration.

One document describes the task, the model variant(s), where the data comes
from, how it is split, the training hyperparameters and the criterion
constants. ``ExperimentConfig.from_dict(cfg.to_dict()) == cfg`` for every
valid config. Environment variables are never consulted.

Example::

    {
      "task": "revenue",
      "model": "topnet_mae",
      "models": ["mse", "mae", "topnet_mae"],
      "data": {"source": "synthetic", "n_companies": 250, "n_quarters": 12, "seed": 0},
      "split": {"mode": "chronological", "fractions": [0.6667, 0.1667, 0.1666], "seed": 0},
      "train": {"epochs": 30, "batch_size": 64, "seeds": [0, 1, 2, 3, 4]},
      "criterion": {"alpha": 5.0, "beta": 6.11, "gamma": 2.22, "k": 100.0, "p_d": 0.5}
    }
"""

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from . import data as data_mod
from .engine import MODEL_KINDS, Splits, TrainConfig
from .errors import ConfigError
from .tasks import make_task

TASKS = ("revenue", "credit")
TASK_MODELS = {
    "revenue": ("mse", "mae", "heuristic", "topnet_mse", "topnet_mae", "topnet_heuristic", "topnet_nowarmup"),
    "credit": ("bce", "heuristic", "topnet_bce", "topnet_heuristic", "topnet_nowarmup"),
}

SYNTHETIC_KEYS = {
    "revenue": {"n_companies": 250, "n_quarters": 12, "steps": 5, "features": 4, "seed": 0},
    "credit": {"n_loans": 20000, "n_features": 12, "seed": 0},
}
DEFAULT_SPLIT = {
    "revenue": {"mode": "chronological", "fractions": [2 / 3, 1 / 6, 1 / 6], "seed": 0},
    "credit": {"mode": "random", "fractions": [0.8, 0.1, 0.1], "seed": 0},
}
# desk-scale rates found to train the small default networks within the epoch budget
DEFAULT_TRAIN = {
    "revenue": {"lr_predictor": 1e-3, "lr_estimator": 3e-3, "n_pre_iters": 310},
    "credit": {"lr_predictor": 3e-4, "lr_estimator": 3e-3, "n_pre_iters": 1250},
}
# set from the criterion block, never from "train"
DERIVED_TRAIN_FIELDS = ("k", "train_threshold")
TRAIN_FIELDS = tuple(f.name for f in fields(TrainConfig) if f.name not in DERIVED_TRAIN_FIELDS)


def _require_keys(section, given, allowed):
    extra = sorted(set(given) - set(allowed))
    if extra:
        raise ConfigError(f"{section}.{extra[0]}", f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _number(name, value, positive=True):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(name, f"must be a finite number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(name, f"must be positive, got {value!r}")
    return float(value)


@dataclass
class CriterionParams:
    alpha: float = 5.00
    beta: float = 6.11
    gamma: float = 2.22
    k: float = 100.0
    p_d: float = 0.5

    @classmethod
    def from_dict(cls, d):
        _require_keys("criterion", d, [f.name for f in fields(cls)])
        out = cls(**{**asdict(cls()), **d})
        for name in ("alpha", "beta", "gamma", "k"):
            setattr(out, name, _number(f"criterion.{name}", getattr(out, name)))
        out.p_d = _number("criterion.p_d", out.p_d, positive=False)
        if not 0.0 <= out.p_d <= 1.0:
            raise ConfigError("criterion.p_d", f"must lie in [0, 1], got {out.p_d}")
        return out


@dataclass
class ExperimentConfig:
    task: str = "revenue"
    model: Optional[str] = None
    models: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    criterion: CriterionParams = field(default_factory=CriterionParams)
    out: Optional[str] = None
    checkpoint: Optional[str] = None

    # -- parsing ---------------------------------------------------------------

    @classmethod
    def from_dict(cls, raw, base_dir=None):
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be a JSON object")
        _require_keys("config", raw, [f.name for f in fields(cls)])
        task = raw.get("task", "revenue")
        if task not in TASKS:
            raise ConfigError("task", f"expected one of {TASKS}, got {task!r}")

        data = dict(raw.get("data", {}))
        source = data.setdefault("source", "synthetic")
        if source == "synthetic":
            _require_keys("data", data, ["source", *SYNTHETIC_KEYS[task]])
            data = {"source": "synthetic", **SYNTHETIC_KEYS[task], **data}
            for key in SYNTHETIC_KEYS[task]:
                v = data[key]
                if isinstance(v, bool) or not isinstance(v, int) or (v < 0 if key == "seed" else v < 1):
                    raise ConfigError(f"data.{key}", f"must be a {'non-negative' if key == 'seed' else 'positive'} integer, got {v!r}")
        elif source == "csv":
            _require_keys("data", data, ["source", "path", "steps", "min_history"])
            if "path" not in data:
                raise ConfigError("data.path", "required when data.source is 'csv'")
            data.setdefault("steps", SYNTHETIC_KEYS["revenue"]["steps"] if task == "revenue" else None)
            data.setdefault("min_history", 0)
            path = Path(data["path"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            if not path.is_file():
                raise ConfigError("data.path", f"file not found: {path}")
            data["path"] = str(path)
        else:
            raise ConfigError("data.source", f"expected 'synthetic' or 'csv', got {source!r}")

        split = {**DEFAULT_SPLIT[task], **raw.get("split", {})}
        _require_keys("split", split, ["mode", "fractions", "seed"])
        split["fractions"] = [float(f) for f in split["fractions"]]
        data_mod.SplitSpec(split["mode"], tuple(split["fractions"]), split["seed"])  # validates

        train_raw = raw.get("train", {})
        if not isinstance(train_raw, dict):
            raise ConfigError("train", "must be a JSON object")
        _require_keys("train", train_raw, TRAIN_FIELDS)
        criterion = CriterionParams.from_dict(raw.get("criterion", {}))
        merged = {**DEFAULT_TRAIN[task], **train_raw}
        for name in ("predictor_hidden", "estimator_hidden"):
            if name in merged and isinstance(merged[name], list):
                merged[name] = tuple(merged[name])
        train = TrainConfig(**merged, k=criterion.k, train_threshold=criterion.p_d)
        try:
            train.validate()
        except ConfigError as exc:
            raise ConfigError(f"train.{exc.field}", str(exc).split(": ", 1)[1]) from None

        model = raw.get("model")
        models = raw.get("models", [])
        if not isinstance(models, list):
            raise ConfigError("models", "must be a list of model names")
        for m in ([model] if model is not None else []) + models:
            if m not in MODEL_KINDS:
                raise ConfigError("model", f"unknown model {m!r}; expected one of {sorted(MODEL_KINDS)}")
            if m not in TASK_MODELS[task]:
                raise ConfigError("model", f"model {m!r} is not compatible with task {task!r}")
        if len(set(models)) != len(models):
            raise ConfigError("models", "duplicate model names")

        return cls(
            task=task,
            model=model,
            models=list(models),
            data=data,
            split=split,
            train=train,
            criterion=criterion,
            out=raw.get("out"),
            checkpoint=raw.get("checkpoint"),
        )

    @classmethod
    def from_json(cls, text, base_dir=None):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON ({exc})") from None
        return cls.from_dict(raw, base_dir)

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError("config", f"file not found: {path}")
        return cls.from_json(path.read_text(), base_dir=path.parent)

    # -- serialization -----------------------------------------------------------

    def to_dict(self):
        train = {k: v for k, v in asdict(self.train).items() if k not in DERIVED_TRAIN_FIELDS}
        for name in ("predictor_hidden", "estimator_hidden"):
            train[name] = list(train[name])
        out = {
            "task": self.task,
            "model": self.model,
            "models": list(self.models),
            "data": dict(self.data),
            "split": dict(self.split),
            "train": train,
            "criterion": asdict(self.criterion),
            "out": self.out,
            "checkpoint": self.checkpoint,
        }
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    # -- construction helpers ------------------------------------------------------

    def make_task(self):
        c = self.criterion
        return make_task(self.task, alpha=c.alpha, beta=c.beta, gamma=c.gamma, k=c.k, p_d=c.p_d)

    def load_samples(self):
        d = self.data
        if d["source"] == "csv":
            return data_mod.load_csv(d["path"], self.task, steps=d.get("steps"), min_history=d.get("min_history", 0))
        if self.task == "revenue":
            return data_mod.gen_revenue(d["n_companies"], d["n_quarters"], d["steps"], d["features"], d["seed"])
        return data_mod.gen_credit(d["n_loans"], d["n_features"], d["seed"])

    def make_splits(self):
        spec = data_mod.SplitSpec(self.split["mode"], tuple(self.split["fractions"]), self.split["seed"])
        train, val, test = data_mod.split(self.load_samples(), spec)
        return Splits(data_mod.to_arrays(train), data_mod.to_arrays(val), data_mod.to_arrays(test))
