"""Training loops: learned-surrogate training, single-loss baselines, benchmarking.

``topnet_train`` runs, per mini-batch:

1. predict with the current model;
2. score the batch with the true (non-differentiable) criterion;
3. evaluate the learned surrogate on the detached predictions;
4. take one estimator step on the discrepancy between 3 and 2;
5. take one predictor step on the warm-up loss while ``iteration <=
   n_pre_iters``, otherwise on the learned surrogate (re-evaluated with the
   just-updated estimator, whose parameters are not stepped here).

Early stopping tracks the validation task reward and restores the best epoch.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .autodiff import Tape, Tensor, backward
from .errors import ConfigError, NumericError, TrainingError
from .nn import Adam, restore, snapshot
from .surrogate import DISCREPANCY_KINDS, LearnedSurrogate, discrepancy

WARMUP_KINDS = ("mse", "mae", "bce", "heuristic", "none")

# model name -> (uses learned surrogate, warm-up/baseline loss)
MODEL_KINDS = {
    "mse": (False, "mse"),
    "mae": (False, "mae"),
    "bce": (False, "bce"),
    "heuristic": (False, "heuristic"),
    "topnet_mse": (True, "mse"),
    "topnet_mae": (True, "mae"),
    "topnet_bce": (True, "bce"),
    "topnet_heuristic": (True, "heuristic"),
    "topnet_nowarmup": (True, "none"),
}


@dataclass
class TrainConfig:
    epochs: int = 30
    n_train_iters: Optional[int] = None  # default: epochs * batches per epoch
    n_pre_iters: Optional[int] = None  # default: one epoch
    batch_size: int = 64
    lr_predictor: float = 3e-5
    lr_estimator: float = 3e-5
    discrepancy: str = "square"
    warmup_loss: str = "mse"
    early_stop_patience: int = 10
    seeds: list = field(default_factory=lambda: [0])
    train_threshold: float = 0.5
    k: float = 100.0
    lstm_hidden: int = 32
    predictor_hidden: tuple = (64, 32, 16)
    estimator_hidden: tuple = (128, 64, 32)
    activation: str = "tanh"
    estimator_activation: str = "tanh"

    def validate(self):
        def positive_int(name, value):
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ConfigError(name, f"must be an integer >= 1, got {value!r}")

        positive_int("batch_size", self.batch_size)
        positive_int("epochs", self.epochs)
        positive_int("early_stop_patience", self.early_stop_patience)
        positive_int("lstm_hidden", self.lstm_hidden)
        for name in ("lr_predictor", "lr_estimator", "k"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not v > 0 or not math.isfinite(v):
                raise ConfigError(name, f"must be a positive number, got {v!r}")
        if self.discrepancy not in DISCREPANCY_KINDS:
            raise ConfigError("discrepancy", f"expected one of {DISCREPANCY_KINDS}, got {self.discrepancy!r}")
        if self.warmup_loss not in WARMUP_KINDS:
            raise ConfigError("warmup_loss", f"expected one of {WARMUP_KINDS}, got {self.warmup_loss!r}")
        if not 0.0 <= self.train_threshold <= 1.0:
            raise ConfigError("train_threshold", f"must lie in [0, 1], got {self.train_threshold}")
        if not self.seeds:
            raise ConfigError("seeds", "at least one seed is required")
        for name in ("predictor_hidden", "estimator_hidden"):
            dims = getattr(self, name)
            if not dims or any(not isinstance(d, int) or d < 1 for d in dims):
                raise ConfigError(name, f"must be a non-empty list of positive integers, got {dims!r}")
        if self.n_train_iters is not None:
            positive_int("n_train_iters", self.n_train_iters)
        if self.n_pre_iters is not None:
            if not isinstance(self.n_pre_iters, int) or self.n_pre_iters < 0:
                raise ConfigError("n_pre_iters", f"must be an integer >= 0, got {self.n_pre_iters!r}")
            if self.n_train_iters is not None and self.n_pre_iters > self.n_train_iters:
                raise ConfigError("n_pre_iters", "must not exceed n_train_iters")
        return self

    def for_model(self, model):
        """Copy of this config adjusted for a named model variant."""
        if model not in MODEL_KINDS:
            raise ConfigError("model", f"unknown model {model!r}; expected one of {sorted(MODEL_KINDS)}")
        _, loss = MODEL_KINDS[model]
        cfg = TrainConfig(**asdict(self))
        cfg.warmup_loss = loss
        if model == "topnet_nowarmup":
            cfg.n_pre_iters = 0
        return cfg


@dataclass
class EpochStats:
    epoch: int
    val_reward: float
    mean_surrogate: float = float("nan")
    mean_true_loss: float = float("nan")
    mean_discrepancy: float = float("nan")


@dataclass
class RunResult:
    model: str
    seed: int
    epochs: list  # EpochStats per epoch run
    val_reward: float  # at the restored epoch
    test_reward: float
    threshold: Optional[float]
    best_epoch: int
    meta: dict = field(default_factory=dict)
    predictor: object = field(default=None, repr=False, compare=False)
    test_predictions: object = field(default=None, repr=False, compare=False)

    @property
    def val_rewards(self):
        return [e.val_reward for e in self.epochs]


@dataclass
class Splits:
    train: object
    val: object
    test: object


def _streams(seed):
    predictor, estimator, shuffle = np.random.SeedSequence(int(seed)).spawn(3)
    return np.random.default_rng(predictor), np.random.default_rng(estimator), np.random.default_rng(shuffle)


def _schedule(cfg, n_train):
    per_epoch = n_train // cfg.batch_size
    if per_epoch < 1:
        raise ConfigError("batch_size", f"batch size {cfg.batch_size} exceeds training set size {n_train}")
    n_iters = cfg.n_train_iters if cfg.n_train_iters is not None else cfg.epochs * per_epoch
    n_pre = cfg.n_pre_iters if cfg.n_pre_iters is not None else per_epoch
    if cfg.warmup_loss == "none":
        n_pre = 0
    if n_pre > n_iters:
        raise ConfigError("n_pre_iters", f"{n_pre} exceeds n_train_iters {n_iters}")
    return per_epoch, n_iters, n_pre


def _finite(value, iteration, what):
    if not np.all(np.isfinite(value)):
        raise TrainingError(f"iteration {iteration}: non-finite {what}")


def _train(cfg, splits, task, model_name, seed, use_surrogate):
    cfg.validate()
    train, val, test = splits.train, splits.val, splits.test
    task.fit(train, cfg)
    per_epoch, n_iters, n_pre = _schedule(cfg, len(train))

    rng_pred, rng_est, rng_shuffle = _streams(seed)
    predictor = task.build_predictor(train, cfg, rng_pred)
    pred_params = predictor.parameters()
    opt_pred = Adam(pred_params, lr=cfg.lr_predictor)

    surrogate = None
    if use_surrogate:
        surrogate = LearnedSurrogate(
            task.n_estimator_inputs, rng_est, hidden=cfg.estimator_hidden, activation=cfg.estimator_activation
        )
        surrogate.fit_standardizer(task.reference_features(train), target_scale=task.loss_scale(train))
        opt_est = Adam(surrogate.parameters(), lr=cfg.lr_estimator)

    history = []
    best = (-math.inf, 0, snapshot(pred_params))
    stale = 0
    iteration = 0
    epoch = 0
    while iteration < n_iters:
        epoch += 1
        order = rng_shuffle.permutation(len(train))
        sums = np.zeros(3)
        count = 0
        for b in range(per_epoch):
            if iteration >= n_iters:
                break
            iteration += 1
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            stage = "prediction"
            try:
                tape = Tape()
                pred = task.predict(tape, predictor, train, idx)
                pred_np = pred.data[:, 0].copy()
                ctx = task.batch_context(pred_np, train, idx)
                labels = task.labels(train, idx)

                if surrogate is not None:
                    stage = "true task loss"
                    true_loss = task.true_losses(pred_np, train, idx, ctx)
                    _finite(true_loss, iteration, stage)

                    stage = "discrepancy"
                    est_tape = Tape()
                    detached = Tensor(pred_np.reshape(-1, 1))
                    s_val = surrogate.evaluate(
                        est_tape, detached, labels, task.estimator_context(est_tape, detached, train, idx, ctx)
                    )
                    d = discrepancy(est_tape, cfg.discrepancy, s_val, true_loss.reshape(-1, 1))
                    _finite(d.data, iteration, stage)
                    sums += (s_val.data.sum(), true_loss.sum(), float(d.data) * len(idx))
                    count += len(idx)
                    backward(est_tape, d)
                    opt_est.step()

                if iteration <= n_pre:
                    stage = f"warm-up loss ({cfg.warmup_loss})"
                    loss = task.warmup_loss(tape, cfg.warmup_loss, pred, train, idx, ctx)
                else:
                    stage = "learned surrogate"
                    s_pred = surrogate.evaluate(tape, pred, labels, task.estimator_context(tape, pred, train, idx, ctx))
                    loss = tape.mean(s_pred)
                _finite(loss.data, iteration, stage)
                backward(tape, loss)
                opt_pred.step()
            except TrainingError:
                raise
            except NumericError as exc:
                raise TrainingError(f"iteration {iteration}, {stage}: {exc}") from exc

        val_reward = task.validation_reward(predictor, val)
        stats = EpochStats(epoch, val_reward)
        if count:
            stats.mean_surrogate, stats.mean_true_loss, stats.mean_discrepancy = (sums / count).tolist()
        history.append(stats)
        if val_reward > best[0]:
            best = (val_reward, epoch, snapshot(pred_params))
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break

    restore(pred_params, best[2])
    test_reward, threshold, test_pred = task.evaluate(predictor, val, test)
    meta = {
        "task": task.name,
        "warmup_loss": cfg.warmup_loss,
        "n_train_iters": n_iters,
        "n_pre_iters": n_pre if use_surrogate else None,
        "iterations_run": iteration,
        "k": cfg.k,
        "discrepancy": cfg.discrepancy if use_surrogate else None,
    }
    return RunResult(
        model=model_name,
        seed=int(seed),
        epochs=history,
        val_reward=best[0],
        test_reward=test_reward,
        threshold=threshold,
        best_epoch=best[1],
        meta=meta,
        predictor=predictor,
        test_predictions=test_pred,
    )


def topnet_train(cfg, splits, task, seed=None, model_name=None):
    """Train a predictor against a learned surrogate of the task loss."""
    seed = cfg.seeds[0] if seed is None else seed
    name = model_name or ("topnet_nowarmup" if cfg.warmup_loss == "none" else f"topnet_{cfg.warmup_loss}")
    return _train(cfg, splits, task, name, seed, use_surrogate=True)


def baseline_train(cfg, splits, task, loss, seed=None, model_name=None):
    """Train a predictor on a single fixed loss (``mse``, ``mae``, ``bce`` or ``heuristic``)."""
    if loss not in ("mse", "mae", "bce", "heuristic"):
        raise ConfigError("loss", f"unknown baseline loss {loss!r}")
    seed = cfg.seeds[0] if seed is None else seed
    cfg = TrainConfig(**asdict(cfg))
    cfg.warmup_loss = loss
    n_train = len(splits.train)
    per_epoch = n_train // cfg.batch_size
    iters = cfg.n_train_iters if cfg.n_train_iters is not None else cfg.epochs * max(per_epoch, 1)
    # a baseline is the all-warm-up schedule
    cfg.n_train_iters = iters
    cfg.n_pre_iters = iters
    return _train(cfg, splits, task, model_name or loss, seed, use_surrogate=False)


def train_model(model, cfg, splits, task, seed):
    """Dispatch a named model variant to the right training routine."""
    cfg = cfg.for_model(model)
    surrogate, loss = MODEL_KINDS[model]
    if loss != "none" and loss not in task.warmup_losses:
        raise ConfigError("model", f"model {model!r} is not compatible with task {task.name!r}")
    if surrogate:
        return topnet_train(cfg, splits, task, seed=seed, model_name=model)
    return baseline_train(cfg, splits, task, loss, seed=seed, model_name=model)


def evaluate(model, splits, task):
    """Mean test reward (and, for credit, the validation-optimized threshold)."""
    reward, threshold, _ = task.evaluate(model, splits.val, splits.test)
    return reward, threshold


@dataclass
class BenchmarkRow:
    model: str
    mean_reward: float
    stderr: float
    seeds: list
    runs: list = field(repr=False)


def mean_stderr(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return float(values.mean()), float("nan")
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def benchmark(models, cfg, splits, task, threads=1):
    """Train every model for every seed in ``cfg.seeds``; return one row per model.

    Runs are independent (each owns its RNG streams), so ``threads > 1`` only
    changes wall time, never results.
    """
    jobs = [(m, s) for m in models for s in cfg.seeds]

    def run(job):
        return train_model(job[0], cfg, splits, task, job[1])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    rows = []
    for m in models:
        runs = [r for r in results if r.model == m]
        mean, se = mean_stderr([r.test_reward for r in runs])
        rows.append(BenchmarkRow(m, mean, se, [r.seed for r in runs], runs))
    return rows
