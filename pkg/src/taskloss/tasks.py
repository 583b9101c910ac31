"""Task adapters binding a dataset layout to its criterion and losses.

A task knows how to build a predictor, run it on a batch, score the batch
with the true criterion, feed the learned surrogate, and evaluate a split.
The training engine only talks to this interface.
"""

import numpy as np

from .autodiff import Tape, Tensor
from .criteria import (
    RevenueRewardParams,
    approved_profit,
    credit_task_losses,
    median_per_sample,
    optimize_threshold,
    revenue_rewards,
)
from .errors import ConfigError, ContractError
from .nn import LstmCell, Mlp, Predictor
from .surrogate import heuristic_credit_loss, heuristic_revenue_loss, standard_loss

EVAL_BATCH = 1024


class RevenueTask:
    """Revenue-surprise regression scored by DirAcc + MagAcc."""

    name = "revenue"
    warmup_losses = ("mse", "mae", "heuristic")
    n_estimator_inputs = 4  # prediction, label, median-adjusted prediction, median-adjusted label

    def __init__(self, params=RevenueRewardParams(), k=100.0):
        self.params = params
        self.k = float(k)

    def fit(self, train, cfg=None):
        """Precompute per-sample label medians over the training split."""
        if cfg is not None:
            self.k = float(cfg.k)
        self._train_label_median = median_per_sample(train.labels, train.groups)
        return self

    def build_predictor(self, train, cfg, rng):
        in_dim = train.sequences.shape[2]
        cell = LstmCell(in_dim, cfg.lstm_hidden, rng)
        head = Mlp((cfg.lstm_hidden, *cfg.predictor_hidden, 1), rng, activation=cfg.activation)
        return Predictor(head, cell)

    def predict(self, tape, model, arrays, idx):
        seq = np.ascontiguousarray(arrays.sequences[idx].transpose(1, 0, 2))
        return model.forward(tape, seq)

    def batch_context(self, pred, arrays, idx):
        groups = arrays.groups[idx]
        return {
            "pred_median": median_per_sample(pred, groups),
            "label_median": self._train_label_median[idx],
        }

    def true_losses(self, pred, arrays, idx, ctx):
        return -revenue_rewards(pred, arrays.labels[idx], ctx["pred_median"], ctx["label_median"], self.params)

    def labels(self, arrays, idx):
        return arrays.labels[idx]

    def estimator_context(self, tape, pred, arrays, idx, ctx):
        adj_pred = tape.shift(pred, -ctx["pred_median"].reshape(-1, 1))
        adj_label = (arrays.labels[idx] - ctx["label_median"]).reshape(-1, 1)
        return tape.concat([adj_pred, Tensor(adj_label)])

    def reference_features(self, train, pred=None):
        """Estimator inputs over ``train`` for standardization.

        Without ``pred`` the prediction columns reuse the labels, which is where
        a trained predictor should end up. A frozen predictor passes its own
        outputs instead.
        """
        y = train.labels
        adj = y - self._train_label_median
        if pred is None:
            return np.column_stack([y, y, adj, adj])
        pred = np.asarray(pred, dtype=np.float64)
        return np.column_stack([pred, y, pred - median_per_sample(pred, train.groups), adj])

    def loss_scale(self, train):
        return self.params.alpha + self.params.gamma

    def warmup_loss(self, tape, kind, pred, arrays, idx, ctx):
        y = arrays.labels[idx]
        if kind in ("mse", "mae"):
            return standard_loss(tape, kind, pred, y)
        if kind == "heuristic":
            return heuristic_revenue_loss(tape, pred, y, ctx["pred_median"], ctx["label_median"], self.params, self.k)
        raise ConfigError("warmup_loss", f"{kind!r} is not a revenue loss (expected one of {self.warmup_losses})")

    # evaluation -------------------------------------------------------------

    def predict_all(self, model, arrays):
        out = np.empty(len(arrays))
        for start in range(0, len(arrays), EVAL_BATCH):
            idx = np.arange(start, min(start + EVAL_BATCH, len(arrays)))
            out[idx] = self.predict(Tape(), model, arrays, idx).data[:, 0]
        return out

    def split_rewards(self, pred, arrays):
        pm = median_per_sample(pred, arrays.groups)
        lm = median_per_sample(arrays.labels, arrays.groups)
        return revenue_rewards(pred, arrays.labels, pm, lm, self.params)

    def validation_reward(self, model, val):
        return float(np.mean(self.split_rewards(self.predict_all(model, val), val)))

    def evaluate(self, model, val, test):
        """Mean per-sample reward on ``test`` with test-level medians; no threshold."""
        if len(test) == 0:
            raise ContractError("cannot evaluate an empty split")
        pred = self.predict_all(model, test)
        return float(np.mean(self.split_rewards(pred, test))), None, pred


class CreditTask:
    """Default-probability classification scored by thresholded loan profit."""

    name = "credit"
    warmup_losses = ("bce", "heuristic")
    n_estimator_inputs = 4  # probability, label, profit, funded amount

    def __init__(self, train_threshold=0.5):
        self.train_threshold = float(train_threshold)

    def fit(self, train, cfg=None):
        if cfg is not None:
            self.train_threshold = float(cfg.train_threshold)
        return self

    def build_predictor(self, train, cfg, rng):
        in_dim = train.features.shape[1]
        head = Mlp((in_dim, *cfg.predictor_hidden, 1), rng, activation=cfg.activation, output_activation="sigmoid")
        return Predictor(head)

    def predict(self, tape, model, arrays, idx):
        return model.forward(tape, Tensor(arrays.features[idx]))

    def batch_context(self, pred, arrays, idx):
        return {}

    def true_losses(self, pred, arrays, idx, ctx):
        return credit_task_losses(pred, arrays.profit[idx], self.train_threshold)

    def labels(self, arrays, idx):
        return arrays.labels[idx]

    def estimator_context(self, tape, pred, arrays, idx, ctx):
        return Tensor(np.column_stack([arrays.profit[idx], arrays.funded_amount[idx]]))

    def reference_features(self, train, pred=None):
        y = train.labels
        return np.column_stack([y if pred is None else pred, y, train.profit, train.funded_amount])

    def loss_scale(self, train):
        return float(np.sqrt(np.mean(train.profit**2)))

    def warmup_loss(self, tape, kind, pred, arrays, idx, ctx):
        if kind == "bce":
            return standard_loss(tape, "bce", pred, arrays.labels[idx])
        if kind == "heuristic":
            return heuristic_credit_loss(tape, pred, arrays.profit[idx])
        raise ConfigError("warmup_loss", f"{kind!r} is not a credit loss (expected one of {self.warmup_losses})")

    # evaluation -------------------------------------------------------------

    def predict_all(self, model, arrays):
        out = np.empty(len(arrays))
        for start in range(0, len(arrays), EVAL_BATCH):
            idx = np.arange(start, min(start + EVAL_BATCH, len(arrays)))
            out[idx] = self.predict(Tape(), model, arrays, idx).data[:, 0]
        return out

    def validation_reward(self, model, val):
        p = self.predict_all(model, val)
        _, total = optimize_threshold(p, val.profit)
        return total / len(val)

    def evaluate(self, model, val, test):
        """Mean profit per test loan with the threshold optimized on ``val``."""
        if len(test) == 0 or len(val) == 0:
            raise ContractError("cannot evaluate an empty split")
        threshold, _ = optimize_threshold(self.predict_all(model, val), val.profit)
        pred = self.predict_all(model, test)
        return approved_profit(pred, test.profit, threshold.p_d) / len(test), threshold.p_d, pred


def make_task(name, **params):
    if name == "revenue":
        crit = RevenueRewardParams(
            params.get("alpha", 5.00), params.get("beta", 6.11), params.get("gamma", 2.22)
        )
        return RevenueTask(crit, k=params.get("k", 100.0))
    if name == "credit":
        return CreditTask(train_threshold=params.get("p_d", 0.5))
    raise ConfigError("task", f"expected 'revenue' or 'credit', got {name!r}")
