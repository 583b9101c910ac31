"""Differentiable stand-ins for the task criteria.

Three families: standard losses (MSE/MAE/BCE), hand-built smooth
approximations of each task criterion, and the learned estimator network
whose output is trained to match the true task loss.
"""

import numpy as np

from .autodiff import Tensor, as_tensor
from .criteria import RevenueRewardParams
from .errors import ContractError, DimensionError, StateError
from .nn import Mlp

BCE_EPS = 1e-7
DISCREPANCY_KINDS = ("square", "absolute")
STANDARD_LOSSES = ("mse", "mae", "bce")


def _const(x, like):
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != like.shape:
        try:
            arr = np.broadcast_to(arr.reshape(like.shape) if arr.size == like.size else arr, like.shape)
        except ValueError:
            raise DimensionError(f"shape mismatch: {arr.shape} vs {like.shape}") from None
    return Tensor(arr)


def standard_loss(tape, kind, pred, label):
    """Batch-mean MSE, MAE or binary cross-entropy."""
    pred = as_tensor(pred)
    label_arr = np.asarray(label.data if isinstance(label, Tensor) else label, dtype=np.float64)
    if label_arr.size != pred.size:
        raise DimensionError(f"{kind}: prediction shape {pred.shape} vs label shape {label_arr.shape}")
    y = Tensor(label_arr.reshape(pred.shape))
    if kind == "mse":
        return tape.mean(tape.square(tape.sub(pred, y)))
    if kind == "mae":
        return tape.mean(tape.abs(tape.sub(pred, y)))
    if kind == "bce":
        # affine squeeze of [0, 1] onto [eps, 1 - eps]; exact at 0.5
        p = tape.shift(tape.scale(pred, 1.0 - 2.0 * BCE_EPS), BCE_EPS)
        q = tape.shift(tape.scale(p, -1.0), 1.0)
        ll = tape.add(tape.mul(y, tape.log(p)), tape.mul(Tensor(1.0 - y.data), tape.log(q)))
        return tape.scale(tape.mean(ll), -1.0)
    raise ContractError(f"unknown standard loss {kind!r}")


def heuristic_revenue_terms(tape, pred, label, pred_median, label_median, params=RevenueRewardParams(), k=100.0):
    """Per-sample smooth reward ``dir + mag`` with sign(x) replaced by tanh(kx)."""
    if not k > 0:
        raise ContractError(f"k must be positive, got {k}")
    pred = as_tensor(pred)
    y = np.asarray(label, dtype=np.float64).reshape(pred.shape)
    adj_label = y - np.asarray(label_median, dtype=np.float64).reshape(pred.shape)
    adj_pred = tape.shift(pred, -np.asarray(pred_median, dtype=np.float64).reshape(pred.shape))

    u = tape.tanh(tape.scale(adj_pred, k * adj_label))
    a, b = params.alpha, params.beta
    direction = tape.shift(tape.scale(u, 0.5 * (a + b)), 0.5 * (a - b))

    err = tape.abs(tape.sub(Tensor(y), pred))
    v = tape.tanh(tape.shift(tape.scale(err, -k), 0.5 * k * np.abs(y)))
    magnitude = tape.shift(tape.scale(v, 0.5 * params.gamma), 0.5 * params.gamma)
    return tape.add(direction, magnitude)


def heuristic_revenue_loss(tape, pred, label, pred_median, label_median, params=RevenueRewardParams(), k=100.0):
    """Batch mean of the negated smooth revenue reward."""
    terms = heuristic_revenue_terms(tape, pred, label, pred_median, label_median, params, k)
    return tape.scale(tape.mean(terms), -1.0)


def heuristic_credit_terms(tape, p_default, profit):
    """Per-sample negated expected profit ``-(1 - p) * profit``."""
    p = as_tensor(p_default)
    profit = np.asarray(profit, dtype=np.float64).reshape(p.shape)
    return tape.shift(tape.scale(p, profit), -profit)


def heuristic_credit_loss(tape, p_default, profit):
    return tape.mean(heuristic_credit_terms(tape, p_default, profit))


def discrepancy(tape, kind, surrogate_val, true_val):
    """Batch-mean ``|s - t|`` or ``(s - t)^2``; ``true_val`` is a constant."""
    s = as_tensor(surrogate_val)
    diff = tape.sub(s, _const(true_val, s.data))
    if kind == "square":
        return tape.mean(tape.square(diff))
    if kind == "absolute":
        return tape.mean(tape.abs(diff))
    raise ContractError(f"unknown discrepancy kind {kind!r}")


class LearnedSurrogate:
    """Estimator network mapping (prediction, label, context) to a task-loss estimate.

    Inputs are standardized with per-column statistics fixed before training.
    The raw network output is multiplied by ``target_scale`` so that the
    network itself works at unit scale while the surrogate lives in the task
    loss's units.
    """

    def __init__(self, n_inputs, rng, hidden=(128, 64, 32), activation="tanh"):
        self.n_inputs = int(n_inputs)
        self.estimator = Mlp((self.n_inputs, *hidden, 1), rng, activation=activation)
        self.mean = None
        self.std = None
        self.target_scale = 1.0

    def parameters(self):
        return self.estimator.parameters()

    @property
    def fitted(self):
        return self.mean is not None

    def fit_standardizer(self, reference, target_scale=1.0):
        """Fix input statistics from ``reference`` [n x n_inputs]."""
        reference = np.asarray(reference, dtype=np.float64)
        if reference.ndim != 2 or reference.shape[1] != self.n_inputs:
            raise DimensionError(f"reference must be [n x {self.n_inputs}], got {reference.shape}")
        self.mean = reference.mean(axis=0)
        self.std = np.maximum(reference.std(axis=0), 1e-8)
        self.target_scale = float(max(target_scale, 1e-8))
        return self

    def evaluate(self, tape, pred, label, context):
        """Per-sample surrogate values [batch x 1]. Gradients reach both the
        estimator parameters and ``pred`` (and any context derived from it)."""
        if not self.fitted:
            raise StateError("learned surrogate used before fit_standardizer")
        pred = as_tensor(pred)
        parts = [pred, Tensor(np.asarray(label, dtype=np.float64).reshape(pred.shape)), as_tensor(context)]
        x = tape.concat(parts)
        if x.shape[-1] != self.n_inputs:
            raise DimensionError(f"estimator expects {self.n_inputs} inputs, got {x.shape[-1]}")
        z = tape.scale(tape.add_row_bias(x, Tensor(-self.mean)), 1.0 / self.std)
        out = self.estimator.forward(tape, z)
        return tape.scale(out, self.target_scale)


def learned_surrogate_eval(tape, surrogate, pred, label, ctx_features):
    return surrogate.evaluate(tape, pred, label, ctx_features)
