"""True (non-differentiable) task criteria for the revenue and credit tasks.

Rewards are in dollars; the corresponding task *losses* are negated rewards
so that both tasks are minimised during training.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ContractError


@dataclass(frozen=True)
class RevenueRewardParams:
    alpha: float = 5.00
    beta: float = 6.11
    gamma: float = 2.22

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.gamma >= 0):
            raise ContractError(f"need alpha > 0, beta > 0, gamma >= 0; got {self}")


@dataclass(frozen=True)
class RevenueContext:
    group_id: int
    label_median: float
    prediction_median: float


@dataclass(frozen=True)
class LoanEconomics:
    received_principal: float
    received_interest: float
    funded_amount: float
    recovery_amount: float = 0.0
    recovery_cost: float = 0.0
    defaulted: bool = False

    def validate(self):
        if not self.funded_amount > 0:
            raise ContractError(f"funded_amount must be positive, got {self.funded_amount}")
        if not self.defaulted and (self.recovery_amount != 0 or self.recovery_cost != 0):
            raise ContractError("recovery fields must be zero for a loan that did not default")
        return self


@dataclass(frozen=True)
class DecisionThreshold:
    p_d: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.p_d <= 1.0:
            raise ContractError(f"threshold must lie in [0, 1], got {self.p_d}")


# ---------------------------------------------------------------------------
# revenue surprise
# ---------------------------------------------------------------------------


def dir_acc(pred, label, ctx, params=RevenueRewardParams()):
    """Directional reward against the group medians. A zero adjusted value is a miss."""
    a = pred - ctx.prediction_median
    b = label - ctx.label_median
    if (a > 0 and b > 0) or (a < 0 and b < 0):
        return params.alpha
    return -params.beta


def mag_acc(pred, label, params=RevenueRewardParams()):
    return params.gamma if abs(label - pred) < 0.5 * abs(label) else 0.0


def revenue_task_loss(pred, label, ctx, params=RevenueRewardParams()):
    return -(dir_acc(pred, label, ctx, params) + mag_acc(pred, label, params))


def group_medians(values, group_ids):
    """Map each group id to the median of its values (even groups: mean of middle pair)."""
    values = np.asarray(values, dtype=np.float64)
    group_ids = np.asarray(group_ids, dtype=np.int64)
    if values.shape != group_ids.shape:
        raise ContractError(f"values and group_ids differ in length: {values.shape} vs {group_ids.shape}")
    per_sample = _kernels.group_median_per_sample(values, group_ids)
    return {int(g): float(m) for g, m in zip(group_ids, per_sample)}


def median_per_sample(values, group_ids):
    """Vector form of :func:`group_medians`: each sample's own group median."""
    return _kernels.group_median_per_sample(values, group_ids)


def revenue_rewards(pred, label, pred_median, label_median, params=RevenueRewardParams()):
    """Per-sample DirAcc + MagAcc given per-sample medians."""
    return _kernels.revenue_rewards(pred, label, pred_median, label_median, params.alpha, params.beta, params.gamma)


def revenue_rewards_grouped(pred, label, group_ids, params=RevenueRewardParams(), label_median=None):
    """Per-sample rewards with medians taken over ``group_ids`` within these arrays.

    ``label_median`` overrides the label medians (e.g. precomputed over a
    larger population).
    """
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    pm = median_per_sample(pred, group_ids)
    lm = median_per_sample(label, group_ids) if label_median is None else label_median
    return revenue_rewards(pred, label, pm, lm, params)


# ---------------------------------------------------------------------------
# credit
# ---------------------------------------------------------------------------


def loan_profit(econ):
    principal_and_interest = econ.received_principal + econ.received_interest - econ.funded_amount
    recovery = econ.recovery_amount - econ.recovery_cost if econ.defaulted else 0.0
    return principal_and_interest + recovery


def loan_profits(received_principal, received_interest, funded_amount, recovery_amount, recovery_cost, defaulted):
    """Vector form of :func:`loan_profit` over parallel arrays."""
    base = np.asarray(received_principal) + np.asarray(received_interest) - np.asarray(funded_amount)
    rec = np.where(np.asarray(defaulted, dtype=bool), np.asarray(recovery_amount) - np.asarray(recovery_cost), 0.0)
    return base + rec


def _check_probability(p):
    if not 0.0 <= p <= 1.0:
        raise ContractError(f"default probability must lie in [0, 1], got {p}")


def credit_task_loss(p_default, econ, threshold=DecisionThreshold()):
    _check_probability(p_default)
    return -loan_profit(econ) if p_default < threshold.p_d else 0.0


def credit_task_losses(p_default, profit, p_d=0.5):
    p = np.asarray(p_default, dtype=np.float64)
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ContractError("default probabilities must lie in [0, 1]")
    return np.where(p < p_d, -np.asarray(profit, dtype=np.float64), 0.0)


def optimize_threshold(predictions, economics):
    """Pick the approval threshold maximising total profit of approving every p < p_D.

    Candidates are 0, the midpoints between consecutive distinct sorted
    predictions, and 1; ties go to the smallest threshold. ``economics`` may be
    a list of :class:`LoanEconomics` or an array of per-loan profits.
    """
    p = np.asarray(predictions, dtype=np.float64)
    if p.size == 0:
        raise ContractError("optimize_threshold needs at least one prediction")
    if len(economics) != p.size:
        raise ContractError(f"{p.size} predictions but {len(economics)} loans")
    if p.min() < 0.0 or p.max() > 1.0:
        raise ContractError("predictions must lie in [0, 1]")
    if isinstance(economics, np.ndarray):
        profit = economics.astype(np.float64)
    else:
        profit = np.array([e if isinstance(e, (int, float)) else loan_profit(e) for e in economics], dtype=np.float64)
    t, total = _kernels.threshold_scan(p, profit)
    return DecisionThreshold(t), total


def approved_profit(p_default, profit, p_d):
    p = np.asarray(p_default, dtype=np.float64)
    return float(np.sum(np.where(p < p_d, profit, 0.0)))
