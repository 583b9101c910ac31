"""Synthetic datasets for both tasks, CSV ingestion, and train/val/test splits.

The generators are stand-ins for proprietary data. They are built so that the
loss-minimising predictor under MSE or cross-entropy is *not* the reward-
maximising one:

* revenue: label noise is heavy-tailed, skewed downward, and scaled by a
  per-company volatility that the features reveal. The conditional mean then
  ranks companies differently from the conditional median.
* credit: the interest rate varies across loans independently of the default
  risk, so default probability alone does not order loans by profit.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .criteria import LoanEconomics, loan_profits
from .errors import ConfigError, ParseError


@dataclass(frozen=True)
class RevenueSample:
    sequence: np.ndarray  # [steps x features]
    label: float
    group_id: int
    company_id: int

    def __eq__(self, other):
        return (
            isinstance(other, RevenueSample)
            and np.array_equal(self.sequence, other.sequence)
            and self.label == other.label
            and self.group_id == other.group_id
            and self.company_id == other.company_id
        )

    __hash__ = None


@dataclass(frozen=True)
class CreditSample:
    features: np.ndarray
    label: bool
    economics: LoanEconomics

    def __eq__(self, other):
        return (
            isinstance(other, CreditSample)
            and np.array_equal(self.features, other.features)
            and self.label == other.label
            and self.economics == other.economics
        )

    __hash__ = None


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "random"
    fractions: tuple = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("chronological", "random"):
            raise ConfigError("split.mode", f"expected 'chronological' or 'random', got {self.mode!r}")
        if len(self.fractions) != 3 or any(not f > 0 for f in self.fractions):
            raise ConfigError("split.fractions", "need three positive fractions")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError("split.fractions", f"fractions must sum to 1, got {sum(self.fractions)}")


# ---------------------------------------------------------------------------
# array views used by the training engine
# ---------------------------------------------------------------------------


@dataclass
class RevenueArrays:
    sequences: np.ndarray  # [n x steps x features]
    labels: np.ndarray
    groups: np.ndarray
    companies: np.ndarray

    def __len__(self):
        return self.labels.shape[0]

    def take(self, idx):
        return RevenueArrays(self.sequences[idx], self.labels[idx], self.groups[idx], self.companies[idx])


@dataclass
class CreditArrays:
    features: np.ndarray  # [n x d]
    labels: np.ndarray  # 0/1 floats
    received_principal: np.ndarray
    received_interest: np.ndarray
    funded_amount: np.ndarray
    recovery_amount: np.ndarray
    recovery_cost: np.ndarray

    def __post_init__(self):
        self.profit = loan_profits(
            self.received_principal,
            self.received_interest,
            self.funded_amount,
            self.recovery_amount,
            self.recovery_cost,
            self.labels > 0.5,
        )

    def __len__(self):
        return self.labels.shape[0]

    def take(self, idx):
        return CreditArrays(
            self.features[idx],
            self.labels[idx],
            self.received_principal[idx],
            self.received_interest[idx],
            self.funded_amount[idx],
            self.recovery_amount[idx],
            self.recovery_cost[idx],
        )


def revenue_arrays(samples):
    return RevenueArrays(
        np.stack([s.sequence for s in samples]).astype(np.float64),
        np.array([s.label for s in samples], dtype=np.float64),
        np.array([s.group_id for s in samples], dtype=np.int64),
        np.array([s.company_id for s in samples], dtype=np.int64),
    )


def credit_arrays(samples):
    e = [s.economics for s in samples]
    return CreditArrays(
        np.stack([s.features for s in samples]).astype(np.float64),
        np.array([1.0 if s.label else 0.0 for s in samples]),
        np.array([x.received_principal for x in e]),
        np.array([x.received_interest for x in e]),
        np.array([x.funded_amount for x in e]),
        np.array([x.recovery_amount for x in e]),
        np.array([x.recovery_cost for x in e]),
    )


def to_arrays(samples):
    if not samples:
        raise ConfigError("data", "empty sample list")
    return revenue_arrays(samples) if isinstance(samples[0], RevenueSample) else credit_arrays(samples)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def student_t3(rng, size):
    """Student-t (3 dof) draws as a normal over the root of a scaled chi-square."""
    z = rng.standard_normal(size)
    chi2 = np.sum(rng.standard_normal((3,) + tuple(np.atleast_1d(size))) ** 2, axis=0)
    return z / np.sqrt(chi2 / 3.0)


def _check_counts(**counts):
    for name, value in counts.items():
        if int(value) != value or value < 1:
            raise ConfigError(name, f"must be an integer >= 1, got {value}")


def gen_revenue(n_companies, n_quarters, steps=5, features=4, seed=0, latent_dim=3, ar=0.8):
    """Company/quarter panel of revenue-surprise samples.

    Each company follows a latent AR(1) process sampled ``steps`` times per
    quarter. Features are noisy projections of the latent state plus one
    channel carrying the company's log-volatility. The label is a linear
    readout of the quarter-end latent state, a shared quarter effect, and
    volatility-scaled noise: Student-t(3) draws minus occasional downside jumps.
    """
    _check_counts(n_companies=n_companies, n_quarters=n_quarters, steps=steps, features=features)
    rng = np.random.default_rng(seed)
    n_obs = features - 1 if features > 1 else 1
    loading = rng.standard_normal((n_obs, latent_dim)) / np.sqrt(latent_dim)
    readout = rng.standard_normal(latent_dim)
    readout /= np.linalg.norm(readout)
    quarter_effect = 0.5 * rng.standard_normal(n_quarters)
    horizon = n_quarters * steps
    innov = math.sqrt(1.0 - ar * ar)

    samples = []
    for c in range(n_companies):
        log_vol = 0.8 * rng.standard_normal()
        vol = math.exp(log_vol)
        level = 0.3 * rng.standard_normal()
        z = np.empty((horizon, latent_dim))
        z[0] = rng.standard_normal(latent_dim)
        shocks = rng.standard_normal((horizon, latent_dim))
        for t in range(1, horizon):
            z[t] = ar * z[t - 1] + innov * shocks[t]
        obs = z @ loading.T + 0.3 * rng.standard_normal((horizon, n_obs))
        if features > 1:
            vol_channel = log_vol + 0.2 * rng.standard_normal((horizon, 1))
            obs = np.concatenate([obs, vol_channel], axis=1)
        t3 = student_t3(rng, n_quarters)
        jumps = (rng.uniform(size=n_quarters) < 0.3) * rng.exponential(2.0, size=n_quarters)
        noise = vol * (0.3 * t3 - jumps)
        for q in range(n_quarters):
            end = (q + 1) * steps - 1
            label = level + float(readout @ z[end]) + quarter_effect[q] + noise[q]
            samples.append(RevenueSample(obs[q * steps : end + 1].copy(), float(label), q, c))
    return samples


def _credit_design(rng, n_loans, n_features):
    x = rng.standard_normal((n_loans, n_features))
    w_default = np.zeros(n_features)
    w_rate = np.zeros(n_features)
    w_recovery = np.zeros(n_features)
    k = min(4, n_features)
    w_default[:k] = rng.uniform(0.6, 1.2, size=k) * rng.choice([-1.0, 1.0], size=k)
    w_rate[: min(2, n_features)] = 0.5 * np.sign(w_default[: min(2, n_features)])
    if n_features > 4:
        w_rate[4 : min(6, n_features)] = 1.2
    if n_features > 6:
        w_recovery[6] = 1.0
    p_default = 1.0 / (1.0 + np.exp(-(-0.7 + x @ w_default)))
    rate = 0.04 + 0.36 / (1.0 + np.exp(-(x @ w_rate)))
    recovery_rate = 0.6 / (1.0 + np.exp(-(x @ w_recovery)))
    return x, p_default, rate, recovery_rate


def gen_credit(n_loans, n_features=12, seed=0):
    """Loan book with feature-driven default risk and pricing.

    Default probability is a sigmoid of a sparse linear function of the
    features. The interest rate depends on a partly different set of features,
    and recovery rates on yet another, so expected profit is not monotone in
    default probability.
    """
    _check_counts(n_loans=n_loans, n_features=n_features)
    rng = np.random.default_rng(seed)
    x, p_default, rate, recovery_rate = _credit_design(rng, n_loans, n_features)
    funded = np.exp(rng.uniform(np.log(1e3), np.log(4e4), size=n_loans))
    defaulted = rng.uniform(size=n_loans) < p_default

    repaid_frac = np.where(defaulted, rng.uniform(0.0, 0.8, size=n_loans), 1.0)
    principal = repaid_frac * funded
    interest = repaid_frac * funded * rate
    outstanding = funded - principal
    recovery = np.where(defaulted, recovery_rate * outstanding, 0.0)
    cost = np.where(defaulted, rng.uniform(0.05, 0.25, size=n_loans) * recovery, 0.0)

    return [
        CreditSample(
            x[i].copy(),
            bool(defaulted[i]),
            LoanEconomics(
                float(principal[i]),
                float(interest[i]),
                float(funded[i]),
                float(recovery[i]),
                float(cost[i]),
                bool(defaulted[i]),
            ),
        )
        for i in range(n_loans)
    ]


def credit_default_probability(n_loans, n_features=12, seed=0):
    """Ground-truth default probabilities matching :func:`gen_credit` for the same seed."""
    _, p_default, _, _ = _credit_design(np.random.default_rng(seed), n_loans, n_features)
    return p_default


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

CREDIT_FIXED = ["label", "received_principal", "received_interest", "funded_amount", "recovery_amount", "recovery_cost"]
REVENUE_FIXED = ["company_id", "quarter_id", "label"]


def write_csv(path, samples):
    """Write samples using the schema matching their type."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if not samples:
            return
        if isinstance(samples[0], RevenueSample):
            width = samples[0].sequence.size
            w.writerow(REVENUE_FIXED + [f"f_{i}" for i in range(width)])
            for s in samples:
                w.writerow([s.company_id, s.group_id, repr(s.label)] + [repr(float(v)) for v in s.sequence.reshape(-1)])
        else:
            width = samples[0].features.size
            w.writerow(CREDIT_FIXED + [f"x_{i}" for i in range(width)])
            for s in samples:
                e = s.economics
                w.writerow(
                    [1 if s.label else 0]
                    + [repr(float(v)) for v in (e.received_principal, e.received_interest, e.funded_amount, e.recovery_amount, e.recovery_cost)]
                    + [repr(float(v)) for v in s.features]
                )


def _parse_float(cell, row, column):
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric value {cell!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {cell!r}", row=row, column=column)
    return value


def _parse_int(cell, row, column):
    try:
        return int(cell)
    except ValueError:
        raise ParseError(f"expected an integer, got {cell!r}", row=row, column=column) from None


def load_csv(path, schema, steps=None, min_history=0):
    """Parse a revenue or credit CSV into samples.

    For revenue, ``steps`` gives the sequence length; the flattened ``f_*``
    columns must divide evenly into it. ``min_history`` drops companies with
    fewer rows.
    """
    if schema not in ("revenue", "credit"):
        raise ConfigError("schema", f"expected 'revenue' or 'credit', got {schema!r}")
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"file not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("no data rows (file is empty)")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise ParseError("no data rows", row=1)

    fixed = REVENUE_FIXED if schema == "revenue" else CREDIT_FIXED
    prefix = "f_" if schema == "revenue" else "x_"
    for i, name in enumerate(fixed):
        if i >= len(header) or header[i] != name:
            raise ParseError(f"missing column {name!r} at position {i}", row=1, column=name)
    extra = header[len(fixed) :]
    if not extra:
        raise ParseError(f"no {prefix}* feature columns", row=1)
    for i, name in enumerate(extra):
        if name != f"{prefix}{i}":
            raise ParseError(f"expected column {prefix}{i}, got {name!r}", row=1, column=name)
    width = len(extra)

    if schema == "revenue":
        steps = int(steps) if steps else width
        if width % steps:
            raise ParseError(f"{width} sequence columns do not divide into {steps} steps", row=1)
        n_feat = width // steps

    samples = []
    for r, cells in enumerate(body, start=2):
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(cells)}", row=r)
        if schema == "revenue":
            company = _parse_int(cells[0], r, "company_id")
            quarter = _parse_int(cells[1], r, "quarter_id")
            label = _parse_float(cells[2], r, "label")
            seq = np.array([_parse_float(c, r, extra[j]) for j, c in enumerate(cells[3:])]).reshape(steps, n_feat)
            samples.append(RevenueSample(seq, label, quarter, company))
        else:
            flag = _parse_int(cells[0], r, "label")
            if flag not in (0, 1):
                raise ParseError(f"label must be 0 or 1, got {flag}", row=r, column="label")
            vals = [_parse_float(c, r, CREDIT_FIXED[j + 1]) for j, c in enumerate(cells[1:6])]
            feats = np.array([_parse_float(c, r, extra[j]) for j, c in enumerate(cells[6:])])
            econ = LoanEconomics(*vals, defaulted=bool(flag))
            if not econ.funded_amount > 0:
                raise ParseError("funded_amount must be positive", row=r, column="funded_amount")
            if not flag and (econ.recovery_amount != 0 or econ.recovery_cost != 0):
                raise ParseError("recovery fields must be 0 for a non-defaulted loan", row=r, column="recovery_amount")
            samples.append(CreditSample(feats, bool(flag), econ))

    if schema == "revenue" and min_history > 0:
        counts = {}
        for s in samples:
            counts[s.company_id] = counts.get(s.company_id, 0) + 1
        samples = [s for s in samples if counts[s.company_id] >= min_history]
    return samples


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------


def _group_of(sample):
    return sample.group_id if isinstance(sample, RevenueSample) else 0


def split(samples, spec):
    """Disjoint, exhaustive (train, val, test) lists.

    Random mode shuffles with ``spec.seed``. Chronological mode sorts by group
    id and cuts only at group boundaries (nearest to the requested sizes), so
    no quarter straddles two splits.
    """
    n = len(samples)
    f_train, f_val, _ = spec.fractions
    if spec.mode == "random":
        order = np.random.default_rng(spec.seed).permutation(n)
        n_train = int(round(f_train * n))
        n_val = int(round(f_val * n))
        cuts = (n_train, n_train + n_val)
    else:
        order = np.argsort(np.array([_group_of(s) for s in samples]), kind="stable")
        groups = np.array([_group_of(samples[i]) for i in order])
        boundaries = np.r_[np.flatnonzero(groups[1:] != groups[:-1]) + 1, n]

        def nearest(target):
            return int(boundaries[np.argmin(np.abs(boundaries - target))])

        c1 = nearest(f_train * n)
        c2 = nearest((f_train + f_val) * n)
        cuts = (c1, c2)
    a, b = cuts
    if not (0 < a < b < n):
        raise ConfigError("split.fractions", f"a split would be empty (n={n}, cuts={cuts})")
    parts = (order[:a], order[a:b], order[b:])
    return tuple([samples[i] for i in part] for part in parts)
