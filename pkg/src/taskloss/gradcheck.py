"""Finite-difference audit of every autodiff op and the composite models.

Each check reduces its output to a scalar through a fixed random weighting,
so that no coordinate of the gradient is accidentally symmetric, and compares
the tape gradient against central differences. Points are drawn away from
kinks (relu, abs) and from the log floor.
"""

import numpy as np

from .autodiff import OP_KINDS, Tape, Tensor, backward, finite_difference_check
from .criteria import RevenueRewardParams
from .nn import LstmCell, Mlp
from .surrogate import LearnedSurrogate, heuristic_credit_loss, heuristic_revenue_loss

TOLERANCE = 1e-4
STEP = 1e-5
MODEL_CHECKS = ("mlp", "lstm", "heuristic_revenue", "heuristic_credit", "learned_surrogate")
CHECK_NAMES = OP_KINDS + MODEL_CHECKS


def _weighted(tape, out, w):
    return tape.sum(tape.mul(out, Tensor(w)))


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.uniform(margin, 1.5, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _op_check(kind, rng, h):
    """Max relative error of op ``kind`` w.r.t. each of its inputs."""
    shape = (3, 4)
    if kind == "matmul":
        inputs = [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))]
    elif kind == "add_row_bias":
        inputs = [rng.normal(size=shape), rng.normal(size=(4,))]
    elif kind == "concat_last_dim":
        inputs = [rng.normal(size=(3, 2)), rng.normal(size=(3, 3)), rng.normal(size=(3, 1))]
    elif kind in ("add", "sub", "mul_elementwise"):
        inputs = [rng.normal(size=shape), rng.normal(size=shape)]
    elif kind == "log":
        inputs = [rng.uniform(0.5, 2.0, size=shape)]
    elif kind in ("relu", "abs"):
        inputs = [_away_from_zero(rng, shape)]
    else:
        inputs = [rng.normal(size=shape)]

    tape = Tape()
    out_shape = tape.apply(kind, *[Tensor(x) for x in inputs]).shape
    w = rng.normal(size=out_shape)

    worst = 0.0
    for slot in range(len(inputs)):

        def f(tape, x, slot=slot):
            args = [x if i == slot else Tensor(a) for i, a in enumerate(inputs)]
            return _weighted(tape, tape.apply(kind, *args), w)

        worst = max(worst, finite_difference_check(f, inputs[slot], h))
    return worst


def _param_check(loss, params, h):
    """Relative error of the tape gradient w.r.t. parameter tensors, perturbed in place."""
    tape = Tape()
    backward(tape, loss(tape))
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss(Tape()).item()
            flat[i] = keep - h
            down = loss(Tape()).item()
            flat[i] = keep
            c = (up - down) / (2.0 * h)
            ai = a.reshape(-1)[i]
            worst = max(worst, abs(ai - c) / max(abs(ai), abs(c), 1e-8))
    return worst


def _mlp_check(rng, h):
    worst = 0.0
    for act, out_act in (("tanh", "identity"), ("relu", "sigmoid")):
        net = Mlp((3, 5, 4, 1), rng, activation=act, output_activation=out_act)
        x = rng.normal(size=(6, 3))
        w = rng.normal(size=(6, 1))
        worst = max(worst, finite_difference_check(lambda t, xx: _weighted(t, net.forward(t, xx), w), x, h))
        worst = max(worst, _param_check(lambda t: _weighted(t, net.forward(t, Tensor(x)), w), net.parameters(), h))
    return worst


def _lstm_check(rng, h):
    cell = LstmCell(3, 4, rng)
    seq = rng.normal(size=(5, 2, 3))  # steps x batch x features
    w = rng.normal(size=(2, 4))
    worst = _param_check(lambda t: _weighted(t, cell.encode(t, Tensor(seq)), w), cell.parameters(), h)
    # the sequence itself is data; check the single-step input and state paths directly
    h0 = rng.normal(size=(2, 4))
    c0 = rng.normal(size=(2, 4))
    for slot in range(3):

        def f(t, v, slot=slot):
            args = [Tensor(seq[0]), Tensor(h0), Tensor(c0)]
            args[slot] = v
            h1, c1 = cell.step(t, *args)
            return t.add(_weighted(t, h1, w), _weighted(t, c1, w))

        worst = max(worst, finite_difference_check(f, (seq[0], h0, c0)[slot], h))
    return worst


def _heuristic_revenue_check(rng, h):
    n = 8
    label = _away_from_zero(rng, n, 0.3) * 2.0
    label_median = np.full(n, np.median(label))
    pred_median = np.zeros(n)
    # keep k * adj_pred * adj_label and the magnitude-window argument near unit scale
    adj_label = label - label_median
    pred = rng.uniform(0.3, 1.0, size=n) * rng.choice([-1.0, 1.0], size=n) / (100.0 * np.maximum(np.abs(adj_label), 0.1))
    return finite_difference_check(
        lambda t, p: heuristic_revenue_loss(t, p, label, pred_median, label_median, RevenueRewardParams(), 100.0),
        pred.reshape(-1, 1),
        h,
    )


def _heuristic_credit_check(rng, h):
    p = rng.uniform(0.05, 0.95, size=(8, 1))
    profit = rng.normal(scale=500.0, size=8)
    return finite_difference_check(lambda t, x: heuristic_credit_loss(t, x, profit), p, h)


def _surrogate_check(rng, h):
    sur = LearnedSurrogate(4, rng, hidden=(6, 5))
    pred = rng.normal(size=(7, 1))
    label = rng.normal(size=7)
    ctx = rng.normal(size=(7, 2))
    sur.fit_standardizer(rng.normal(size=(50, 4)), target_scale=3.0)
    w = rng.normal(size=(7, 1))

    def f(t, p):
        return _weighted(t, sur.evaluate(t, p, label, Tensor(ctx)), w)

    worst = finite_difference_check(f, pred, h)
    return max(worst, _param_check(lambda t: f(t, Tensor(pred)), sur.parameters(), h))


_MODEL_FUNCS = {
    "mlp": _mlp_check,
    "lstm": _lstm_check,
    "heuristic_revenue": _heuristic_revenue_check,
    "heuristic_credit": _heuristic_credit_check,
    "learned_surrogate": _surrogate_check,
}


def run_suite(h=STEP, seed=0):
    """Return ``[(name, max relative error)]`` for every op and composite model."""
    results = []
    for i, name in enumerate(CHECK_NAMES):
        rng = np.random.default_rng([seed, i])
        if name in _MODEL_FUNCS:
            err = _MODEL_FUNCS[name](rng, h)
        else:
            err = _op_check(name, rng, h)
        results.append((name, float(err)))
    return results


def failures(results, tol=TOLERANCE):
    # NaN counts as a failure
    return [name for name, err in results if not err < tol]
