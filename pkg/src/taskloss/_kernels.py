"""Per-sample criterion kernels with numba and pure-numpy implementations.

The numba path is used when numba imports and ``TASKLOSS_DISABLE_NUMBA`` is
unset (or ``0``). Both paths return bit-identical results; the test suite and
``benchmarks/bench_kernels.py`` exercise them side by side.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("TASKLOSS_DISABLE_NUMBA", "0") in ("", "0")
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy
# ---------------------------------------------------------------------------


def group_median_per_sample_np(values, group_ids):
    n = values.shape[0]
    out = np.empty(n)
    if n == 0:
        return out
    order = np.lexsort((values, group_ids))
    g = group_ids[order]
    v = values[order]
    starts = np.flatnonzero(np.r_[True, g[1:] != g[:-1]])
    counts = np.diff(np.r_[starts, n])
    lo = starts + (counts - 1) // 2
    hi = starts + counts // 2
    med = 0.5 * (v[lo] + v[hi])
    out[order] = np.repeat(med, counts)
    return out


def revenue_rewards_np(pred, label, pred_med, label_med, alpha, beta, gamma):
    a = pred - pred_med
    b = label - label_med
    hit = ((a > 0.0) & (b > 0.0)) | ((a < 0.0) & (b < 0.0))
    direction = np.where(hit, alpha, -beta)
    magnitude = np.where(np.abs(label - pred) < 0.5 * np.abs(label), gamma, 0.0)
    return direction + magnitude


def threshold_scan_np(p, profit):
    n = p.shape[0]
    order = np.argsort(p, kind="stable")
    ps = p[order]
    cs = np.cumsum(profit[order])
    last = np.flatnonzero(ps[1:] != ps[:-1])
    a = ps[last]
    b = ps[last + 1]
    mids = 0.5 * (a + b)
    mids = np.where(a < mids, mids, b)
    thresholds = np.concatenate(([0.0], mids, [1.0]))
    total_all = cs[n - 1] if ps[n - 1] < 1.0 else (cs[last[-1]] if last.size else 0.0)
    totals = np.concatenate(([0.0], cs[last], [total_all]))
    k = int(np.argmax(totals))
    return float(thresholds[k]), float(totals[k])


# ---------------------------------------------------------------------------
# numba
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def group_median_per_sample_nb(values, group_ids):
        n = values.shape[0]
        out = np.empty(n)
        if n == 0:
            return out
        order = np.argsort(group_ids, kind="mergesort")
        start = 0
        while start < n:
            gid = group_ids[order[start]]
            stop = start
            while stop < n and group_ids[order[stop]] == gid:
                stop += 1
            count = stop - start
            buf = np.empty(count)
            for j in range(count):
                buf[j] = values[order[start + j]]
            buf.sort()
            med = 0.5 * (buf[(count - 1) // 2] + buf[count // 2])
            for j in range(start, stop):
                out[order[j]] = med
            start = stop
        return out

    @njit(cache=True)
    def revenue_rewards_nb(pred, label, pred_med, label_med, alpha, beta, gamma):
        n = pred.shape[0]
        out = np.empty(n)
        for i in range(n):
            a = pred[i] - pred_med[i]
            b = label[i] - label_med[i]
            if (a > 0.0 and b > 0.0) or (a < 0.0 and b < 0.0):
                d = alpha
            else:
                d = -beta
            if abs(label[i] - pred[i]) < 0.5 * abs(label[i]):
                m = gamma
            else:
                m = 0.0
            out[i] = d + m
        return out

    @njit(cache=True)
    def threshold_scan_nb(p, profit):
        n = p.shape[0]
        order = np.argsort(p, kind="mergesort")
        best_t = 0.0
        best_total = 0.0
        running = 0.0
        for j in range(n):
            running += profit[order[j]]
            cur = p[order[j]]
            if j + 1 < n:
                nxt = p[order[j + 1]]
                if nxt == cur:
                    continue
                t = 0.5 * (cur + nxt)
                if not cur < t:
                    t = nxt
            else:
                if not cur < 1.0:
                    continue
                t = 1.0
            if running > best_total:
                best_total = running
                best_t = t
        return best_t, best_total

else:  # pragma: no cover
    group_median_per_sample_nb = group_median_per_sample_np
    revenue_rewards_nb = revenue_rewards_np
    threshold_scan_nb = threshold_scan_np


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def _i64(x):
    return np.ascontiguousarray(x, dtype=np.int64)


if USE_NUMBA:
    _median_impl, _reward_impl, _scan_impl = group_median_per_sample_nb, revenue_rewards_nb, threshold_scan_nb
else:
    _median_impl, _reward_impl, _scan_impl = group_median_per_sample_np, revenue_rewards_np, threshold_scan_np


def group_median_per_sample(values, group_ids):
    return _median_impl(_f64(values), _i64(group_ids))


def revenue_rewards(pred, label, pred_med, label_med, alpha, beta, gamma):
    return _reward_impl(_f64(pred), _f64(label), _f64(pred_med), _f64(label_med), float(alpha), float(beta), float(gamma))


def threshold_scan(p, profit):
    t, total = _scan_impl(_f64(p), _f64(profit))
    return float(t), float(total)
