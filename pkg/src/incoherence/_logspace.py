"""Log-domain helpers with an exact -inf sentinel for probability zero."""

import numpy as np
from scipy.special import entr, rel_entr


def safe_log(p):
    """Natural log with log(0) = -inf and no warnings."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(p)


def log_expect(log_values, weights, axis=-1):
    """Return log E_w[exp(x)] along ``axis``.

    Terms with zero weight are dropped entirely, so ``0 * exp(-inf)`` never
    produces NaN. A slice whose surviving terms are all -inf yields -inf.
    """
    x, w = np.broadcast_arrays(np.asarray(log_values, dtype=float),
                               np.asarray(weights, dtype=float))
    mask = w > 0
    xm = np.where(mask, x, -np.inf)
    top = np.max(xm, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mask, w * np.exp(xm - top), 0.0)
        out = np.log(np.sum(terms, axis=axis, keepdims=True)) + top
    return np.squeeze(out, axis=axis)


def weighted_sum(weights, values, axis=None):
    """Sum of ``w * v`` where zero weights contribute 0 even against -inf."""
    w, v = np.broadcast_arrays(np.asarray(weights, dtype=float),
                               np.asarray(values, dtype=float))
    with np.errstate(invalid="ignore"):
        return np.sum(np.where(w > 0, w * v, 0.0), axis=axis)


def kl_rows(p, q, axis=-1):
    """Row-wise KL(p || q) in nats with 0 log 0 = 0 and p > 0, q = 0 -> inf.

    Rounding can push a sum of near-cancelling terms below zero; it is clipped.
    """
    return np.maximum(np.sum(rel_entr(p, q), axis=axis), 0.0)


def entropy_rows(p, axis=-1):
    return np.sum(entr(p), axis=axis)


def tv_rows(p, q, axis=-1):
    return 0.5 * np.sum(np.abs(np.asarray(p) - np.asarray(q)), axis=axis)
