"""Central finite-difference verification of analytic gradients."""

import numpy as np


def finite_difference_grads(loss_fn, params, h=1e-5):
    """Numerically differentiate loss_fn() w.r.t. every entry of params.

    ``loss_fn`` takes no arguments and must read the (mutated) params; the
    arrays are restored before returning.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.ravel()
        gflat = g.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            hi = loss_fn()
            flat[k] = orig - h
            lo = loss_fn()
            flat[k] = orig
            gflat[k] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-8):
    """Worst-case |a - n| / max(|a|, |n|, floor) across parameter arrays."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst
