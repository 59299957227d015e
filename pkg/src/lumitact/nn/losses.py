"""Losses with analytic gradients: mean squared error and Chamfer distance."""

import numpy as np


def mse_loss_grad(pred, target):
    """Mean over all elements of squared error; returns (loss, d_pred)."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float((diff ** 2).mean())
    return loss, 2.0 * diff / diff.size


def chamfer_loss_grad(pred, target):
    """Symmetric Chamfer distance (mm^2) and its gradient w.r.t. pred.

    Both directional terms are mean squared nearest-neighbour distances;
    assignments are held fixed when differentiating (subgradient at ties,
    first index wins).
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.ndim != 2 or pred.shape[1] != 3 or target.ndim != 2 \
            or target.shape[1] != 3:
        raise ValueError("point clouds must have shape (N, 3)")
    if pred.shape[0] < 1 or target.shape[0] < 1:
        raise ValueError("point clouds must be non-empty")
    nn_pt, nn_tp = _nearest_indices(pred, target)
    n_p = pred.shape[0]
    n_t = target.shape[0]
    # exact distances at the selected pairs (the GEMM expansion used for the
    # argmin can round tiny values)
    fwd = pred - target[nn_pt]
    rev = pred[nn_tp] - target
    loss = float((fwd ** 2).sum(axis=1).mean() + (rev ** 2).sum(axis=1).mean())
    grad = 2.0 * fwd / n_p
    np.add.at(grad, nn_tp, 2.0 * rev / n_t)
    return loss, grad


def _nearest_indices(pred, target):
    """Mutual nearest-neighbour indices via the |x|^2 + |y|^2 - 2xy expansion."""
    d2 = (pred ** 2).sum(axis=1)[:, None] + (target ** 2).sum(axis=1)[None, :]
    d2 -= 2.0 * (pred @ target.T)
    return d2.argmin(axis=1), d2.argmin(axis=0)


def chamfer_loss_grad_batch(pred, target):
    """Per-sample Chamfer losses and gradients for (B, N, 3) batches."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape[0] != target.shape[0]:
        raise ValueError("batch sizes differ")
    b, n_p, _ = pred.shape
    n_t = target.shape[1]
    # nearest-neighbour search runs in float32 (the selected pairs are
    # re-measured exactly below, so only tie-breaking can differ)
    p32 = pred.astype(np.float32)
    t32 = target.astype(np.float32)
    d2 = p32 @ t32.transpose(0, 2, 1)
    d2 *= -2.0
    d2 += (p32 ** 2).sum(axis=2)[:, :, None]
    d2 += (t32 ** 2).sum(axis=2)[:, None, :]
    nn_pt = d2.argmin(axis=2)   # (B, N)
    nn_tp = d2.argmin(axis=1)   # (B, M)
    fwd = pred - np.take_along_axis(target, nn_pt[:, :, None], axis=1)
    rev = np.take_along_axis(pred, nn_tp[:, :, None], axis=1) - target
    losses = (fwd ** 2).sum(axis=2).mean(axis=1) \
        + (rev ** 2).sum(axis=2).mean(axis=1)
    grads = 2.0 * fwd / n_p
    # scatter the reverse term with bincount (np.add.at is unbuffered-slow)
    flat_idx = (np.arange(b)[:, None] * n_p + nn_tp).ravel()
    scale = 2.0 / n_t
    for c in range(3):
        grads[:, :, c] += np.bincount(
            flat_idx, weights=rev[:, :, c].ravel() * scale,
            minlength=b * n_p).reshape(b, n_p)
    return losses, grads
