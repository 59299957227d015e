"""Shared per-point MLP with coordinate-wise max pooling.

The pooled feature is permutation- and duplication-invariant by
construction; gradients route to the argmax point of each feature channel
(first index on ties).
"""

from dataclasses import dataclass

import numpy as np

from .mlp import MlpModel, mlp_backward, mlp_forward, mlp_init


@dataclass
class PointEncoder:
    mlp: MlpModel   # shared across points, output dim = feature dim

    @property
    def feature_dim(self):
        return self.mlp.output_dim

    def params(self):
        return self.mlp.params()

    def copy(self):
        return PointEncoder(mlp=self.mlp.copy())


def encoder_init(point_dim=3, widths=(64, 128), feature_dim=64, seed=0):
    dims = (point_dim,) + tuple(widths) + (feature_dim,)
    acts = ["relu"] * len(widths) + ["identity"]
    return PointEncoder(mlp=mlp_init(dims, acts, seed=seed))


def encode_points(enc, points):
    """Encode one (N, 3) cloud or a (B, N, 3) batch.

    Returns (g, per_point, cache): g is (G,) or (B, G), per_point keeps the
    pre-pool features for inspection and fusion.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 2
    if single:
        pts = pts[None]
    if pts.ndim != 3:
        raise ValueError(f"points must be (N, 3) or (B, N, 3), got {pts.shape}")
    b, n, d = pts.shape
    feats, mlp_cache = mlp_forward(enc.mlp, pts.reshape(b * n, d))
    feats = feats.reshape(b, n, enc.feature_dim)
    winners = feats.argmax(axis=1)                 # (B, G)
    g = np.take_along_axis(feats, winners[:, None, :], axis=1)[:, 0, :]
    cache = (mlp_cache, winners, (b, n))
    if single:
        return g[0], feats[0], cache
    return g, feats, cache


def encode_backward(enc, cache, d_g, d_per_point=None):
    """Gradients of the encoder parameters given d(g) (and optionally a
    gradient on the pre-pool features)."""
    mlp_cache, winners, (b, n) = cache
    d_g = np.asarray(d_g, dtype=float)
    if d_g.ndim == 1:
        d_g = d_g[None]
    d_feats = np.zeros((b, n, enc.feature_dim))
    np.put_along_axis(d_feats, winners[:, None, :], d_g[:, None, :], axis=1)
    if d_per_point is not None:
        d_feats += d_per_point.reshape(b, n, enc.feature_dim)
    grads, _ = mlp_backward(enc.mlp, mlp_cache,
                            d_feats.reshape(b * n, enc.feature_dim))
    return grads
