"""Proprioception: shape-prior autoencoder and contour-conditioned regression.

Stage one fits a point-cloud autoencoder (shared per-point encoder with max
pooling, dense decoder) under the Chamfer reconstruction loss. Stage two
freezes the encoder and learns to predict the deformed cloud from a binary
contour mask: the mask's latent vector is broadcast-added to the frozen
reference features, re-pooled into the fused global feature, and decoded.
The stage-two loss adds a feature-consistency term pulling the fused
feature toward the frozen encoder's embedding of the true deformed cloud.
"""

import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .nn import (encode_backward, encode_points, load_checkpoint,
                 mlp_backward, mlp_forward, mlp_init, save_checkpoint, train)
from .nn.losses import chamfer_loss_grad_batch
from .nn.mlp import DenseLayer, MlpModel
from .nn.pointnet import PointEncoder, encoder_init
from .validation import check_points

DEFAULT_NORM_CENTER = (55.0, 20.0, 0.0)
DEFAULT_NORM_SCALE = 55.0


def _normalize(points, center, scale):
    return (np.asarray(points, dtype=float) - center) / scale


def _denormalize(points, center, scale):
    return np.asarray(points, dtype=float) * scale + center


def _decode_batch(decoder, g, n_points):
    out, cache = mlp_forward(decoder, g)
    return out.reshape(-1, n_points, 3), cache


class CloudAutoencoder(BaseEstimator):
    """Point-cloud autoencoder with a permutation-invariant encoder.

    After fit() the encoder is treated as frozen: stage-two training never
    touches its arrays, which the frozen-bytes test relies on.
    """

    def __init__(self, n_points=512, feature_dim=64, encoder_widths=(64, 128),
                 decoder_widths=(256, 512), lr=1e-3, epochs=60, batch_size=16,
                 seed=0, norm_center=DEFAULT_NORM_CENTER,
                 norm_scale=DEFAULT_NORM_SCALE):
        self.n_points = n_points
        self.feature_dim = feature_dim
        self.encoder_widths = encoder_widths
        self.decoder_widths = decoder_widths
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.norm_center = norm_center
        self.norm_scale = norm_scale

    def _check_fitted(self):
        if not hasattr(self, "encoder_"):
            raise NotFittedError("CloudAutoencoder is not fitted")

    def fit(self, clouds):
        clouds = np.asarray(clouds, dtype=float)
        if clouds.ndim != 3 or clouds.shape[2] != 3:
            raise ValueError(f"clouds must be (M, N, 3), got {clouds.shape}")
        if clouds.shape[1] != self.n_points:
            raise ValueError(f"clouds have {clouds.shape[1]} points, "
                             f"expected {self.n_points}")
        center = np.asarray(self.norm_center, dtype=float)
        data = _normalize(clouds, center, self.norm_scale)

        self.encoder_ = encoder_init(3, tuple(self.encoder_widths),
                                     self.feature_dim, seed=self.seed)
        dec_dims = ([self.feature_dim] + list(self.decoder_widths)
                    + [3 * self.n_points])
        self.decoder_ = mlp_init(dec_dims,
                                 ["relu"] * len(self.decoder_widths)
                                 + ["identity"], seed=self.seed + 1)
        params = self.encoder_.params() + self.decoder_.params()
        n_enc = len(self.encoder_.params())

        def step(idx):
            batch = data[idx]
            g, _, enc_cache = encode_points(self.encoder_, batch)
            pred, dec_cache = _decode_batch(self.decoder_, g, self.n_points)
            losses, d_pred = chamfer_loss_grad_batch(pred, batch)
            d_pred /= batch.shape[0]
            g_dec, d_g = mlp_backward(self.decoder_, dec_cache,
                                      d_pred.reshape(batch.shape[0], -1))
            g_enc = encode_backward(self.encoder_, enc_cache, d_g)
            return float(losses.mean()), g_enc + g_dec

        result = train(step, params, data.shape[0], epochs=self.epochs,
                       batch_size=self.batch_size, seed=self.seed, lr=self.lr)
        self.loss_curve_ = result.loss_curve
        self.n_encoder_params_ = n_enc
        return self

    def encode(self, cloud):
        """Global feature of one cloud (normalized internally)."""
        self._check_fitted()
        pts = _normalize(check_points(cloud), np.asarray(self.norm_center),
                         self.norm_scale)
        g, _, _ = encode_points(self.encoder_, pts)
        return g

    def decode(self, g):
        self._check_fitted()
        out, _ = mlp_forward(self.decoder_, np.asarray(g, dtype=float))
        pts = out.reshape(self.n_points, 3)
        return _denormalize(pts, np.asarray(self.norm_center), self.norm_scale)

    def reconstruct(self, cloud):
        return self.decode(self.encode(cloud))

    def reconstruction_chamfer(self, clouds):
        """Mean Chamfer (mm^2) between clouds and their reconstructions."""
        from .cloud import chamfer_distance
        return float(np.mean([chamfer_distance(self.reconstruct(c), c)
                              for c in clouds]))

    def encoder_bytes(self):
        """Serialized encoder parameters, for frozen-weight assertions."""
        self._check_fitted()
        return b"".join(np.ascontiguousarray(p).tobytes()
                        for p in self.encoder_.params())

    def save(self, path):
        self._check_fitted()
        meta = {"kind": "cloud_autoencoder",
                "params": {k: (list(v) if isinstance(v, tuple) else v)
                           for k, v in self.get_params().items()},
                "encoder_acts": [l.activation for l in self.encoder_.mlp.layers],
                "decoder_acts": [l.activation for l in self.decoder_.layers]}
        arrays = {}
        for i, l in enumerate(self.encoder_.mlp.layers):
            arrays[f"enc_w{i}"] = l.weight
            arrays[f"enc_b{i}"] = l.bias
        for i, l in enumerate(self.decoder_.layers):
            arrays[f"dec_w{i}"] = l.weight
            arrays[f"dec_b{i}"] = l.bias
        save_checkpoint(path, meta, arrays)

    @classmethod
    def load(cls, path):
        meta, arrays = load_checkpoint(path)
        if meta.get("kind") != "cloud_autoencoder":
            raise ValueError(f"{path} is not an autoencoder checkpoint")
        est = cls(**{k: (tuple(v) if isinstance(v, list) else v)
                     for k, v in meta["params"].items()})
        enc_layers = [DenseLayer(arrays[f"enc_w{i}"], arrays[f"enc_b{i}"], a)
                      for i, a in enumerate(meta["encoder_acts"])]
        dec_layers = [DenseLayer(arrays[f"dec_w{i}"], arrays[f"dec_b{i}"], a)
                      for i, a in enumerate(meta["decoder_acts"])]
        est.encoder_ = PointEncoder(mlp=MlpModel(layers=enc_layers))
        est.decoder_ = MlpModel(layers=dec_layers)
        return est


def downsample_mask(mask, size=32):
    """Block-mean a square binary mask down to (size, size) floats."""
    mask = np.asarray(mask)
    h, w = mask.shape
    if h != w or h % size != 0:
        raise ValueError(f"mask must be square with side divisible by "
                         f"{size}, got {mask.shape}")
    f = h // size
    return mask.reshape(size, f, size, f).mean(axis=(1, 3))


class ProprioRegressor(BaseEstimator):
    """Contour-mask to deformed-cloud regressor on a frozen shape prior.

    fit() needs a fitted CloudAutoencoder, the training (mask, deformed
    cloud) pairs, and the fixed shape-reference cloud. The loss curve holds
    (total, chamfer term, feature term) per epoch.
    """

    def __init__(self, mask_size=32, mask_widths=(256, 128), lr=1e-3,
                 epochs=60, batch_size=16, seed=0):
        self.mask_size = mask_size
        self.mask_widths = mask_widths
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _check_fitted(self):
        if not hasattr(self, "mask_mlp_"):
            raise NotFittedError("ProprioRegressor is not fitted")

    def fit(self, autoencoder, masks, deformed_clouds, shape_ref):
        autoencoder._check_fitted()
        self.autoencoder_ = autoencoder
        n_points = autoencoder.n_points
        feat_dim = autoencoder.feature_dim
        center = np.asarray(autoencoder.norm_center, dtype=float)
        scale = autoencoder.norm_scale

        deformed = np.asarray(deformed_clouds, dtype=float)
        if deformed.ndim != 3 or deformed.shape[1] != n_points:
            raise ValueError(f"deformed clouds must be (M, {n_points}, 3)")
        if len(masks) != deformed.shape[0]:
            raise ValueError("masks and clouds disagree in length")
        targets = _normalize(deformed, center, scale)

        self.shape_ref_ = check_points(shape_ref).copy()
        ref_norm = _normalize(self.shape_ref_, center, scale)
        g_ref, ref_feats, _ = encode_points(autoencoder.encoder_, ref_norm)
        self.ref_feats_ = ref_feats          # (N_ref, G) frozen
        self.g_ref_ = g_ref                  # (G,)

        # frozen-encoder embeddings of the true deformed clouds
        g_pre, _, _ = encode_points(autoencoder.encoder_, targets)

        mask_in = np.stack([downsample_mask(m, self.mask_size).ravel()
                            for m in masks])
        in_dim = self.mask_size * self.mask_size
        self.mask_mlp_ = mlp_init([in_dim] + list(self.mask_widths)
                                  + [feat_dim],
                                  ["relu"] * len(self.mask_widths)
                                  + ["identity"], seed=self.seed + 2)
        self.decoder_ = autoencoder.decoder_.copy()  # fine-tuned copy
        params = self.mask_mlp_.params() + self.decoder_.params()
        n_mask_params = len(self.mask_mlp_.params())
        inv_n = 1.0 / n_points

        def step(idx):
            b = idx.shape[0]
            v, mask_cache = mlp_forward(self.mask_mlp_, mask_in[idx])
            # broadcast-add to per-point reference features, then re-pool;
            # with a constant shift the pooled value is g_ref + v
            fused = self.ref_feats_[None, :, :] + v[:, None, :]
            g = fused.max(axis=1)
            pred, dec_cache = _decode_batch(self.decoder_, g, n_points)
            cd_losses, d_pred = chamfer_loss_grad_batch(pred, targets[idx])
            d_pred /= b
            diff = g - g_pre[idx]
            feat_loss = float(inv_n * (diff ** 2).sum(axis=1).mean())
            g_dec, d_g = mlp_backward(self.decoder_, dec_cache,
                                      d_pred.reshape(b, -1))
            d_g = d_g + 2.0 * inv_n * diff / b
            g_mask, _ = mlp_backward(self.mask_mlp_, mask_cache, d_g)
            cd = float(cd_losses.mean())
            return (cd + feat_loss, cd, feat_loss), g_mask + g_dec

        result = train(step, params, deformed.shape[0], epochs=self.epochs,
                       batch_size=self.batch_size, seed=self.seed, lr=self.lr)
        self.loss_curve_ = result.loss_curve   # (epochs, 3)
        self.n_mask_params_ = n_mask_params
        return self

    def predict(self, mask):
        """Predicted deformed cloud (mm) and fused global feature."""
        self._check_fitted()
        x = downsample_mask(mask, self.mask_size).ravel()
        v, _ = mlp_forward(self.mask_mlp_, x)
        fused = self.ref_feats_ + v[None, :]
        g = fused.max(axis=0)
        out, _ = mlp_forward(self.decoder_, g)
        pts = out.reshape(self.autoencoder_.n_points, 3)
        cloud = _denormalize(pts, np.asarray(self.autoencoder_.norm_center),
                             self.autoencoder_.norm_scale)
        return cloud, g

    def measure_latency(self, mask, repeats=10):
        """Mean predict() wall time in seconds (reported, not asserted)."""
        self._check_fitted()
        self.predict(mask)  # warm up
        start = time.perf_counter()
        for _ in range(repeats):
            self.predict(mask)
        return (time.perf_counter() - start) / repeats

    def save(self, path, autoencoder_path=None):
        self._check_fitted()
        meta = {"kind": "proprio_regressor",
                "params": {k: (list(v) if isinstance(v, tuple) else v)
                           for k, v in self.get_params().items()},
                "mask_acts": [l.activation for l in self.mask_mlp_.layers],
                "decoder_acts": [l.activation for l in self.decoder_.layers],
                "autoencoder_path": autoencoder_path}
        arrays = {"shape_ref": self.shape_ref_, "ref_feats": self.ref_feats_,
                  "g_ref": self.g_ref_}
        for i, l in enumerate(self.mask_mlp_.layers):
            arrays[f"mask_w{i}"] = l.weight
            arrays[f"mask_b{i}"] = l.bias
        for i, l in enumerate(self.decoder_.layers):
            arrays[f"dec_w{i}"] = l.weight
            arrays[f"dec_b{i}"] = l.bias
        save_checkpoint(path, meta, arrays)

    @classmethod
    def load(cls, path, autoencoder):
        meta, arrays = load_checkpoint(path)
        if meta.get("kind") != "proprio_regressor":
            raise ValueError(f"{path} is not a proprio checkpoint")
        est = cls(**{k: (tuple(v) if isinstance(v, list) else v)
                     for k, v in meta["params"].items()})
        est.autoencoder_ = autoencoder
        est.shape_ref_ = arrays["shape_ref"]
        est.ref_feats_ = arrays["ref_feats"]
        est.g_ref_ = arrays["g_ref"]
        est.mask_mlp_ = MlpModel(layers=[
            DenseLayer(arrays[f"mask_w{i}"], arrays[f"mask_b{i}"], a)
            for i, a in enumerate(meta["mask_acts"])])
        est.decoder_ = MlpModel(layers=[
            DenseLayer(arrays[f"dec_w{i}"], arrays[f"dec_b{i}"], a)
            for i, a in enumerate(meta["decoder_acts"])])
        return est
