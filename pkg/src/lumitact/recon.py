"""Tactile reconstruction: pixel features, normal regression, and Poisson
depth integration.

Per-pixel features are the 3x3 neighbourhood of the color-difference map
(27 values) plus the normalized pixel position (2 values). A conditional
MLP regresses surface normals from them; integrating the normal field's
gradient recovers the indentation depth.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .nn import (Adam, mlp_backward, mlp_forward, mlp_init, mse_loss_grad,
                 train)
from .validation import check_rng

FEATURE_DIM = 29  # 3x3 neighbourhood x 3 channels + (x, y)


def extract_features(diff, box, m=None, outside_fraction=0.2, rng=None,
                     outside_margin=8):
    """Per-pixel features from a color-difference map.

    Parameters
    ----------
    diff : (H, W, 3) signed color-difference map (image minus predicted
        background), zero-padded implicitly by clamping at the borders.
    box : (x0, y0, x1, y1) pixel rectangle to sample from.
    m : number of rows; None takes every in-box pixel and no outside ones
        (the inference layout). Otherwise ``m`` rows are drawn, an
        ``outside_fraction`` share of them from a band around the box.
    rng : seed or Generator for the sampled layout.

    Returns
    -------
    features : (k, 29) array, neighbourhood values then normalized (x, y).
    pixels : (k, 2) row/col indices the rows were sampled at.
    """
    diff = np.asarray(diff, dtype=float)
    h, w = diff.shape[:2]
    x0, y0, x1, y1 = box
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise ValueError(f"box {box} invalid for image {h}x{w}")
    cols, rows = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
    inside = np.column_stack([rows.ravel(), cols.ravel()])
    if m is None:
        pixels = inside
    else:
        if m < 1:
            raise ValueError("m must be >= 1")
        rng = check_rng(rng)
        m_out = int(round(m * outside_fraction))
        m_in = m - m_out
        replace = inside.shape[0] < m_in
        pick = rng.choice(inside.shape[0], size=m_in, replace=replace)
        pixels = inside[pick]
        if m_out > 0:
            band = _outside_band((h, w), box, outside_margin)
            if band.shape[0] == 0:
                raise ValueError("no pixels available outside the box")
            pick = rng.choice(band.shape[0], size=m_out,
                              replace=band.shape[0] < m_out)
            pixels = np.vstack([pixels, band[pick]])
    feats = np.empty((pixels.shape[0], FEATURE_DIM))
    col = 0
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            yy = np.clip(pixels[:, 0] + dy, 0, h - 1)
            xx = np.clip(pixels[:, 1] + dx, 0, w - 1)
            feats[:, col:col + 3] = diff[yy, xx]
            col += 3
    feats[:, 27] = pixels[:, 1] / (w - 1)
    feats[:, 28] = pixels[:, 0] / (h - 1)
    return feats, pixels


def _outside_band(shape, box, margin):
    h, w = shape
    x0, y0, x1, y1 = box
    keep = np.zeros(shape, dtype=bool)
    keep[max(0, y0 - margin):min(h, y1 + margin),
         max(0, x0 - margin):min(w, x1 + margin)] = True
    keep[y0:y1, x0:x1] = False
    return np.argwhere(keep)


@dataclass
class TactilePress:
    """One training sample for the normal regressor."""

    diff: np.ndarray        # (H, W, 3) color-difference map
    box: tuple              # (x0, y0, x1, y1)
    normals: np.ndarray     # (H, W, 3) ground-truth normals
    condition: np.ndarray   # global feature of the bend state, or None


class NormalRegressor(BaseEstimator):
    """Conditional MLP mapping 29-dim pixel features to surface normals.

    A 3-layer encoder reads the color features; the bend-state global
    feature is concatenated at the bottleneck and a 3-layer decoder emits a
    raw 3-vector per pixel, trained with MSE against ground-truth normals
    and renormalized to unit length at inference.
    """

    def __init__(self, width=128, condition_dim=64, use_condition=True,
                 m_per_press=2000, outside_fraction=0.2, lr=1e-3, epochs=20,
                 batch_size=4096, seed=0):
        self.width = width
        self.condition_dim = condition_dim
        self.use_condition = use_condition
        self.m_per_press = m_per_press
        self.outside_fraction = outside_fraction
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _check_fitted(self):
        if not hasattr(self, "encoder_"):
            raise NotFittedError("NormalRegressor is not fitted")

    def _cond(self, condition):
        if not self.use_condition:
            return np.zeros(0)
        if condition is None:
            raise ValueError("this model was trained with conditioning; "
                             "pass the bend-state feature")
        c = np.asarray(condition, dtype=float).ravel()
        if c.shape[0] != self.condition_dim:
            raise ValueError(f"condition dim {c.shape[0]} != "
                             f"{self.condition_dim}")
        return c

    def fit(self, presses):
        if len(presses) == 0:
            raise ValueError("no training presses")
        rng = np.random.default_rng(self.seed)
        xs, cs, ys = [], [], []
        for press in presses:
            feats, pixels = extract_features(
                press.diff, press.box, m=self.m_per_press,
                outside_fraction=self.outside_fraction, rng=rng)
            xs.append(feats)
            ys.append(press.normals[pixels[:, 0], pixels[:, 1]])
            cs.append(np.tile(self._cond(press.condition),
                              (feats.shape[0], 1)))
        x = np.vstack(xs)
        y = np.vstack(ys)
        c = np.vstack(cs)
        self.feat_mean_ = x.mean(axis=0)
        self.feat_std_ = np.maximum(x.std(axis=0), 1e-9)
        x = (x - self.feat_mean_) / self.feat_std_

        cond_dim = c.shape[1]
        self.encoder_ = mlp_init([FEATURE_DIM, self.width, self.width,
                                  self.width],
                                 ["relu", "relu", "relu"], seed=self.seed)
        self.decoder_ = mlp_init([self.width + cond_dim, self.width,
                                  self.width, 3],
                                 ["relu", "relu", "identity"],
                                 seed=self.seed + 1)
        params = self.encoder_.params() + self.decoder_.params()
        n_enc = len(self.encoder_.params())

        def step(idx):
            hb, cache_e = mlp_forward(self.encoder_, x[idx])
            fused = np.hstack([hb, c[idx]])
            out, cache_d = mlp_forward(self.decoder_, fused)
            loss, d_out = mse_loss_grad(out, y[idx])
            g_dec, d_fused = mlp_backward(self.decoder_, cache_d, d_out)
            g_enc, _ = mlp_backward(self.encoder_, cache_e,
                                    d_fused[:, :self.width])
            return loss, g_enc + g_dec

        result = train(step, params, x.shape[0], epochs=self.epochs,
                       batch_size=self.batch_size, seed=self.seed, lr=self.lr)
        self.loss_curve_ = result.loss_curve
        self.n_encoder_params_ = n_enc
        return self

    def predict_raw(self, feats, condition=None):
        """Raw (un-normalized) 3-vector outputs for standardized features."""
        self._check_fitted()
        x = (feats - self.feat_mean_) / self.feat_std_
        h, _ = mlp_forward(self.encoder_, x)
        cvec = self._cond(condition)
        fused = np.hstack([h, np.tile(cvec, (h.shape[0], 1))])
        out, _ = mlp_forward(self.decoder_, fused)
        return out

    def predict(self, diff, box, condition=None, min_norm=1e-6):
        """Normal map over the whole image; (0, 0, 1) outside the box.

        Raw outputs are renormalized to unit length; pixels whose raw output
        is too short to normalize are flagged and set to (0, 0, 1).

        Returns (normals (H, W, 3), contact_mask (H, W), flagged (H, W)).
        """
        self._check_fitted()
        diff = np.asarray(diff, dtype=float)
        h, w = diff.shape[:2]
        feats, pixels = extract_features(diff, box, m=None)
        raw = self.predict_raw(feats, condition)
        norms = np.linalg.norm(raw, axis=1)
        ok = norms > min_norm
        unit = np.zeros_like(raw)
        unit[ok] = raw[ok] / norms[ok, None]
        unit[~ok] = (0.0, 0.0, 1.0)
        # a height-field surface always faces the camera; keep z positive
        flipped = unit[:, 2] <= 0
        unit[flipped] = (0.0, 0.0, 1.0)
        normals = np.zeros((h, w, 3))
        normals[:, :, 2] = 1.0
        normals[pixels[:, 0], pixels[:, 1]] = unit
        mask = np.zeros((h, w), dtype=bool)
        x0, y0, x1, y1 = box
        mask[y0:y1, x0:x1] = True
        flagged = np.zeros((h, w), dtype=bool)
        flagged[pixels[:, 0], pixels[:, 1]] = ~ok | flipped
        return normals, mask, flagged

    def save(self, path):
        from .nn import save_checkpoint
        self._check_fitted()
        meta = {"kind": "normal_regressor",
                "params": {k: (list(v) if isinstance(v, tuple) else v)
                           for k, v in self.get_params().items()},
                "encoder_acts": [l.activation for l in self.encoder_.layers],
                "decoder_acts": [l.activation for l in self.decoder_.layers]}
        arrays = {"feat_mean": self.feat_mean_, "feat_std": self.feat_std_}
        for i, l in enumerate(self.encoder_.layers):
            arrays[f"enc_w{i}"] = l.weight
            arrays[f"enc_b{i}"] = l.bias
        for i, l in enumerate(self.decoder_.layers):
            arrays[f"dec_w{i}"] = l.weight
            arrays[f"dec_b{i}"] = l.bias
        save_checkpoint(path, meta, arrays)

    @classmethod
    def load(cls, path):
        from .nn import load_checkpoint
        from .nn.mlp import DenseLayer, MlpModel
        meta, arrays = load_checkpoint(path)
        if meta.get("kind") != "normal_regressor":
            raise ValueError(f"{path} is not a normal-regressor checkpoint")
        est = cls(**{k: (tuple(v) if isinstance(v, list) else v)
                     for k, v in meta["params"].items()})
        est.feat_mean_ = arrays["feat_mean"]
        est.feat_std_ = arrays["feat_std"]
        enc_layers = []
        for i, act in enumerate(meta["encoder_acts"]):
            enc_layers.append(DenseLayer(arrays[f"enc_w{i}"],
                                         arrays[f"enc_b{i}"], act))
        dec_layers = []
        for i, act in enumerate(meta["decoder_acts"]):
            dec_layers.append(DenseLayer(arrays[f"dec_w{i}"],
                                         arrays[f"dec_b{i}"], act))
        est.encoder_ = MlpModel(layers=enc_layers)
        est.decoder_ = MlpModel(layers=dec_layers)
        return est


def poisson_integrate(normals, pitch_mm, mask=None, max_residual=1e-8):
    """Integrate a normal map to an indentation depth field.

    Solves the least-squares gradient problem: forward-difference gradients
    of z must match the link-averaged slopes p = -Nx/Nz, q = -Ny/Nz, with
    z = 0 held on the array border and outside ``mask``. The normal
    equations are the standard five-point Poisson system; a direct sparse
    solve brings the residual below ``max_residual``.

    Returns the (H, W) depth array in mm.
    """
    normals = np.asarray(normals, dtype=float)
    h, w = normals.shape[:2]
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
    if np.any(normals[mask][:, 2] <= 0):
        raise ValueError("normals must have positive z inside the region")
    unknown = mask.copy()
    unknown[0, :] = unknown[-1, :] = unknown[:, 0] = unknown[:, -1] = False
    n_unknown = int(unknown.sum())
    if n_unknown == 0:
        return np.zeros((h, w))
    index = np.full((h, w), -1, dtype=np.int64)
    index[unknown] = np.arange(n_unknown)

    nz = normals[:, :, 2]
    p = np.where(nz > 0, -normals[:, :, 0] / np.where(nz > 0, nz, 1.0), 0.0)
    q = np.where(nz > 0, -normals[:, :, 1] / np.where(nz > 0, nz, 1.0), 0.0)

    rows_list, cols_list, vals_list, rhs_list = [], [], [], []
    eq_base = 0

    def add_links(i0, j0, i1, j1, slope):
        nonlocal eq_base
        a = index[i0, j0]
        b = index[i1, j1]
        use = (a >= 0) | (b >= 0)
        n_eq = int(use.sum())
        eq = np.arange(n_eq) + eq_base
        sel_a = a[use] >= 0
        sel_b = b[use] >= 0
        rows_list.append(eq[sel_b])
        cols_list.append(b[use][sel_b])
        vals_list.append(np.full(int(sel_b.sum()), 1.0 / pitch_mm))
        rows_list.append(eq[sel_a])
        cols_list.append(a[use][sel_a])
        vals_list.append(np.full(int(sel_a.sum()), -1.0 / pitch_mm))
        rhs_list.append(slope[use])
        eq_base += n_eq

    ii, jj = np.meshgrid(np.arange(h), np.arange(w - 1), indexing="ij")
    add_links(ii, jj, ii, jj + 1, 0.5 * (p[:, :-1] + p[:, 1:]))
    ii, jj = np.meshgrid(np.arange(h - 1), np.arange(w), indexing="ij")
    add_links(ii, jj, ii + 1, jj, 0.5 * (q[:-1, :] + q[1:, :]))

    g = sp.csr_matrix((np.concatenate(vals_list),
                       (np.concatenate(rows_list), np.concatenate(cols_list))),
                      shape=(eq_base, n_unknown))
    rhs = np.concatenate(rhs_list)
    lhs = (g.T @ g).tocsc()
    gt_rhs = g.T @ rhs
    z = spsolve(lhs, gt_rhs)
    residual = float(np.max(np.abs(lhs @ z - gt_rhs))) if n_unknown else 0.0
    if residual > max_residual:
        raise RuntimeError(f"Poisson solve did not converge: residual "
                           f"{residual:.3e} > {max_residual:.1e}")
    out = np.zeros((h, w))
    out[unknown] = z
    return out


@dataclass
class TactileMetrics:
    chamfer_mm2: float
    chamfer_mm: float
    max_depth_error_mm: float


def evaluate_tactile(z_rec, z_true, mask, pitch_mm):
    """Chamfer distance and max depth error over the contact region.

    Both surfaces are sampled as (x, y, z) clouds at the masked grid nodes;
    the Chamfer value follows the symmetric squared-distance convention
    (mm^2) with its square root reported in mm.
    """
    from .cloud import chamfer_distance
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("contact region is empty")
    ii, jj = np.nonzero(mask)
    rec = np.column_stack([jj * pitch_mm, ii * pitch_mm, z_rec[ii, jj]])
    true = np.column_stack([jj * pitch_mm, ii * pitch_mm, z_true[ii, jj]])
    cd = chamfer_distance(rec, true)
    max_err = float(np.abs(z_rec[ii, jj] - z_true[ii, jj]).max())
    return TactileMetrics(chamfer_mm2=cd, chamfer_mm=float(np.sqrt(cd)),
                          max_depth_error_mm=max_err)
