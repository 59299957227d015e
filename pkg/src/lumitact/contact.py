"""Contact pre-selection: region proposals, inverse lighting, color residual.

Contact is found without any training: the light intensities are estimated
from a ring of pixels just outside each proposed box (regularized least
squares on the attenuation model), the box interior is re-predicted from
that estimate, and the absolute color residual against the observed image
scores the proposal. Contact breaks the un-indented lighting model, so the
contacted box accumulates the largest residual.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .optics import build_coefficient_matrix
from .validation import check_linear_image

log = logging.getLogger(__name__)

MIN_RING_SAMPLES = 24


@dataclass
class ContactProposal:
    """Candidate contact box with its sampling ring and residual score.

    ``core`` is the un-padded tile this proposal owns; ``box`` is the scored
    (possibly overlap-padded) rectangle containing it.
    """

    index: int
    box: tuple                  # (x0, y0, x1, y1) pixel bounds, half-open
    ring: np.ndarray            # (k, 2) row/col pixel indices outside the box
    core: tuple = None
    delta_c: float = None

    def __post_init__(self):
        if self.core is None:
            self.core = self.box

    def box_slice(self):
        x0, y0, x1, y1 = self.box
        return np.s_[y0:y1, x0:x1]

    def contains(self, px, py):
        """Whether the core tile owns the (fractional) pixel position."""
        x0, y0, x1, y1 = self.core
        return x0 <= px < x1 and y0 <= py < y1


@dataclass
class LightEstimate:
    """Per-light, per-channel intensity estimate from ring pixels."""

    x: np.ndarray               # (n_lights, 3)
    residual: float


def propose_regions(shape, grid=(6, 6), overlap=0.0, ring_gap=2,
                    ring_width=2, ring_samples=256):
    """Tile the sensing area with rows x cols boxes plus sampling rings.

    The core tiles partition the image; ``overlap`` pads every scored box by
    that fraction of its size on each side, so a contact centred in a tile
    fits inside the padded box and its ring stays clear of the contact. Each
    ring is a band ``ring_width`` pixels wide at ``ring_gap`` pixels outside
    the padded box, subsampled to at most ``ring_samples`` pixels, and is
    disjoint from the box by construction.
    """
    h, w = shape
    rows, cols = grid
    if rows < 1 or cols < 1:
        raise ValueError("grid must be at least 1x1")
    if rows > h or cols > w:
        raise ValueError(f"grid {rows}x{cols} larger than image {h}x{w}")
    xs = np.linspace(0, w, cols + 1).round().astype(int)
    ys = np.linspace(0, h, rows + 1).round().astype(int)
    proposals = []
    for r in range(rows):
        for c in range(cols):
            cx0, cx1 = int(xs[c]), int(xs[c + 1])
            cy0, cy1 = int(ys[r]), int(ys[r + 1])
            x0, x1, y0, y1 = cx0, cx1, cy0, cy1
            if overlap > 0:
                ox = int(round(overlap * (cx1 - cx0)))
                oy = int(round(overlap * (cy1 - cy0)))
                x0, x1 = max(0, cx0 - ox), min(w, cx1 + ox)
                y0, y1 = max(0, cy0 - oy), min(h, cy1 + oy)
            ring = _ring_pixels((h, w), (x0, y0, x1, y1), ring_gap,
                                ring_width, ring_samples)
            if ring.shape[0] < MIN_RING_SAMPLES:
                raise ValueError(f"ring for box {(x0, y0, x1, y1)} has only "
                                 f"{ring.shape[0]} pixels (< {MIN_RING_SAMPLES})")
            proposals.append(ContactProposal(index=len(proposals),
                                             box=(x0, y0, x1, y1), ring=ring,
                                             core=(cx0, cy0, cx1, cy1)))
    return proposals


def _ring_pixels(shape, box, gap, width, max_samples):
    h, w = shape
    x0, y0, x1, y1 = box
    ox0, oy0 = max(0, x0 - gap - width), max(0, y0 - gap - width)
    ox1, oy1 = min(w, x1 + gap + width), min(h, y1 + gap + width)
    ix0, iy0 = max(0, x0 - gap), max(0, y0 - gap)
    ix1, iy1 = min(w, x1 + gap), min(h, y1 + gap)
    band = np.zeros(shape, dtype=bool)
    band[oy0:oy1, ox0:ox1] = True
    band[iy0:iy1, ix0:ix1] = False
    pix = np.argwhere(band)
    if pix.shape[0] > max_samples:
        sel = np.linspace(0, pix.shape[0] - 1, max_samples).round().astype(int)
        pix = pix[sel]
    return pix


def calibration_pixels(shape, n, rng=None, border_fraction=0.5,
                       border_inset=4):
    """Pixel set conditioning the full-rig inverse problem, (n, 2) indices.

    Half the pixels walk the membrane border at a small inset so that every
    fiber dominates some samples; the rest are uniform over the interior.
    A local box ring cannot constrain far-away fibers, so full-rig estimates
    should use this spread instead.
    """
    h, w = shape
    rng = np.random.default_rng(0) if rng is None else rng
    n_border = int(round(n * border_fraction))
    per = 2.0 * (w + h)
    pix = []
    for i in range(n_border):
        s = (i + 0.5) * per / n_border
        if s < w:
            pix.append((border_inset, int(s) % w))
        elif s < w + h:
            pix.append((int(s - w) % h, w - 1 - border_inset))
        elif s < 2 * w + h:
            pix.append((h - 1 - border_inset, int(2 * w + h - s) % w))
        else:
            pix.append((int(per - s) % h, border_inset))
    interior = np.column_stack([
        rng.integers(border_inset, h - border_inset, n - n_border),
        rng.integers(border_inset, w - border_inset, n - n_border)])
    return np.vstack([np.array(pix, dtype=int), interior])


def _pixels_to_mm(pixels, shape, rig):
    """Grid convention: pixel (row, col) -> (x, y) mm via linspace nodes."""
    h, w = shape
    x = pixels[:, 1] * (rig.width_mm / (w - 1))
    y = pixels[:, 0] * (rig.height_mm / (h - 1))
    return np.column_stack([x, y])


def estimate_lights(img, ring, rig, lam=1e-6, clamp_negative=True,
                    prior=None):
    """Estimate per-light, per-channel intensities from ring pixels.

    Solves min ||A x - b||^2 + lam ||x - prior||^2 per channel (prior 0 by
    default, the plain ridge pseudo-inverse); the attenuation matrix A is
    tall (ring size x n_lights), so the paper-style inverse is realized as a
    regularized least-squares solve. A local ring barely constrains far
    fibers, so proposal scoring passes a whole-image prior to centre those
    directions. Negative entries are clamped to zero (with a warning) since
    physical lights cannot have negative intensity.
    """
    img = check_linear_image(img)
    ring = np.asarray(ring)
    if ring.shape[0] < MIN_RING_SAMPLES:
        raise ValueError(f"need at least {MIN_RING_SAMPLES} ring pixels, "
                         f"got {ring.shape[0]}")
    a = build_coefficient_matrix(_pixels_to_mm(ring, img.shape[:2], rig), rig)
    b = img[ring[:, 0], ring[:, 1]]  # (n, 3)
    if lam == 0.0 and np.linalg.matrix_rank(a) < a.shape[1]:
        raise np.linalg.LinAlgError(
            "attenuation matrix is rank-deficient; set regularization lam > 0")
    shift = np.zeros((a.shape[1], 3)) if prior is None else \
        np.asarray(prior, dtype=float)
    aug = np.vstack([a, np.sqrt(lam) * np.eye(a.shape[1])])
    rhs = np.vstack([b - a @ shift, np.zeros((a.shape[1], 3))])
    x, *_ = np.linalg.lstsq(aug, rhs, rcond=None)
    x = x + shift
    if clamp_negative and np.any(x < 0):
        worst = float(x.min())
        if worst < -1e-9:
            log.warning("clamping %d negative light-intensity estimates "
                        "(min %.3g)", int((x < 0).sum()), worst)
        x = np.maximum(x, 0.0)
    residual = float(np.linalg.norm(a @ x - b))
    return LightEstimate(x=x, residual=residual)


def predict_background(estimate, box, shape, rig):
    """Forward-predict the un-contacted appearance of a box, (bh, bw, 3)."""
    x0, y0, x1, y1 = box
    cols, rows = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
    pix = np.column_stack([rows.ravel(), cols.ravel()])
    a = build_coefficient_matrix(_pixels_to_mm(pix, shape, rig), rig)
    patch = a @ estimate.x
    return patch.reshape(y1 - y0, x1 - x0, 3)


def color_difference(img_patch, background_patch):
    """Sum of absolute per-pixel, per-channel differences."""
    img_patch = np.asarray(img_patch, dtype=float)
    background_patch = np.asarray(background_patch, dtype=float)
    if img_patch.shape != background_patch.shape:
        raise ValueError(f"patch shapes differ: {img_patch.shape} vs "
                         f"{background_patch.shape}")
    return float(np.abs(img_patch - background_patch).sum())


def global_light_prior(img, rig, lam=1e-6, n_pixels=512):
    """Whole-image intensity estimate used to centre proposal solves."""
    pix = calibration_pixels(img.shape[:2], n_pixels,
                             np.random.default_rng(0))
    return estimate_lights(img, pix, rig, lam=lam)


def trim_ring(img, ring, rig, prior, keep=0.75):
    """Drop the ring pixels that disagree most with the prior prediction.

    A ring that crosses a neighbouring contact would otherwise drag its
    light estimate toward explaining the contact; the contacted pixels are
    exactly the ones with large residual against the whole-image prior.
    """
    a = build_coefficient_matrix(_pixels_to_mm(ring, img.shape[:2], rig), rig)
    resid = np.abs(a @ prior - img[ring[:, 0], ring[:, 1]]).sum(axis=1)
    n_keep = max(MIN_RING_SAMPLES, int(round(keep * ring.shape[0])))
    order = np.argsort(resid, kind="stable")
    return ring[np.sort(order[:n_keep])]


def select_contact(img, rig, grid=(6, 6), lam=1e-4, overlap=0.25,
                   ring_samples=256, ring_keep=0.75):
    """Score every proposal and return (best, all proposals, its estimate).

    A whole-image prior is estimated once; each proposal then solves on its
    trimmed ring regularized toward that prior, predicts its interior, and
    accumulates the absolute color residual. Ties resolve to the lowest box
    index.
    """
    img = check_linear_image(img)
    prior = global_light_prior(img, rig).x
    proposals = propose_regions(img.shape[:2], grid=grid, overlap=overlap,
                                ring_samples=ring_samples)
    best = None
    best_estimate = None
    for prop in proposals:
        ring = trim_ring(img, prop.ring, rig, prior, keep=ring_keep)
        est = estimate_lights(img, ring, rig, lam=lam, prior=prior)
        bg = predict_background(est, prop.box, img.shape[:2], rig)
        prop.delta_c = color_difference(img[prop.box_slice()], bg)
        if best is None or prop.delta_c > best.delta_c:
            best = prop
            best_estimate = est
    return best, proposals, best_estimate


def difference_map(img, rig, box, ring, lam=1e-4, prior=None):
    """Signed color-difference map over a box (image minus predicted
    background), the reconstruction network's input."""
    if prior is None:
        prior = global_light_prior(img, rig).x
    est = estimate_lights(img, ring, rig, lam=lam, prior=prior)
    bg = predict_background(est, box, img.shape[:2], rig)
    x0, y0, x1, y1 = box
    return img[y0:y1, x0:x1] - bg, est


class ContactDetector(BaseEstimator):
    """Estimator-style wrapper around the training-free contact selector."""

    def __init__(self, grid=(6, 6), lam=1e-6, overlap=0.0, ring_samples=256):
        self.grid = grid
        self.lam = lam
        self.overlap = overlap
        self.ring_samples = ring_samples

    def fit(self, X=None, y=None):
        # nothing to learn; the detector is closed-form
        return self

    def predict(self, img, rig):
        best, proposals, estimate = select_contact(
            img, rig, grid=self.grid, lam=self.lam, overlap=self.overlap,
            ring_samples=self.ring_samples)
        self.proposals_ = proposals
        self.estimate_ = estimate
        return best
