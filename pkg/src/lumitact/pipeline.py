"""End-to-end tactile orchestration: press synthesis and reconstruction.

Glues the forward model to the inverse path: render a press, estimate the
background, cut the color-difference map, regress normals, integrate depth.
Training presses are rendered sparsely (box, ring, and calibration pixels
only), which keeps large datasets cheap without touching the model.
"""

from dataclasses import dataclass

import numpy as np

from .contact import (calibration_pixels, difference_map, estimate_lights,
                      propose_regions, select_contact, trim_ring)
from .deform import BendParams, deform_membrane
from .membrane import (HeightField, Indenter, apply_indenter, compute_normals,
                       contact_mask)
from .optics import render
from .recon import (NormalRegressor, TactilePress, evaluate_tactile,
                    poisson_integrate)
from .validation import check_rng


@dataclass
class PressScene:
    """A rendered press with everything the inverse path needs."""

    field: HeightField
    bend: BendParams
    press: TactilePress
    proposal: object


def _press_pixels(shape, prop, n_calibration=512):
    """Union of box, ring, and calibration pixels for sparse rendering."""
    h, w = shape
    x0, y0, x1, y1 = prop.box
    cols, rows = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
    box_pix = np.column_stack([rows.ravel(), cols.ravel()])
    calib = calibration_pixels(shape, n_calibration, np.random.default_rng(0))
    pix = np.vstack([box_pix, prop.ring, calib])
    return np.unique(pix, axis=0)


def owning_proposal(proposals, field, center):
    """The proposal whose core tile contains a membrane position (mm)."""
    px = center[0] / field.pitch_x_mm
    py = center[1] / field.pitch_y_mm
    for prop in proposals:
        if prop.contains(px, py):
            return prop
    raise ValueError(f"no proposal owns centre {center}")


def make_press(base, rig, indenter, center, depth, bend=None, proposals=None,
               condition=None, sparse=True, lam=1e-4):
    """Render one press and extract its color-difference training sample.

    The contact box is the proposal owning the press centre (ground truth is
    known during dataset generation, so region proposal is skipped); the
    background comes from the trimmed-ring estimate, exactly as at
    inference.
    """
    if proposals is None:
        proposals = propose_regions((base.ny, base.nx))
    fld = apply_indenter(base, indenter, center, depth)
    prop = owning_proposal(proposals, base, center)
    pixels = _press_pixels((base.ny, base.nx), prop) if sparse else None
    img = render(fld, rig, bend, pixels=pixels)
    prior = estimate_lights(
        img, calibration_pixels((base.ny, base.nx), 512,
                                np.random.default_rng(0)),
        rig, lam=1e-6).x
    ring = trim_ring(img, prop.ring, rig, prior)
    diff, _ = difference_map(img, rig, prop.box, ring, lam=lam, prior=prior)
    full = np.zeros_like(img)
    x0, y0, x1, y1 = prop.box
    full[y0:y1, x0:x1] = diff
    press = TactilePress(diff=full, box=prop.box,
                         normals=compute_normals(fld), condition=condition)
    return PressScene(field=fld, bend=bend, press=press, proposal=prop)


def sphere_press_dataset(base, rig, n_presses, bend_levels=(0.0,),
                         depth_range=(0.5, 1.5), radius_mm=5.0, rng=None,
                         grid=(6, 6), overlap=0.25, margin_mm=4.0,
                         conditions=None):
    """Random sphere presses across bend levels, for regressor training.

    ``conditions`` optionally maps each bend level to its global feature;
    presses then carry the matching conditioning vector.
    """
    rng = check_rng(rng)
    proposals = propose_regions((base.ny, base.nx), grid=grid, overlap=overlap)
    presses = []
    for _ in range(n_presses):
        center = (rng.uniform(margin_mm + radius_mm,
                              base.width_mm - margin_mm - radius_mm),
                  rng.uniform(margin_mm, base.height_mm - margin_mm))
        depth = rng.uniform(*depth_range)
        level = int(rng.integers(0, len(bend_levels)))
        kappa = bend_levels[level]
        bend = BendParams(kappa_long=kappa) if kappa else None
        cond = None if conditions is None else conditions[level]
        scene = make_press(base, rig, Indenter.sphere(radius_mm), center,
                           depth, bend, proposals, condition=cond)
        presses.append(scene.press)
    return presses


def bend_condition_features(autoencoder, base, bend_levels, n_points=512,
                            seed=0):
    """Frozen-encoder global features of the bent membrane, per bend level."""
    feats = []
    for kappa in bend_levels:
        bend = BendParams(kappa_long=kappa)
        surf = deform_membrane(base, bend, n_points,
                               np.random.default_rng(seed))
        feats.append(autoencoder.encode(surf.cloud))
    return feats


@dataclass
class ReconResult:
    proposal: object
    diff: np.ndarray
    normals: np.ndarray
    mask: np.ndarray
    depth: np.ndarray          # (H, W) mm, zero outside the solved box
    no_contact: bool


def reconstruct(img, rig, regressor, condition=None, grid=(6, 6),
                overlap=0.25, lam=1e-4, pitch_mm=None,
                no_contact_threshold=None):
    """Full inverse path on one image: select, regress, integrate.

    ``no_contact_threshold`` (a Delta-C value) short-circuits reconstruction
    when the best proposal scores below it.
    """
    best, proposals, _ = select_contact(img, rig, grid=grid, overlap=overlap,
                                        lam=lam)
    h, w = img.shape[:2]
    if pitch_mm is None:
        pitch_mm = rig.width_mm / (w - 1)
    if no_contact_threshold is not None and best.delta_c < no_contact_threshold:
        flat = np.zeros((h, w, 3))
        flat[:, :, 2] = 1.0
        return ReconResult(proposal=best, diff=np.zeros_like(img),
                           normals=flat, mask=np.zeros((h, w), bool),
                           depth=np.zeros((h, w)), no_contact=True)
    prior = estimate_lights(
        img, calibration_pixels((h, w), 512, np.random.default_rng(0)),
        rig, lam=1e-6).x
    ring = trim_ring(img, best.ring, rig, prior)
    diff, _ = difference_map(img, rig, best.box, ring, lam=lam, prior=prior)
    full = np.zeros_like(img)
    x0, y0, x1, y1 = best.box
    full[y0:y1, x0:x1] = diff
    normals, mask, _ = regressor.predict(full, best.box, condition)
    depth = poisson_integrate(normals, pitch_mm, mask)
    return ReconResult(proposal=best, diff=full, normals=normals, mask=mask,
                       depth=depth, no_contact=False)


def evaluate_scene(result, true_field):
    """Metrics of a reconstruction against the field that produced it."""
    cm = contact_mask(true_field)
    return evaluate_tactile(result.depth, true_field.z_mm, cm,
                            true_field.pitch_x_mm)
