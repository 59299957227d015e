"""Linear color space handling and the point-light membrane renderer.

Each fiber is modelled as a spotlight sitting on the membrane border at
gel-top height. Its geometric attenuation at a pixel combines the inverse
square law with two directional cosines: the incidence angle set by the
gel thickness, and the in-plane misalignment against the fiber's beam axis
raised to the beam-spread exponent alpha. Images are linear in the light
intensities, which is what makes single-light basis renders compose exactly
into any color assignment.
"""

from dataclasses import dataclass, replace

import numpy as np
import yaml

from .deform import BendParams, bend_frame
from .membrane import (DEFAULT_GEL_THICKNESS_MM, DEFAULT_HEIGHT_MM,
                       DEFAULT_WIDTH_MM, HeightField, compute_normals)
from .validation import check_positive, check_unit_interval

COLORS = ("R", "G", "B")

SRGB_DISPLAY_THRESHOLD = 0.04045   # display -> linear branch point
SRGB_LINEAR_THRESHOLD = 0.0031308  # linear -> display branch point

DISTANCE_CLAMP_MM = 0.5  # pixels cannot sit closer than one fiber radius


def srgb_to_linear(c):
    """Piecewise sRGB display value(s) in [0, 1] to linear light."""
    c = check_unit_interval(c, "sRGB value")
    lo = c / 12.92
    hi = ((c + 0.055) / 1.055) ** 2.4
    return np.where(c <= SRGB_DISPLAY_THRESHOLD, lo, hi)


def linear_to_srgb(c):
    """Exact piecewise inverse of :func:`srgb_to_linear` on [0, 1]."""
    c = check_unit_interval(c, "linear value")
    lo = c * 12.92
    hi = 1.055 * c ** (1.0 / 2.4) - 0.055
    return np.where(c <= SRGB_LINEAR_THRESHOLD, lo, hi)


@dataclass(frozen=True)
class Light:
    """One fiber: border position, in-plane beam axis, color, intensity."""

    position: tuple          # (x, y) mm on the membrane boundary
    beam_axis: tuple         # unit 2-vector in the membrane plane
    color: str               # "R" | "G" | "B"
    intensity: float = 1.0

    def __post_init__(self):
        if self.color not in COLORS:
            raise ValueError(f"light color must be one of {COLORS}, "
                             f"got {self.color!r}")
        if self.intensity < 0 or not np.isfinite(self.intensity):
            raise ValueError(f"intensity must be >= 0, got {self.intensity}")
        ax = np.asarray(self.beam_axis, dtype=float)
        if ax.shape != (2,) or not np.all(np.isfinite(ax)):
            raise ValueError("beam_axis must be a finite 2-vector")
        if abs(np.linalg.norm(ax) - 1.0) > 1e-6:
            raise ValueError("beam_axis must be unit length")


@dataclass(frozen=True)
class LightRig:
    """A full illumination design: fibers plus the shared beam geometry."""

    lights: tuple
    alpha: float = 2.0
    gel_thickness_mm: float = DEFAULT_GEL_THICKNESS_MM
    width_mm: float = DEFAULT_WIDTH_MM
    height_mm: float = DEFAULT_HEIGHT_MM

    def __post_init__(self):
        if len(self.lights) < 1:
            raise ValueError("rig needs at least one light")
        if self.alpha < 0 or not np.isfinite(self.alpha):
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        check_positive(self.gel_thickness_mm, "gel_thickness_mm")
        for i, lt in enumerate(self.lights):
            x, y = lt.position
            on_x = min(abs(x), abs(x - self.width_mm)) <= 1e-6
            on_y = min(abs(y), abs(y - self.height_mm)) <= 1e-6
            inside = -1e-6 <= x <= self.width_mm + 1e-6 and \
                     -1e-6 <= y <= self.height_mm + 1e-6
            if not (inside and (on_x or on_y)):
                raise ValueError(f"light {i} at ({x}, {y}) is not on the "
                                 f"membrane boundary")

    @property
    def n_lights(self):
        return len(self.lights)

    def positions(self):
        return np.array([lt.position for lt in self.lights], dtype=float)

    def beam_axes(self):
        return np.array([lt.beam_axis for lt in self.lights], dtype=float)

    def intensities(self):
        return np.array([lt.intensity for lt in self.lights], dtype=float)

    def colors(self):
        return tuple(lt.color for lt in self.lights)

    def color_indices(self):
        return np.array([COLORS.index(lt.color) for lt in self.lights])

    def with_assignment(self, assignment, intensities=None):
        """New rig with the given per-light colors (and optional intensities)."""
        if len(assignment) != self.n_lights:
            raise ValueError(f"assignment length {len(assignment)} != "
                             f"{self.n_lights} lights")
        lights = []
        for i, lt in enumerate(self.lights):
            inten = lt.intensity if intensities is None else float(intensities[i])
            lights.append(replace(lt, color=assignment[i], intensity=inten))
        return replace(self, lights=tuple(lights))


def _perimeter_point(s, width, height):
    """Point at clockwise arc length s along the border, starting at (0, 0)."""
    per = 2.0 * (width + height)
    s = s % per
    if s < width:
        return (s, 0.0), (0.0, 1.0)
    s -= width
    if s < height:
        return (width, s), (-1.0, 0.0)
    s -= height
    if s < width:
        return (width - s, height), (0.0, -1.0)
    s -= width
    return (0.0, height - s), (1.0, 0.0)


# clockwise as seen from the camera: 6 green, 7 blue, 7 red, 4 more blue
REFERENCE_ARRANGEMENT = "GGGGGGBBBBBBBRRRRRRRBBBB"


def reference_rig(n_lights=24, arrangement=None, alpha=2.0,
                  gel_thickness_mm=DEFAULT_GEL_THICKNESS_MM,
                  width_mm=DEFAULT_WIDTH_MM, height_mm=DEFAULT_HEIGHT_MM,
                  intensity=1.0):
    """Evenly spaced border fibers with inward beam axes.

    With the default 24 lights the color layout follows the reference
    arrangement (6 green, 7 blue, 7 red, 4 blue, clockwise); other counts
    cycle R, G, B unless an explicit arrangement string is given.
    """
    if arrangement is None:
        if n_lights == len(REFERENCE_ARRANGEMENT):
            arrangement = REFERENCE_ARRANGEMENT
        else:
            arrangement = "".join(COLORS[i % 3] for i in range(n_lights))
    if len(arrangement) != n_lights:
        raise ValueError(f"arrangement length {len(arrangement)} != {n_lights}")
    per = 2.0 * (width_mm + height_mm)
    lights = []
    for i in range(n_lights):
        pos, axis = _perimeter_point((i + 0.5) * per / n_lights,
                                     width_mm, height_mm)
        lights.append(Light(position=pos, beam_axis=axis,
                            color=arrangement[i], intensity=intensity))
    return LightRig(lights=tuple(lights), alpha=alpha,
                    gel_thickness_mm=gel_thickness_mm,
                    width_mm=width_mm, height_mm=height_mm)


def light_coefficient(pixel_xy, j, rig):
    """Geometric attenuation of light j at one membrane position (scalar)."""
    a = build_coefficient_matrix(np.asarray(pixel_xy, dtype=float)[None, :], rig)
    return float(a[0, j])


def build_coefficient_matrix(pixels_xy, rig):
    """Attenuation factors for every (pixel, light) pair, shape (n, n_lights).

    Inverse-square falloff over the clamped in-plane distance, times the
    incidence cosine set by the gel thickness, times the beam-alignment
    cosine (clamped at zero) raised to alpha.
    """
    px = np.asarray(pixels_xy, dtype=float)
    if px.ndim != 2 or px.shape[1] != 2:
        raise ValueError(f"pixels must have shape (n, 2), got {px.shape}")
    if np.any(px[:, 0] < -1e-9) or np.any(px[:, 0] > rig.width_mm + 1e-9) or \
       np.any(px[:, 1] < -1e-9) or np.any(px[:, 1] > rig.height_mm + 1e-9):
        raise ValueError("pixel positions outside membrane bounds")
    z = rig.gel_thickness_mm
    offsets = px[:, None, :] - rig.positions()[None, :, :]   # (n, J, 2)
    d = np.linalg.norm(offsets, axis=2)
    d_eff = np.maximum(d, DISTANCE_CLAMP_MM)
    cos_theta = z / np.sqrt(d_eff * d_eff + z * z)
    cos_phi = np.einsum("njk,jk->nj", offsets, rig.beam_axes())
    with np.errstate(invalid="ignore"):
        cos_phi = np.where(d > 0, cos_phi / np.where(d > 0, d, 1.0), 1.0)
    cos_phi = np.clip(cos_phi, 0.0, 1.0)
    return cos_theta * np.power(cos_phi, rig.alpha) / (d_eff * d_eff)


def _resolve_geometry(geometry, rig):
    """Accept a HeightField or a raw (H, W, 3) normal map."""
    if isinstance(geometry, HeightField):
        return geometry, compute_normals(geometry)
    normals = np.asarray(geometry, dtype=float)
    if normals.ndim != 3 or normals.shape[2] != 3:
        raise ValueError("geometry must be a HeightField or an (H, W, 3) "
                         "normal map")
    fld = HeightField(width_mm=rig.width_mm, height_mm=rig.height_mm,
                      nx=normals.shape[1], ny=normals.shape[0],
                      gel_thickness_mm=rig.gel_thickness_mm)
    return fld, normals


def _pixel_subset(fld, pixels):
    """Flat indices and uv positions for a (k, 2) row/col pixel subset."""
    pixels = np.asarray(pixels)
    flat = pixels[:, 0] * fld.nx + pixels[:, 1]
    uv = np.column_stack([pixels[:, 1] * fld.pitch_x_mm,
                          pixels[:, 0] * fld.pitch_y_mm])
    return flat, uv


def _attenuation_shade(geometry, rig, bend, pixels=None):
    """(k, n_lights) attenuation-times-shade, over all pixels or a subset."""
    fld, normals = _resolve_geometry(geometry, rig)
    if pixels is None:
        uv = fld.grid_mm()
        flat_normals = normals.reshape(-1, 3)
        depth = fld.z_mm.ravel()
    else:
        flat, uv = _pixel_subset(fld, pixels)
        flat_normals = normals.reshape(-1, 3)[flat]
        depth = fld.z_mm.ravel()[flat]
    a = build_coefficient_matrix(uv, rig)
    return a * _shade_core(depth, flat_normals, rig, bend, uv), fld


def _shade_core(depth, normals, rig, bend, uv):
    """Per (pixel, light) shading ratio relative to the resting surface.

    The Lambert term at the displaced, tilted surface over the term at the
    resting geometry of the same pixel; exactly 1 wherever the field is
    flat, in any bend state, so un-contacted renders reduce to the bare
    attenuation model. All arguments are flat per-pixel arrays.
    """
    z = rig.gel_thickness_mm
    if bend is None:
        base = np.concatenate([uv, np.zeros((uv.shape[0], 1))], axis=-1)
        frame_n = np.zeros_like(base)
        frame_n[:, 2] = 1.0
        n_world = normals
        lights3 = np.concatenate([rig.positions(),
                                  np.full((rig.n_lights, 1), z)], axis=1)
    else:
        base, t_x, t_y, frame_n = bend_frame(uv, bend, rig.width_mm,
                                             rig.height_mm)
        n_world = (normals[:, 0:1] * t_x + normals[:, 1:2] * t_y
                   + normals[:, 2:3] * frame_n)
        n_world = n_world / np.linalg.norm(n_world, axis=-1, keepdims=True)
        lpos, _, _, ln = bend_frame(rig.positions(), bend,
                                    rig.width_mm, rig.height_mm)
        lights3 = lpos + z * ln
    surf = base + depth[:, None] * frame_n
    to_light = lights3[None, :, :] - surf[:, None, :]
    to_light /= np.linalg.norm(to_light, axis=-1, keepdims=True)
    to_light0 = lights3[None, :, :] - base[:, None, :]
    to_light0 /= np.linalg.norm(to_light0, axis=-1, keepdims=True)
    lam = np.einsum("kjc,kc->kj", to_light, n_world)
    lam0 = np.einsum("kjc,kc->kj", to_light0, frame_n)
    return np.maximum(lam, 0.0) / np.maximum(lam0, 1e-9)


def render(geometry, rig, bend=None, pixels=None):
    """Render the membrane under the rig; linear (H, W, 3) image.

    Per pixel and channel the image is the sum over same-colored lights of
    attenuation x intensity x shade; for a flat field it reduces exactly to
    the bare attenuation model summed per channel. With ``pixels`` (a
    (k, 2) row/col index array) only that subset is evaluated and the rest
    of the image is zero, which keeps large-scale dataset generation cheap.
    """
    contrib, fld = _attenuation_shade(geometry, rig, bend, pixels)
    colors = rig.color_indices()
    inten = rig.intensities()
    if pixels is None:
        contrib = contrib.reshape(fld.ny, fld.nx, rig.n_lights)
        img = np.zeros((fld.ny, fld.nx, 3))
        for c in range(3):
            sel = colors == c
            if np.any(sel):
                img[:, :, c] = np.einsum("hwj,j->hw", contrib[:, :, sel],
                                         inten[sel])
        return img
    img = np.zeros((fld.ny, fld.nx, 3))
    pixels = np.asarray(pixels)
    for c in range(3):
        sel = colors == c
        if np.any(sel):
            img[pixels[:, 0], pixels[:, 1], c] = np.einsum(
                "kj,j->k", contrib[:, sel], inten[sel])
    return img


def render_basis(geometry, rig, bend=None):
    """Single-light unit-intensity renders, (n_lights, H, W), channel-agnostic.

    One render per fiber serves every color placement, so a 24-light rig
    stores 24 basis images regardless of the 3 color choices.
    """
    contrib, fld = _attenuation_shade(geometry, rig, bend)
    return np.moveaxis(contrib.reshape(fld.ny, fld.nx, rig.n_lights), 2, 0)


def compose_basis(basis, assignment, intensities):
    """Place scaled basis images into color channels; exact superposition."""
    basis = np.asarray(basis, dtype=float)
    if len(assignment) != basis.shape[0]:
        raise ValueError(f"assignment length {len(assignment)} != "
                         f"{basis.shape[0]} basis images")
    inten = np.asarray(intensities, dtype=float)
    img = np.zeros(basis.shape[1:] + (3,))
    colors = np.array([COLORS.index(c) for c in assignment])
    for c in range(3):
        sel = colors == c
        if np.any(sel):
            img[:, :, c] = np.einsum("jhw,j->hw", basis[sel], inten[sel])
    return img


def save_rig(path, rig):
    """Write a rig as a YAML config consumable by :func:`load_rig`."""
    doc = {
        "alpha": float(rig.alpha),
        "gel_thickness_mm": float(rig.gel_thickness_mm),
        "width_mm": float(rig.width_mm),
        "height_mm": float(rig.height_mm),
        "lights": [
            {"position": [float(p) for p in lt.position],
             "beam_axis": [float(a) for a in lt.beam_axis],
             "color": lt.color,
             "intensity": float(lt.intensity)}
            for lt in rig.lights
        ],
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_rig(path):
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    lights = tuple(Light(position=tuple(d["position"]),
                         beam_axis=tuple(d["beam_axis"]),
                         color=d["color"],
                         intensity=d.get("intensity", 1.0))
                   for d in doc["lights"])
    return LightRig(lights=lights, alpha=doc["alpha"],
                    gel_thickness_mm=doc["gel_thickness_mm"],
                    width_mm=doc["width_mm"], height_mm=doc["height_mm"])
