"""Parametric sensing membrane: height fields, indenter geometry, surface normals.

The membrane is a flat rectangular sheet (default 110 x 40 mm). Indentation
depth ``z_mm`` is stored on a regular grid, measured in millimetres *into*
the gel, i.e. toward the embedded camera; the untouched surface is 0.
Bending into 3D lives in :mod:`lumitact.deform`.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .validation import check_positive

DEFAULT_WIDTH_MM = 110.0
DEFAULT_HEIGHT_MM = 40.0
DEFAULT_GEL_THICKNESS_MM = 4.0


@dataclass
class HeightField:
    """Per-cell indentation depth of the sensing membrane.

    ``z_mm[iy, ix]`` is the depth at grid node (x[ix], y[iy]) with
    x = linspace(0, width_mm, nx) and y = linspace(0, height_mm, ny).
    Instances are treated as immutable values; operations return new fields.
    """

    width_mm: float = DEFAULT_WIDTH_MM
    height_mm: float = DEFAULT_HEIGHT_MM
    nx: int = 256
    ny: int = 96
    z_mm: np.ndarray = None
    gel_thickness_mm: float = DEFAULT_GEL_THICKNESS_MM

    def __post_init__(self):
        check_positive(self.width_mm, "width_mm")
        check_positive(self.height_mm, "height_mm")
        check_positive(self.gel_thickness_mm, "gel_thickness_mm")
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid resolution must be >= 2, got {self.nx}x{self.ny}")
        if self.z_mm is None:
            self.z_mm = np.zeros((self.ny, self.nx))
        else:
            self.z_mm = np.asarray(self.z_mm, dtype=float)
        if self.z_mm.shape != (self.ny, self.nx):
            raise ValueError(f"z_mm shape {self.z_mm.shape} does not match "
                             f"grid (ny={self.ny}, nx={self.nx})")
        if not np.all(np.isfinite(self.z_mm)):
            raise ValueError("z_mm contains non-finite depths")
        if np.any(self.z_mm < 0):
            raise ValueError("z_mm contains negative depths")

    @property
    def pitch_x_mm(self):
        return self.width_mm / (self.nx - 1)

    @property
    def pitch_y_mm(self):
        return self.height_mm / (self.ny - 1)

    def x_coords(self):
        return np.linspace(0.0, self.width_mm, self.nx)

    def y_coords(self):
        return np.linspace(0.0, self.height_mm, self.ny)

    def grid_mm(self):
        """All grid nodes as an (ny*nx, 2) array of (x, y) positions in mm."""
        xx, yy = np.meshgrid(self.x_coords(), self.y_coords())
        return np.column_stack([xx.ravel(), yy.ravel()])

    def with_depth(self, z_mm):
        return replace(self, z_mm=np.asarray(z_mm, dtype=float))


@dataclass(frozen=True)
class Indenter:
    """Rigid indenter pressed into the membrane from outside.

    kind "sphere" uses ``sphere_radius_mm``; "pyramid" is a regular
    ``n_faces``-sided pyramid (``base_diameter_mm`` is the base polygon's
    circumscribed diameter, apex pointing into the gel); "plane" is a flat
    plate with slope ``tilt`` = (dz/dx, dz/dy) anchored at the press centre.
    Outside the pyramid's lateral-face footprint no contact is generated
    (the mounting plate behind the base is not modelled).
    """

    kind: str
    sphere_radius_mm: float = 5.0
    base_diameter_mm: float = 8.0
    apex_height_mm: float = 2.0
    n_faces: int = 6
    tilt: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("sphere", "pyramid", "plane"):
            raise ValueError(f"unknown indenter kind {self.kind!r}")
        if self.kind == "sphere":
            check_positive(self.sphere_radius_mm, "sphere_radius_mm")
        if self.kind == "pyramid":
            check_positive(self.base_diameter_mm, "base_diameter_mm")
            check_positive(self.apex_height_mm, "apex_height_mm")
            if self.n_faces < 3:
                raise ValueError(f"pyramid needs n_faces >= 3, got {self.n_faces}")

    @classmethod
    def sphere(cls, radius_mm=5.0):
        return cls(kind="sphere", sphere_radius_mm=radius_mm)

    @classmethod
    def pyramid(cls, base_diameter_mm=8.0, apex_height_mm=2.0, n_faces=6):
        return cls(kind="pyramid", base_diameter_mm=base_diameter_mm,
                   apex_height_mm=apex_height_mm, n_faces=n_faces)

    @classmethod
    def plane(cls, tilt=(0.0, 0.0)):
        return cls(kind="plane", tilt=(float(tilt[0]), float(tilt[1])))


def indenter_penetration(ind, xx, yy, center, depth):
    """Penetration depth of an indenter over grid coordinates (mm, >= 0).

    ``depth`` is how far the indenter's lowest point sits below the resting
    surface. Cells not touched by the indenter get 0.
    """
    cx, cy = float(center[0]), float(center[1])
    dx = xx - cx
    dy = yy - cy
    if ind.kind == "sphere":
        r = ind.sphere_radius_mm
        rho2 = dx * dx + dy * dy
        inside = rho2 < r * r
        pen = np.zeros_like(xx)
        pen[inside] = depth - r + np.sqrt(r * r - rho2[inside])
        return np.maximum(pen, 0.0)
    if ind.kind == "pyramid":
        # support distance of (dx, dy) over the base polygon's face normals;
        # the lateral surface drops from the apex at rate apex_height / inradius
        n = ind.n_faces
        half_base = 0.5 * ind.base_diameter_mm
        inradius = half_base * np.cos(np.pi / n)
        azimuths = 2.0 * np.pi * np.arange(n) / n
        support = np.full_like(xx, -np.inf)
        for az in azimuths:
            support = np.maximum(support, dx * np.cos(az) + dy * np.sin(az))
        support = np.maximum(support, 0.0)
        pen = depth - ind.apex_height_mm * support / inradius
        pen[support > inradius] = 0.0  # beyond the lateral faces: no contact
        return np.maximum(pen, 0.0)
    # plane: z = depth - tilt.(offset from centre), clamped at 0
    tx, ty = ind.tilt
    return np.maximum(depth - tx * dx - ty * dy, 0.0)


def apply_indenter(fld, ind, center, depth):
    """Press an indenter into a height field; returns a new HeightField.

    The new depth at each cell is max(existing, penetration), so presses
    compose monotonically. ``center`` must lie inside the field bounds.
    """
    if depth < 0 or not np.isfinite(depth):
        raise ValueError(f"depth must be >= 0, got {depth}")
    cx, cy = float(center[0]), float(center[1])
    if not (0.0 <= cx <= fld.width_mm and 0.0 <= cy <= fld.height_mm):
        raise ValueError(f"indent centre ({cx}, {cy}) outside membrane "
                         f"bounds {fld.width_mm} x {fld.height_mm} mm")
    if depth == 0.0:
        return fld.with_depth(fld.z_mm.copy())
    xx, yy = np.meshgrid(fld.x_coords(), fld.y_coords())
    pen = indenter_penetration(ind, xx, yy, (cx, cy), depth)
    return fld.with_depth(np.maximum(fld.z_mm, pen))


def contact_mask(fld, tol=0.0):
    """Boolean (ny, nx) mask of cells with indentation depth > tol."""
    return fld.z_mm > tol


def compute_normals(fld):
    """Unit surface normals of the indented membrane, (ny, nx, 3).

    Central differences in the interior, one-sided at the borders. The z
    component points toward the camera, so flat regions map to (0, 0, 1).
    """
    gy, gx = np.gradient(fld.z_mm, fld.pitch_y_mm, fld.pitch_x_mm)
    n = np.stack([-gx, -gy, np.ones_like(gx)], axis=2)
    n /= np.linalg.norm(n, axis=2, keepdims=True)
    return n


def sphere_cap_normals(radius_mm, depth_mm, xx, yy, center):
    """Analytic normals of a spherical indentation (oracle-grade geometry).

    Returns (normals, inside_mask); outside the contact disc the normal is
    (0, 0, 1).
    """
    r = float(radius_mm)
    d = float(depth_mm)
    dx = xx - center[0]
    dy = yy - center[1]
    rho2 = dx * dx + dy * dy
    a2 = 2.0 * r * d - d * d  # contact disc radius squared
    inside = rho2 < a2
    n = np.zeros(xx.shape + (3,))
    n[..., 2] = 1.0
    nz = np.sqrt(np.maximum(r * r - rho2[inside], 0.0)) / r
    n[inside, 0] = dx[inside] / r
    n[inside, 1] = dy[inside] / r
    n[inside, 2] = nz
    return n, inside
