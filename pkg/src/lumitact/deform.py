"""Constant-curvature membrane bending, silhouette masks, and bend datasets.

The flat membrane mid-plane is mapped isometrically onto circular arcs:
``kappa_long`` bends along the x (longitudinal) axis, ``kappa_lat`` along y,
positive curvature bending toward the camera. An optional contact plane
clamps penetrating vertices, standing in for presses against flat objects.
"""

from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from .cloud import sample_parametric
from .membrane import HeightField
from .validation import check_rng


@dataclass(frozen=True)
class ContactPlane:
    """Half-space constraint n.p <= offset; violating vertices are projected."""

    normal: tuple = (0.0, 0.0, 1.0)
    offset_mm: float = 0.0

    def unit_normal(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm == 0:
            raise ValueError("contact plane normal must be a nonzero vector")
        return n / norm

    def clamp(self, points):
        n = self.unit_normal()
        excess = points @ n - self.offset_mm
        out = points.copy()
        mask = excess > 0
        out[mask] -= excess[mask, None] * n
        return out, mask


@dataclass(frozen=True)
class BendParams:
    """Signed curvatures (1/mm) plus an optional clamping contact plane."""

    kappa_long: float = 0.0
    kappa_lat: float = 0.0
    contact_plane: ContactPlane = None

    def validate(self, width_mm, height_mm):
        if not np.isfinite(self.kappa_long) or not np.isfinite(self.kappa_lat):
            raise ValueError("curvatures must be finite")
        if abs(self.kappa_long) * width_mm > np.pi + 1e-12:
            raise ValueError(f"|kappa_long| * length = "
                             f"{abs(self.kappa_long) * width_mm:.4f} exceeds pi")
        if abs(self.kappa_lat) * height_mm > np.pi + 1e-12:
            raise ValueError(f"|kappa_lat| * width = "
                             f"{abs(self.kappa_lat) * height_mm:.4f} exceeds pi")
        return self


def _arc_sin(kappa, s):
    # sin(kappa*s)/kappa with the kappa -> 0 limit s
    if abs(kappa) < 1e-12:
        return np.asarray(s, dtype=float).copy()
    return np.sin(kappa * s) / kappa


def _arc_ver(kappa, s):
    # (1 - cos(kappa*s))/kappa with the kappa -> 0 limit 0
    if abs(kappa) < 1e-12:
        return np.zeros_like(np.asarray(s, dtype=float))
    return (1.0 - np.cos(kappa * s)) / kappa


def bend_frame(uv, bend, width_mm, height_mm):
    """Map parametric (x, y) points to the bent mid-plane with local frames.

    Returns (positions, t_x, t_y, normals), each (..., 3). t_x / t_y are the
    unit tangents of the parametric axes and normals point toward the camera.
    Arc length along each bending axis' centreline is preserved exactly.
    """
    uv = np.asarray(uv, dtype=float)
    bend.validate(width_mm, height_mm)
    kl, kt = bend.kappa_long, bend.kappa_lat
    xc = uv[..., 0] - 0.5 * width_mm
    yc = uv[..., 1] - 0.5 * height_mm

    cosl = np.cos(kl * xc)
    sinl = np.sin(kl * xc)
    t_long = np.stack([cosl, np.zeros_like(cosl), sinl], axis=-1)
    n_long = np.stack([-sinl, np.zeros_like(cosl), cosl], axis=-1)
    centre = np.stack([_arc_sin(kl, xc), np.zeros_like(xc), _arc_ver(kl, xc)],
                      axis=-1)
    centre[..., 0] += 0.5 * width_mm

    a = _arc_sin(kt, yc) + 0.5 * height_mm
    lift = _arc_ver(kt, yc)
    y_hat = np.array([0.0, 1.0, 0.0])
    pos = centre.copy()
    pos[..., 1] = a
    pos += lift[..., None] * n_long

    cost = np.cos(kt * yc)
    sint = np.sin(kt * yc)
    t_y = cost[..., None] * y_hat + sint[..., None] * n_long
    t_x = t_long  # unit along the longitudinal centreline
    normals = np.cross(t_x, t_y)
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    return pos, t_x, t_y, normals


@dataclass
class DeformedSurface:
    """Bent (and optionally indented/clamped) membrane geometry."""

    vertices: np.ndarray      # (ny, nx, 3) mm
    faces: np.ndarray         # (M, 3) int triangle indices into ravelled grid
    cloud: np.ndarray         # (N, 3) surface samples
    cloud_uv: np.ndarray      # (N, 2) parametric positions of the samples
    clamped: np.ndarray       # (ny, nx) bool, True where the plane clamped


def _grid_faces(ny, nx):
    idx = np.arange(ny * nx).reshape(ny, nx)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, :-1].ravel()
    d = idx[1:, 1:].ravel()
    return np.concatenate([np.stack([a, b, d], axis=1),
                           np.stack([a, d, c], axis=1)])


def deform_membrane(fld, bend, n_points=512, rng=None):
    """Bend an indented height field into 3D; returns a DeformedSurface.

    Indentation depth offsets the bent mid-plane along its local normal
    (toward the camera). Point-cloud samples are drawn at uniform parametric
    positions, so clouds of the same field under different bends correspond
    point-for-point.
    """
    bend.validate(fld.width_mm, fld.height_mm)
    rng = check_rng(rng)
    xx, yy = np.meshgrid(fld.x_coords(), fld.y_coords())
    uv = np.stack([xx, yy], axis=-1)
    pos, _, _, nrm = bend_frame(uv, bend, fld.width_mm, fld.height_mm)
    verts = pos + fld.z_mm[..., None] * nrm

    cloud_uv = sample_parametric(fld.width_mm, fld.height_mm, n_points, rng)
    cpos, _, _, cnrm = bend_frame(cloud_uv, bend, fld.width_mm, fld.height_mm)
    cz = _sample_depth(fld, cloud_uv)
    cloud = cpos + cz[:, None] * cnrm

    clamped = np.zeros(verts.shape[:2], dtype=bool)
    if bend.contact_plane is not None:
        flat_verts = verts.reshape(-1, 3)
        flat_verts, vmask = bend.contact_plane.clamp(flat_verts)
        verts = flat_verts.reshape(verts.shape)
        clamped = vmask.reshape(clamped.shape)
        cloud, _ = bend.contact_plane.clamp(cloud)

    return DeformedSurface(vertices=verts, faces=_grid_faces(fld.ny, fld.nx),
                           cloud=cloud, cloud_uv=cloud_uv, clamped=clamped)


def _sample_depth(fld, uv):
    # bilinear lookup of the indentation depth at parametric positions
    fx = np.clip(uv[:, 0] / fld.pitch_x_mm, 0, fld.nx - 1)
    fy = np.clip(uv[:, 1] / fld.pitch_y_mm, 0, fld.ny - 1)
    ix = np.minimum(fx.astype(int), fld.nx - 2)
    iy = np.minimum(fy.astype(int), fld.ny - 2)
    tx = fx - ix
    ty = fy - iy
    z = fld.z_mm
    return ((1 - ty) * ((1 - tx) * z[iy, ix] + tx * z[iy, ix + 1])
            + ty * ((1 - tx) * z[iy + 1, ix] + tx * z[iy + 1, ix + 1]))


@dataclass(frozen=True)
class MaskCamera:
    """Interior pinhole camera used to rasterize contour silhouette masks."""

    position: tuple = (55.0, 20.0, 27.5)
    fov_deg: float = 160.0
    size: int = 256

    def project(self, points):
        """Project 3D mm points to pixel coordinates (looking down -z)."""
        p = np.asarray(points, dtype=float)
        c = np.asarray(self.position)
        depth = np.maximum(c[2] - p[..., 2], 1.0)  # clamp to keep finite
        focal = (self.size / 2.0) / np.tan(np.deg2rad(self.fov_deg) / 2.0)
        u = focal * (p[..., 0] - c[0]) / depth + self.size / 2.0
        v = focal * (p[..., 1] - c[1]) / depth + self.size / 2.0
        return np.stack([u, v], axis=-1)


def silhouette_mask(surface, camera=MaskCamera()):
    """Binary silhouette of the membrane as seen by the interior camera.

    The boundary polygon of the vertex grid is projected and filled; the
    membrane is a single sheet, so its outline is its silhouette.
    """
    verts = surface.vertices
    ny, nx = verts.shape[:2]
    boundary = np.concatenate([
        verts[0, :],            # bottom edge, left to right
        verts[1:, -1],          # right edge
        verts[-1, -2::-1],      # top edge, reversed
        verts[-2:0:-1, 0],      # left edge back down
    ])
    px = camera.project(boundary)
    img = Image.new("1", (camera.size, camera.size), 0)
    ImageDraw.Draw(img).polygon([(float(u), float(v)) for u, v in px], fill=1)
    return np.asarray(img, dtype=bool)


@dataclass(frozen=True)
class BendScenario:
    """One deformation scene: curvature targets reached over several frames."""

    kappa_long_range: tuple = (0.0, 0.0)
    kappa_lat_range: tuple = (0.0, 0.0)
    frames: int = 1
    contact_plane_height_mm: float = None

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("scenario needs at least one frame")


@dataclass(frozen=True)
class BendDatasetConfig:
    scenarios: tuple
    n_points: int = 512
    seed: int = 0
    camera: MaskCamera = MaskCamera()
    width_mm: float = 110.0
    height_mm: float = 40.0
    grid_nx: int = 96
    grid_ny: int = 36


@dataclass
class BendSample:
    mask: np.ndarray        # (S, S) bool silhouette
    deformed: np.ndarray    # (N, 3) mm
    undeformed: np.ndarray  # (N, 3) mm, same parametric points
    bend: BendParams
    scenario: int
    frame: int


def generate_bend_dataset(config):
    """Generate (mask, deformed cloud, undeformed cloud) samples, seeded.

    Each scenario draws target curvatures from its ranges and sweeps them
    linearly over its frames, recording the silhouette and matched clouds at
    every step. Deterministic for a fixed config seed.
    """
    if len(config.scenarios) == 0:
        raise ValueError("scenario list is empty")
    base = HeightField(width_mm=config.width_mm, height_mm=config.height_mm,
                       nx=config.grid_nx, ny=config.grid_ny)
    flat = BendParams()
    seeds = np.random.SeedSequence(config.seed).spawn(len(config.scenarios))
    samples = []
    for s_idx, (scn, seq) in enumerate(zip(config.scenarios, seeds)):
        rng = np.random.default_rng(seq)
        kl_target = rng.uniform(*scn.kappa_long_range)
        kt_target = rng.uniform(*scn.kappa_lat_range)
        plane = None
        if scn.contact_plane_height_mm is not None:
            plane = ContactPlane(normal=(0.0, 0.0, 1.0),
                                 offset_mm=scn.contact_plane_height_mm)
        # sweep ends exactly at the target curvature; a single frame is the target
        t_values = np.linspace(1.0 / scn.frames, 1.0, scn.frames)
        for f_idx, t in enumerate(t_values):
            bend = BendParams(kappa_long=t * kl_target, kappa_lat=t * kt_target,
                              contact_plane=plane)
            uv_seed = rng.integers(0, 2 ** 32)
            deformed = deform_membrane(base, bend, config.n_points,
                                       np.random.default_rng(uv_seed))
            undeformed_pos, _, _, _ = bend_frame(deformed.cloud_uv, flat,
                                                 config.width_mm, config.height_mm)
            samples.append(BendSample(
                mask=silhouette_mask(deformed, config.camera),
                deformed=deformed.cloud,
                undeformed=undeformed_pos,
                bend=bend, scenario=s_idx, frame=f_idx))
    return samples
