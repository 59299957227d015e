"""Input validation helpers shared across the toolkit."""

import numpy as np


def check_finite(arr, name="array"):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_points(points, name="points"):
    """Validate an (N, 3) point cloud and return it as float64."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"{name} must have shape (N, 3), got {pts.shape}")
    if pts.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one point")
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return pts


def check_linear_image(img, name="image"):
    """Validate an (H, W, 3) linear-light image: finite and non-negative."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(img < 0):
        raise ValueError(f"{name} contains negative values (not linear-light)")
    return img


def check_normal_map(normals, name="normals", atol=1e-6):
    """Validate an (H, W, 3) field of unit normals with positive z."""
    n = np.asarray(normals, dtype=float)
    if n.ndim != 3 or n.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {n.shape}")
    if not np.all(np.isfinite(n)):
        raise ValueError(f"{name} contains non-finite values")
    norms = np.linalg.norm(n, axis=2)
    if np.any(np.abs(norms - 1.0) > atol):
        raise ValueError(f"{name} contains non-unit vectors (max |norm-1| = "
                         f"{np.max(np.abs(norms - 1.0)):.3g})")
    return n


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return float(value)


def check_unit_interval(arr, name="value"):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} outside [0, 1]")
    return arr


def check_rng(rng_or_seed):
    """Accept a Generator, a seed, or None (seed 0) and return a Generator."""
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed
    return np.random.default_rng(0 if rng_or_seed is None else rng_or_seed)
