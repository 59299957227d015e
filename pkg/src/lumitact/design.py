"""Illumination design search: contact color variance and assignment search.

The quality proxy for a color layout is the color variance inside the
contact region, averaged over a set of bend/indent scenarios. Because the
renderer is linear in light intensities, every candidate score can be
evaluated from cached single-light basis renders instead of a full render,
which is what makes exhaustive grouped search affordable.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .membrane import HeightField, Indenter, apply_indenter, contact_mask
from .optics import COLORS, compose_basis, linear_to_srgb, render_basis
from .validation import check_linear_image


class BudgetExceeded(RuntimeError):
    """Raised when a search would enumerate more candidates than allowed."""


DEFAULT_SEARCH_BUDGET = 2_000_000


@dataclass(frozen=True)
class DesignCandidate:
    """A full color assignment, possibly generated from consecutive groups."""

    assignment: tuple
    group_size: int = 1

    def __post_init__(self):
        for c in self.assignment:
            if c not in COLORS:
                raise ValueError(f"invalid color {c!r} in assignment")
        n = len(self.assignment)
        if self.group_size < 1 or n % self.group_size != 0:
            raise ValueError(f"group size {self.group_size} does not divide "
                             f"{n} lights")

    @classmethod
    def from_groups(cls, group_colors, group_size):
        assignment = tuple(c for c in group_colors for _ in range(group_size))
        return cls(assignment=assignment, group_size=group_size)

    def as_string(self):
        return "".join(self.assignment)


@dataclass
class DesignScore:
    per_scenario: np.ndarray  # variance per (scenario, location) pair
    aggregate: float


def contact_variance(img, region, srgb=False):
    """Color variance over a pixel region: mean squared deviation from the
    per-channel mean, summed over the three channels.

    ``region`` is a boolean mask or an (k, 2) array of (row, col) indices.
    """
    img = check_linear_image(img)
    region = np.asarray(region)
    if region.dtype == bool:
        vals = img[region]
    else:
        if region.ndim != 2 or region.shape[1] != 2:
            raise ValueError("region must be a boolean mask or (k, 2) indices")
        vals = img[region[:, 0], region[:, 1]]
    if vals.shape[0] == 0:
        raise ValueError("contact region is empty")
    if srgb:
        vals = linear_to_srgb(np.clip(vals, 0.0, 1.0))
    mu = vals.mean(axis=0)
    return float(((vals - mu) ** 2).sum(axis=1).mean())


@dataclass(frozen=True)
class DesignScenario:
    """One evaluation case: a bend state plus a sphere press location."""

    bend: object = None                 # BendParams or None for flat
    indent_center: tuple = (55.0, 20.0)
    indent_radius_mm: float = 5.0
    indent_depth_mm: float = 1.0


@dataclass
class ScenarioBasis:
    """Cached single-light region renders for one scenario."""

    basis_region: np.ndarray   # (n_lights, m) basis values at region pixels
    region: np.ndarray         # (m, 2) row/col indices
    shape: tuple               # full image shape (H, W)


def default_scenarios(bend_factory=None, width_mm=110.0, height_mm=40.0):
    """3 bend curvatures x 3 sphere locations, the desk-scale default."""
    from .deform import BendParams
    curvatures = (0.0, 0.006, 0.012)
    xs = (0.3 * width_mm, 0.5 * width_mm, 0.7 * width_mm)
    out = []
    for k in curvatures:
        for x in xs:
            out.append(DesignScenario(bend=BendParams(kappa_long=k),
                                      indent_center=(x, height_mm / 2.0)))
    return tuple(out)


def build_scenario_basis(rig, scenarios, nx=128, ny=48):
    """Render the per-light basis for each scenario, restricted to its
    contact region."""
    cache = []
    for scn in scenarios:
        fld = HeightField(width_mm=rig.width_mm, height_mm=rig.height_mm,
                          nx=nx, ny=ny, gel_thickness_mm=rig.gel_thickness_mm)
        fld = apply_indenter(fld, Indenter.sphere(scn.indent_radius_mm),
                             scn.indent_center, scn.indent_depth_mm)
        basis = render_basis(fld, rig, scn.bend)
        mask = contact_mask(fld)
        region = np.argwhere(mask)
        if region.shape[0] == 0:
            raise ValueError("scenario produced an empty contact region")
        cache.append(ScenarioBasis(
            basis_region=basis[:, mask], region=region, shape=mask.shape))
    return cache


def score_design(candidate, basis_cache, intensities, srgb=False):
    """Mean contact variance of one candidate across all cached scenarios.

    Composes region pixels from the basis exactly as a direct render would,
    then applies the two-pass variance; cheap but float-identical to scoring
    a full render.
    """
    if len(basis_cache) == 0:
        raise ValueError("no scenarios to score")
    colors = np.array([COLORS.index(c) for c in candidate.assignment])
    inten = np.asarray(intensities, dtype=float)
    if colors.shape[0] != basis_cache[0].basis_region.shape[0]:
        raise ValueError("candidate size does not match cached basis")
    per = np.empty(len(basis_cache))
    for i, sb in enumerate(basis_cache):
        vals = np.zeros((sb.basis_region.shape[1], 3))
        for c in range(3):
            sel = colors == c
            if np.any(sel):
                vals[:, c] = np.einsum("jm,j->m", sb.basis_region[sel],
                                       inten[sel])
        if srgb:
            vals = linear_to_srgb(np.clip(vals, 0.0, 1.0))
        mu = vals.mean(axis=0)
        per[i] = ((vals - mu) ** 2).sum(axis=1).mean()
    return DesignScore(per_scenario=per, aggregate=float(per.mean()))


@dataclass
class SearchResult:
    best: DesignCandidate
    best_score: DesignScore
    assignments: np.ndarray    # (n_candidates, n_lights) color indices
    scores: np.ndarray         # (n_candidates, n_scenarios)
    aggregates: np.ndarray     # (n_candidates,)

    def candidate_string(self, k):
        return "".join(COLORS[c] for c in self.assignments[k])


def _enumerate_group_colorings(n_groups):
    """All 3^n_groups colorings in lexicographic color-index order."""
    grids = np.meshgrid(*([np.arange(3)] * n_groups), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1).astype(np.int8)


def grid_search(basis_cache, intensities, n_lights, group_size=1,
                budget=DEFAULT_SEARCH_BUDGET):
    """Exhaustive search over grouped color assignments.

    Scores every candidate via quadratic forms over 24x24 second-moment
    matrices of the cached basis, so the work per candidate is independent
    of region size. Ties resolve to the lexicographically first assignment.
    """
    if n_lights % group_size != 0:
        raise ValueError(f"group size {group_size} does not divide "
                         f"{n_lights} lights")
    n_groups = n_lights // group_size
    n_candidates = 3 ** n_groups
    if n_candidates > budget:
        raise BudgetExceeded(
            f"grouped search needs {n_candidates} evaluations, over the "
            f"budget of {budget}; increase the budget or the group size")

    inten = np.asarray(intensities, dtype=float)
    group_of = np.repeat(np.arange(n_groups), group_size)
    # fold intensities into per-group indicator vectors
    g_mat = np.zeros((n_groups, n_lights))
    g_mat[group_of, np.arange(n_lights)] = inten

    colorings = _enumerate_group_colorings(n_groups)
    one_hot = [(colorings == c) for c in range(3)]  # bool (C, n_groups) each

    scores = np.zeros((n_candidates, len(basis_cache)))
    for i, sb in enumerate(basis_cache):
        m = sb.basis_region.shape[1]
        second = (sb.basis_region @ sb.basis_region.T) / m   # (J, J)
        mean_vec = sb.basis_region.mean(axis=1)              # (J,)
        m_grp = g_mat @ second @ g_mat.T                     # (G, G)
        b_grp = g_mat @ mean_vec                             # (G,)
        for c in range(3):
            u = one_hot[c].astype(float)
            quad = np.einsum("kg,gh,kh->k", u, m_grp, u)
            lin = u @ b_grp
            scores[:, i] += quad - lin * lin

    aggregates = scores.mean(axis=1)
    best_idx = int(np.argmax(aggregates))  # first max = lexicographic winner
    assignments = colorings[:, group_of]
    best = DesignCandidate(
        assignment=tuple(COLORS[c] for c in assignments[best_idx]),
        group_size=group_size)
    best_score = DesignScore(per_scenario=scores[best_idx],
                             aggregate=float(aggregates[best_idx]))
    return SearchResult(best=best, best_score=best_score,
                        assignments=assignments, scores=scores,
                        aggregates=aggregates)


def grid_search_direct(basis_cache, intensities, n_lights, group_size=1,
                       budget=DEFAULT_SEARCH_BUDGET, srgb=False):
    """Per-candidate composition + two-pass variance, no quadratic forms.

    Much slower than :func:`grid_search`; used for small searches, for the
    sRGB-space comparison flag, and as the oracle in equivalence tests.
    """
    if n_lights % group_size != 0:
        raise ValueError(f"group size {group_size} does not divide "
                         f"{n_lights} lights")
    n_groups = n_lights // group_size
    n_candidates = 3 ** n_groups
    if n_candidates > budget:
        raise BudgetExceeded(
            f"grouped search needs {n_candidates} evaluations, over the "
            f"budget of {budget}; increase the budget or the group size")
    colorings = _enumerate_group_colorings(n_groups)
    group_of = np.repeat(np.arange(n_groups), group_size)
    assignments = colorings[:, group_of]
    scores = np.zeros((n_candidates, len(basis_cache)))
    for k in range(n_candidates):
        cand = DesignCandidate(
            assignment=tuple(COLORS[c] for c in assignments[k]),
            group_size=group_size)
        scores[k] = score_design(cand, basis_cache, intensities,
                                 srgb=srgb).per_scenario
    aggregates = scores.mean(axis=1)
    best_idx = int(np.argmax(aggregates))
    best = DesignCandidate(
        assignment=tuple(COLORS[c] for c in assignments[best_idx]),
        group_size=group_size)
    return SearchResult(best=best,
                        best_score=DesignScore(per_scenario=scores[best_idx],
                                               aggregate=float(aggregates[best_idx])),
                        assignments=assignments, scores=scores,
                        aggregates=aggregates)


class IlluminationDesigner(BaseEstimator):
    """Grid-search estimator over fiber color assignments.

    fit() renders the per-scenario basis for the given rig and enumerates
    all grouped assignments; the winner and the full score table land in
    ``best_candidate_``, ``best_rig_`` and ``search_result_``.
    """

    def __init__(self, group_size=1, budget=DEFAULT_SEARCH_BUDGET,
                 render_nx=128, render_ny=48, srgb=False):
        self.group_size = group_size
        self.budget = budget
        self.render_nx = render_nx
        self.render_ny = render_ny
        self.srgb = srgb

    def fit(self, rig, scenarios=None):
        if scenarios is None:
            scenarios = default_scenarios(width_mm=rig.width_mm,
                                          height_mm=rig.height_mm)
        if len(scenarios) == 0:
            raise ValueError("no scenarios supplied")
        cache = build_scenario_basis(rig, scenarios, nx=self.render_nx,
                                     ny=self.render_ny)
        if self.srgb:
            self.search_result_ = grid_search_direct(
                cache, rig.intensities(), rig.n_lights,
                group_size=self.group_size, budget=self.budget, srgb=True)
        else:
            self.search_result_ = grid_search(
                cache, rig.intensities(), rig.n_lights,
                group_size=self.group_size, budget=self.budget)
        self.basis_cache_ = cache
        self.best_candidate_ = self.search_result_.best
        self.best_rig_ = rig.with_assignment(self.best_candidate_.assignment)
        return self
