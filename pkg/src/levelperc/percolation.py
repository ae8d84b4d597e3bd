"""Connectivity of field level sets on grids.

Occupied cells are those whose field value reaches a level h, either weakly
(>= h) or strictly (> h).  The central quantity is the bottleneck threshold
of a grid: the largest level at which an occupied path still crosses the box
(or still joins the origin cell to the boundary).  One descending union-find
sweep yields it exactly, so whole level curves theta(h) come from a single
number per replicate and are exactly monotone in h by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy import ndimage, spatial

from . import attenuation as att
from .attenuation import AttenuationSpec
from .field import FieldGrid, field_on_grid, grid_geometry
from .point_process import PointSet, Window, sample_poisson, seed_tuple, task_seed

Z_95 = 1.959963984540054


@dataclass
class LevelSetGrid:
    """Boolean occupancy on the alpha-grid, with the level that produced it."""

    occupied: np.ndarray
    alpha: float
    x0: float
    window: Window
    level: Optional[float] = None
    mode: str = "at-least"      # "at-least", "strictly-above" or "boolean"

    @property
    def fraction(self) -> float:
        return float(self.occupied.mean()) if self.occupied.size else math.nan


def threshold(grid: FieldGrid, h: float, mode: str = "at-least") -> LevelSetGrid:
    """Occupancy of the level set at h; +inf cells are occupied either way."""
    if mode == "at-least":
        occ = grid.values >= h
    elif mode == "strictly-above":
        occ = grid.values > h
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return LevelSetGrid(occ, grid.alpha, grid.x0, grid.window, h, mode)


@dataclass
class ClusterLabels:
    """Connected components, labeled 1..n in order of first raster occurrence."""

    labels: np.ndarray
    n_clusters: int
    periodic: bool = False


def _canonical_relabel(labels: np.ndarray, n: int) -> np.ndarray:
    if n == 0:
        return labels
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    order = np.argsort(first[uniq > 0], kind="stable")
    lut = np.zeros(int(uniq.max()) + 1, dtype=labels.dtype)
    lut[uniq[uniq > 0][order]] = np.arange(1, order.size + 1)
    return lut[flat].reshape(labels.shape)


def label_clusters(occupied: np.ndarray, periodic: bool = False) -> ClusterLabels:
    """Face-adjacent components of the occupied set.

    Labels are deterministic: cluster k is the one whose first cell in raster
    order comes k-th.  With periodic=True, opposite faces are glued first.
    """
    occ = np.asarray(occupied, dtype=bool)
    structure = ndimage.generate_binary_structure(occ.ndim, 1)
    labels, n = ndimage.label(occ, structure=structure)
    if periodic and n > 1:
        parent = list(range(n + 1))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for axis in range(occ.ndim):
            lo = np.take(labels, 0, axis=axis).ravel()
            hi = np.take(labels, occ.shape[axis] - 1, axis=axis).ravel()
            both = (lo > 0) & (hi > 0)
            for a, b in zip(lo[both], hi[both]):
                ra, rb = find(int(a)), find(int(b))
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        roots = np.array([find(k) for k in range(n + 1)])
        labels = roots[labels]
        n = int(len(set(roots[1:])))
    labels = _canonical_relabel(labels, n)
    return ClusterLabels(labels, int(n), periodic)


def spanning_count(occupied: np.ndarray, axis: Optional[int] = None):
    """Number of distinct clusters touching both faces of an axis.

    Returns the count for one axis, or the per-axis vector when axis is None.
    """
    occ = np.asarray(occupied, dtype=bool)
    labels = label_clusters(occ).labels
    counts = []
    for k in range(occ.ndim):
        lo = np.unique(np.take(labels, 0, axis=k))
        hi = np.unique(np.take(labels, occ.shape[k] - 1, axis=k))
        common = np.intersect1d(lo[lo > 0], hi[hi > 0])
        counts.append(int(common.size))
    if axis is None:
        return np.array(counts)
    return counts[axis]


@njit(cache=True)
def _uf_find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@njit(cache=True)
def _crossing_sweep(order, shape, strides, axis):
    """Position in `order` at which the two faces of `axis` first connect."""
    n_cells = order.size
    v0 = n_cells
    v1 = n_cells + 1
    parent = np.arange(n_cells + 2, dtype=np.int64)
    active = np.zeros(n_cells, dtype=np.uint8)
    d = shape.size
    for t in range(n_cells):
        c = order[t]
        active[c] = 1
        for k in range(d):
            s = strides[k]
            coord = (c // s) % shape[k]
            if coord > 0 and active[c - s] == 1:
                ra, rb = _uf_find(parent, c), _uf_find(parent, c - s)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
            if coord < shape[k] - 1 and active[c + s] == 1:
                ra, rb = _uf_find(parent, c), _uf_find(parent, c + s)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        ca = (c // strides[axis]) % shape[axis]
        if ca == 0:
            ra, rb = _uf_find(parent, c), _uf_find(parent, v0)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        if ca == shape[axis] - 1:
            ra, rb = _uf_find(parent, c), _uf_find(parent, v1)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        if _uf_find(parent, v0) == _uf_find(parent, v1):
            return t
    return n_cells - 1


@njit(cache=True)
def _origin_sweep(order, shape, strides, origin_flat):
    """Position in `order` at which the origin cell first reaches any face."""
    n_cells = order.size
    vb = n_cells
    parent = np.arange(n_cells + 1, dtype=np.int64)
    active = np.zeros(n_cells, dtype=np.uint8)
    d = shape.size
    for t in range(n_cells):
        c = order[t]
        active[c] = 1
        on_face = False
        for k in range(d):
            s = strides[k]
            coord = (c // s) % shape[k]
            if coord > 0 and active[c - s] == 1:
                ra, rb = _uf_find(parent, c), _uf_find(parent, c - s)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
            if coord < shape[k] - 1 and active[c + s] == 1:
                ra, rb = _uf_find(parent, c), _uf_find(parent, c + s)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
            if coord == 0 or coord == shape[k] - 1:
                on_face = True
        if on_face:
            ra, rb = _uf_find(parent, c), _uf_find(parent, vb)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        if active[origin_flat] == 1 and _uf_find(parent, origin_flat) == _uf_find(parent, vb):
            return t
    return n_cells - 1


def _descending_order(values: np.ndarray) -> np.ndarray:
    return np.argsort(-values.ravel(), kind="stable").astype(np.int64)


def _grid_layout(values: np.ndarray):
    shape = np.array(values.shape, dtype=np.int64)
    strides = np.array([int(np.prod(values.shape[k + 1:])) for k in range(values.ndim)],
                       dtype=np.int64)
    return shape, strides


def crossing_threshold(grid: FieldGrid, axis: int = 0) -> Optional[float]:
    """Largest level at which the weak level set crosses the box along `axis`.

    The strict level set at h crosses exactly when this value exceeds h, so
    one sweep settles both occupation conventions at every level at once.
    """
    if grid.window.boundary != "hard":
        raise ValueError("crossing is defined on hard windows")
    vals = grid.values
    if vals.size == 0:
        return None
    order = _descending_order(vals)
    shape, strides = _grid_layout(vals)
    pos = _crossing_sweep(order, shape, strides, axis)
    return float(vals.ravel()[order[pos]])


def origin_crossing_threshold(grid: FieldGrid) -> Optional[float]:
    """Largest level at which the origin cell is joined to the box boundary."""
    if grid.window.boundary != "hard":
        raise ValueError("crossing is defined on hard windows")
    vals = grid.values
    if vals.size == 0:
        return None
    order = _descending_order(vals)
    shape, strides = _grid_layout(vals)
    origin_flat = int(np.ravel_multi_index(grid.origin_index, vals.shape))
    pos = _origin_sweep(order, shape, strides, origin_flat)
    return float(vals.ravel()[order[pos]])


def wilson_interval(k: int, n: int, z: float = Z_95):
    """Score confidence interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need at least one trial")
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside 0..{n}")
    center = (k + z * z / 2.0) / (n + z * z)
    half = z * math.sqrt(k * (n - k) / n + z * z / 4.0) / (n + z * z)
    return center - half, center + half


@dataclass
class SweepResult:
    """Estimated percolation curves from replicated crossing thresholds."""

    h_levels: np.ndarray
    theta_weak: np.ndarray
    theta_strict: np.ndarray
    ci_weak: np.ndarray         # (n_levels, 2)
    ci_strict: np.ndarray
    crossing: np.ndarray        # per-replicate box-crossing threshold
    origin: np.ndarray          # per-replicate origin-to-boundary threshold
    n_replicates: int
    halfwidth: float
    alpha: float
    intensity: float
    seed: tuple = ()


def theta_curves(thresholds: np.ndarray, h_levels: np.ndarray):
    """Weak and strict exceedance frequencies of the thresholds at each level."""
    t = np.asarray(thresholds, dtype=float)[None, :]
    h = np.asarray(h_levels, dtype=float)[:, None]
    return (t >= h).mean(axis=1), (t > h).mean(axis=1)


def default_levels(thresholds: np.ndarray, n_levels: int = 64) -> np.ndarray:
    """Quantile grid of the observed thresholds, deduplicated."""
    probs = (np.arange(n_levels) + 0.5) / n_levels
    return np.unique(np.quantile(np.asarray(thresholds, dtype=float), probs))


def theta_hat(spec: AttenuationSpec, lam: float, halfwidth: float, alpha: float,
              n_replicates: int, seed, h_levels=None, eps: float = 1e-3,
              d: int = 2, axis: int = 0) -> SweepResult:
    """Replicated percolation-curve estimate on a box of the given halfwidth.

    Every replicate is an independent field; both curves and both crossing
    styles come from the same realizations (common random numbers), which
    makes the weak/strict comparison and the monotonicity in h exact.
    """
    if n_replicates < 1:
        raise ValueError("need at least one replicate")
    trunc = att.truncation_radius(spec, d, lam, eps)
    window = Window(d, halfwidth, trunc)
    crossing = np.empty(n_replicates)
    origin = np.empty(n_replicates)
    for rep in range(n_replicates):
        ps = sample_poisson(window, lam, task_seed(seed, "theta", halfwidth, alpha, rep))
        grid = field_on_grid(ps, spec, alpha, eps=eps, truncation=trunc)
        crossing[rep] = crossing_threshold(grid, axis)
        origin[rep] = origin_crossing_threshold(grid)
    if h_levels is None:
        h_levels = default_levels(crossing)
    h_levels = np.asarray(h_levels, dtype=float)
    theta_w, theta_s = theta_curves(crossing, h_levels)
    n = n_replicates
    ci_w = np.array([wilson_interval(round(p * n), n) for p in theta_w])
    ci_s = np.array([wilson_interval(round(p * n), n) for p in theta_s])
    return SweepResult(h_levels, theta_w, theta_s, ci_w, ci_s, crossing, origin,
                       n, halfwidth, alpha, lam, seed_tuple(seed))


@dataclass
class HcEstimate:
    """Critical-level estimate from per-size median crossing thresholds."""

    sizes: tuple
    medians: np.ndarray
    iqrs: np.ndarray
    estimate: float
    spread: float               # (max median - min median) / estimate
    n_replicates: int
    thresholds: dict

    def consistent(self, tol: float = 0.10) -> bool:
        return self.spread <= tol


def estimate_hc(spec: AttenuationSpec, lam: float, sizes: Sequence[float],
                alpha: float, n_replicates: int, seed, eps: float = 1e-3,
                d: int = 2, axis: int = 0) -> HcEstimate:
    """Median crossing threshold per box size, pooled into one level estimate.

    Near the critical level the crossing probability curves of different box
    sizes pivot around a common point, so the per-size medians agree up to
    finite-size wobble; their relative spread is the stability diagnostic.
    """
    sizes = tuple(sizes)
    if len(sizes) < 2:
        raise ValueError("need at least two box sizes")
    trunc = att.truncation_radius(spec, d, lam, eps)
    thresholds = {}
    for L in sizes:
        window = Window(d, L, trunc)
        t = np.empty(n_replicates)
        for rep in range(n_replicates):
            ps = sample_poisson(window, lam, task_seed(seed, "hc", L, alpha, rep))
            grid = field_on_grid(ps, spec, alpha, eps=eps, truncation=trunc)
            t[rep] = crossing_threshold(grid, axis)
        thresholds[L] = t
    medians = np.array([np.median(thresholds[L]) for L in sizes])
    iqrs = np.array([np.subtract(*np.percentile(thresholds[L], [75, 25])) for L in sizes])
    estimate = float(np.median(medians))
    spread = float((medians.max() - medians.min()) / estimate) if estimate else math.inf
    return HcEstimate(sizes, medians, iqrs, estimate, spread, n_replicates, thresholds)


@dataclass(frozen=True)
class MultiplicityReport:
    """How often a level set is crossed by more than one distinct cluster."""

    level: float
    fraction: float
    n_multiple: int
    n_replicates: int
    std_error: float


def uniqueness_statistic(spec: AttenuationSpec, lam: float, halfwidth: float,
                         alpha: float, h: float, n_replicates: int, seed,
                         eps: float = 1e-3, d: int = 2, axis: int = 0,
                         mode: str = "at-least") -> MultiplicityReport:
    """Frequency of replicates whose crossing at level h uses >= 2 clusters."""
    trunc = att.truncation_radius(spec, d, lam, eps)
    window = Window(d, halfwidth, trunc)
    multi = 0
    for rep in range(n_replicates):
        ps = sample_poisson(window, lam, task_seed(seed, "multi", halfwidth, h, rep))
        grid = field_on_grid(ps, spec, alpha, eps=eps, truncation=trunc)
        occ = threshold(grid, h, mode)
        if spanning_count(occ.occupied, axis) >= 2:
            multi += 1
    frac = multi / n_replicates
    se = math.sqrt(max(frac * (1 - frac), 1.0 / n_replicates) / n_replicates)
    return MultiplicityReport(h, frac, multi, n_replicates, se)


def boolean_occupied(points: PointSet, radius: float, alpha: float) -> LevelSetGrid:
    """Cells whose center lies within `radius` of some point.

    This is the union-of-balls model sampled on the grid; computed with a
    KD-tree, deliberately not through the field code, so the two agree only
    if both geometries are right.
    """
    if points.window is None:
        raise ValueError("boolean_occupied needs a window-backed point set")
    window = points.window
    x0, n = grid_geometry(window, alpha)
    centers = x0 + (np.arange(n) + 0.5) * alpha
    mesh = np.stack(np.meshgrid(*([centers] * window.dimension), indexing="ij"),
                    axis=-1).reshape(-1, window.dimension)
    if points.count == 0:
        occ = np.zeros((n,) * window.dimension, dtype=bool)
        return LevelSetGrid(occ, alpha, x0, window, radius, "boolean")
    if window.boundary == "torus":
        per = window.period
        if radius >= per / 2.0:
            raise ValueError("radius must stay below half the period")
        tree = spatial.cKDTree(np.mod(points.points + window.halfwidth, per),
                               boxsize=per)
        dist, _ = tree.query(np.mod(mesh + window.halfwidth, per), k=1)
    else:
        tree = spatial.cKDTree(points.points)
        dist, _ = tree.query(mesh, k=1)
    occ = (dist <= radius).reshape((n,) * window.dimension)
    return LevelSetGrid(occ, alpha, x0, window, radius, "boolean")


@dataclass(frozen=True)
class SandwichReport:
    """Cellwise inclusion checks of a level set between two ball models."""

    h: float
    inner_radius: Optional[float]
    outer_radius: Optional[float]
    lower_checked: int
    lower_violations: int
    upper_checked: int
    upper_violations: int
    skipped_lower: bool
    skipped_upper: bool
    reasons: tuple

    @property
    def holds(self) -> bool:
        return self.lower_violations == 0 and self.upper_violations == 0


def _largest_radius_at_level(spec: AttenuationSpec, h: float) -> Optional[float]:
    """Largest r with l(r) >= h, by bisection on the non-increasing kernel."""
    if spec.limit_at_zero < h:
        return None
    hi = spec.support_radius
    if math.isinf(hi):
        hi = 1.0
        while float(att.evaluate(spec, hi)) >= h and hi < 1e9:
            hi *= 2.0
    if float(att.evaluate(spec, hi)) >= h:
        return float(hi)
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(att.evaluate(spec, mid)) >= h:
            lo = mid
        else:
            hi = mid
    return lo


def sandwich_check(points: PointSet, spec: AttenuationSpec, h: float,
                   alpha: float) -> SandwichReport:
    """Verify ball(r_in) subset of {field >= h} subset of ball(support radius).

    r_in is the largest radius still attaining level h with one point alone.
    Either inclusion is skipped (and said so) when its hypothesis fails:
    the lower needs some r with l(r) >= h, the upper needs h > 0 and a
    finite-range kernel.  The field is evaluated without truncation error
    by construction (truncation at the support radius when finite).
    """
    reasons = []
    inner = _largest_radius_at_level(spec, h)
    skipped_lower = inner is None or inner == 0.0
    if skipped_lower:
        reasons.append("kernel never reaches the level, lower inclusion vacuous")
    r_l = spec.support_radius
    skipped_upper = not (h > 0 and math.isfinite(r_l))
    if skipped_upper:
        reasons.append("upper inclusion needs h > 0 and a finite-range kernel")
    trunc = r_l if math.isfinite(r_l) else att.truncation_radius(
        spec, points.window.dimension, points.intensity, 1e-6)
    grid = field_on_grid(points, spec, alpha, truncation=trunc)
    occ = grid.values >= h
    lower_checked = lower_viol = upper_checked = upper_viol = 0
    if not skipped_lower:
        inner_occ = boolean_occupied(points, inner, alpha).occupied
        lower_checked = occ.size
        lower_viol = int((inner_occ & ~occ).sum())
    if not skipped_upper:
        outer_occ = boolean_occupied(points, r_l, alpha).occupied
        upper_checked = occ.size
        upper_viol = int((occ & ~outer_occ).sum())
    return SandwichReport(h, inner, r_l if math.isfinite(r_l) else None,
                          lower_checked, lower_viol, upper_checked, upper_viol,
                          skipped_lower, skipped_upper, tuple(reasons))


# ---------------------------------------------------------------------------
# output helpers

def sweep_to_csv(result: SweepResult, path) -> None:
    lines = ["h,theta_weak,ci_lo_weak,ci_hi_weak,theta_strict,ci_lo_strict,"
             "ci_hi_strict,n_replicates"]
    for i, h in enumerate(result.h_levels):
        lines.append(",".join([
            repr(float(h)),
            repr(float(result.theta_weak[i])),
            repr(float(result.ci_weak[i, 0])), repr(float(result.ci_weak[i, 1])),
            repr(float(result.theta_strict[i])),
            repr(float(result.ci_strict[i, 0])), repr(float(result.ci_strict[i, 1])),
            str(result.n_replicates)]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def hc_to_csv(est: HcEstimate, path) -> None:
    lines = ["halfwidth,median_threshold,iqr,n_replicates"]
    for i, L in enumerate(est.sizes):
        lines.append(",".join([repr(float(L)), repr(float(est.medians[i])),
                               repr(float(est.iqrs[i])), str(est.n_replicates)]))
    lines.append(f"# estimate {est.estimate!r} spread {est.spread!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_pbm(level_set: LevelSetGrid, path) -> None:
    """Portable bitmap of a two-dimensional occupancy grid."""
    occ = level_set.occupied
    if occ.ndim != 2:
        raise ValueError("PBM output is two-dimensional only")
    h, w = occ.shape
    rows = [" ".join("1" if v else "0" for v in occ[r]) for r in range(h)]
    with open(path, "w") as fh:
        fh.write(f"P1\n{w} {h}\n" + "\n".join(rows) + "\n")
