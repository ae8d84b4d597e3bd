"""Poisson point samplers on boxes plus exact coupling and domination checks.

Sampling is fully determined by a seed: the seed feeds a counter-based
Philox generator through numpy's SeedSequence, so replicate streams can be
spawned independently of execution order or worker count.

The verification half of the module works with exact Poisson arithmetic in
log space: conditional tail dominance, the total-variation distance between
a Poisson count and its shift by one, and a maximal coupling attaining that
distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special


# ---------------------------------------------------------------------------
# seeding

def seed_tuple(seed) -> tuple:
    """Normalize a seed (int or iterable of ints) to a tuple of ints."""
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    t = tuple(int(s) for s in seed)
    if not t:
        raise ValueError("seed must contain at least one integer")
    return t


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator for the given seed material."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed_tuple(seed))))


def _float_bits(x) -> int:
    return int(np.float64(x).view(np.uint64))


def task_seed(base_seed, *coords) -> tuple:
    """Derived seed for one task, stable in the task coordinates.

    Floats are folded in via their IEEE bit patterns so (0.25, 32, 7) and
    (0.25, 32.0, 7) address distinct, reproducible streams.
    """
    parts = list(seed_tuple(base_seed))
    for c in coords:
        if isinstance(c, (int, np.integer)):
            parts.append(int(c) & 0xFFFFFFFFFFFFFFFF)
        elif isinstance(c, (float, np.floating)):
            parts.append(_float_bits(c))
        elif isinstance(c, str):
            parts.append(int.from_bytes(c.encode()[:8].ljust(8, b"\0"), "big"))
        else:
            raise TypeError(f"unsupported task coordinate {c!r}")
    return tuple(parts)


# ---------------------------------------------------------------------------
# geometry

@dataclass(frozen=True)
class Window:
    """Origin-centered observation box [-L, L]^d with a sampling margin M.

    Points are laid down on the enlarged box [-(L+M), L+M]^d so that field
    values near the observation boundary see the same point intensity as the
    bulk ("hard" boundary).  A torus window wraps distances instead and takes
    no margin.
    """

    dimension: int
    halfwidth: float
    margin: float = 0.0
    boundary: str = "hard"

    def __post_init__(self):
        if self.dimension < 2 or self.dimension != int(self.dimension):
            raise ValueError(f"dimension must be an integer >= 2, got {self.dimension}")
        if self.halfwidth < 0:
            raise ValueError(f"halfwidth must be nonnegative, got {self.halfwidth}")
        if self.margin < 0:
            raise ValueError(f"margin must be nonnegative, got {self.margin}")
        if self.boundary not in ("hard", "torus"):
            raise ValueError(f"boundary must be 'hard' or 'torus', got {self.boundary!r}")
        if self.boundary == "torus" and self.margin != 0:
            raise ValueError("torus windows take no margin")

    @property
    def sampling_halfwidth(self) -> float:
        return self.halfwidth + self.margin

    @property
    def volume(self) -> float:
        return (2.0 * self.sampling_halfwidth) ** self.dimension

    @property
    def period(self) -> float:
        """Wrap length per axis (torus only)."""
        return 2.0 * self.halfwidth


@dataclass
class PointSet:
    """Point coordinates plus the recipe (seed, intensity) that made them."""

    points: np.ndarray          # (count, d) float64
    intensity: float
    seed: tuple
    window: Optional[Window] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1 and pts.size == 0:
            pts = pts.reshape(0, self.window.dimension if self.window else 1)
        if pts.ndim != 2:
            raise ValueError("points must be an (n, d) array")
        self.points = pts

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1] if self.points.size else (
            self.window.dimension if self.window else 0)

    def __len__(self):
        return self.count


def sample_poisson(window: Window, lam: float, seed) -> PointSet:
    """Homogeneous Poisson sample on the window's sampling box.

    The count is Poisson(lam * volume) and positions are iid uniform;
    identical seeds give bit-identical output.
    """
    if lam < 0:
        raise ValueError(f"intensity must be nonnegative, got {lam}")
    rng = make_rng(seed)
    hw = window.sampling_halfwidth
    n = int(rng.poisson(lam * window.volume)) if window.volume > 0 else 0
    pts = rng.uniform(-hw, hw, size=(n, window.dimension))
    return PointSet(pts, lam, seed_tuple(seed), window)


def sample_plus_one(window: Window, lam: float, seed) -> PointSet:
    """Poisson sample plus one independent uniform point in the observation box.

    The first count-1 rows coincide bit for bit with sample_poisson under the
    same seed; the appended last row is the extra point.
    """
    if lam < 0:
        raise ValueError(f"intensity must be nonnegative, got {lam}")
    rng = make_rng(seed)
    hw = window.sampling_halfwidth
    n = int(rng.poisson(lam * window.volume)) if window.volume > 0 else 0
    pts = rng.uniform(-hw, hw, size=(n, window.dimension))
    extra = rng.uniform(-window.halfwidth, window.halfwidth, size=(1, window.dimension))
    return PointSet(np.vstack([pts, extra]), lam, seed_tuple(seed), window)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box used as a partition cell for conditioned sampling."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or not self.lo:
            raise ValueError("lo and hi must be nonempty and of equal length")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("box must have positive extent on every axis")

    @property
    def dimension(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod([h - l for l, h in zip(self.lo, self.hi)]))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo) & (pts < hi), axis=1)

    def overlaps(self, other: "Box") -> bool:
        return all(l1 < h2 and l2 < h1 for l1, h1, l2, h2 in
                   zip(self.lo, self.hi, other.lo, other.hi))


def _check_cells(cells: Sequence[Box]):
    if not cells:
        raise ValueError("need at least one cell")
    d = cells[0].dimension
    if any(c.dimension != d for c in cells):
        raise ValueError("cells must share one dimension")
    for i in range(len(cells)):
        for j in range(i + 1, len(cells)):
            if cells[i].overlaps(cells[j]):
                raise ValueError(f"cells {i} and {j} overlap; partition cells must be disjoint")


def exact_nonempty_probability(cells: Sequence[Box], regions: Sequence[Sequence[int]],
                               lam: float) -> float:
    """P(every region receives a point), by inclusion-exclusion over regions."""
    vols = [c.volume for c in cells]
    m = len(regions)
    total = 0.0
    for mask in range(1 << m):
        covered = set()
        for i in range(m):
            if mask >> i & 1:
                covered.update(regions[i])
        sign = -1.0 if bin(mask).count("1") % 2 else 1.0
        total += sign * math.exp(-lam * sum(vols[j] for j in covered))
    return total


def sample_conditioned_nonempty(cells: Sequence[Box], regions: Sequence[Sequence[int]],
                                lam: float, seed, max_attempts: int = 1_000_000,
                                return_attempts: bool = False):
    """Poisson sample on the cell union conditioned on every region being hit.

    Regions are index sets into `cells`; rejection sampling on the per-cell
    counts keeps the law exact.  Positions are only drawn once the counts are
    accepted.  Raises RuntimeError when max_attempts rejections go by, which
    signals a conditioning event that is too rare to sample this way.
    """
    _check_cells(cells)
    if not regions or any(len(r) == 0 for r in regions):
        raise ValueError("every region must contain at least one cell index")
    for reg in regions:
        if any(not 0 <= j < len(cells) for j in reg):
            raise ValueError("region refers to a cell index that does not exist")
    rng = make_rng(seed)
    vols = np.array([c.volume for c in cells])
    for attempt in range(1, max_attempts + 1):
        counts = rng.poisson(lam * vols)
        if all(counts[list(reg)].sum() >= 1 for reg in regions):
            parts = [rng.uniform(c.lo, c.hi, size=(counts[j], c.dimension))
                     for j, c in enumerate(cells)]
            ps = PointSet(np.vstack(parts) if parts else np.empty((0, cells[0].dimension)),
                          lam, seed_tuple(seed), None)
            return (ps, attempt) if return_attempts else ps
    p = exact_nonempty_probability(cells, regions, lam)
    raise RuntimeError(
        f"no acceptance in {max_attempts} attempts; the conditioning event has "
        f"probability {p:.3e}, raise max_attempts or reformulate")


def sample_dominating_sum(cells: Sequence[Box], lam: float, seed) -> PointSet:
    """Poisson sample on the cell union plus one uniform point per cell.

    This is the stochastic upper bound for the conditioned process above: a
    fresh Poisson configuration with one forced point in every cell dominates
    the conditioned law in the upper-orthant order on cell counts.
    """
    _check_cells(cells)
    rng = make_rng(seed)
    vols = np.array([c.volume for c in cells])
    counts = rng.poisson(lam * vols)
    parts = [rng.uniform(c.lo, c.hi, size=(counts[j], c.dimension))
             for j, c in enumerate(cells)]
    extras = [rng.uniform(c.lo, c.hi, size=(1, c.dimension)) for c in cells]
    return PointSet(np.vstack(parts + extras), lam, seed_tuple(seed), None)


def count_in_cells(ps: PointSet, cells: Sequence[Box]) -> np.ndarray:
    return np.array([int(c.contains(ps.points).sum()) if ps.count else 0 for c in cells])


# ---------------------------------------------------------------------------
# exact Poisson arithmetic

def _log_pmf(lam: float, ks: np.ndarray) -> np.ndarray:
    return ks * math.log(lam) - lam - special.gammaln(ks + 1.0) if lam > 0 else \
        np.where(ks == 0, 0.0, -np.inf)


def poisson_survival(lam: float, k_max: int) -> np.ndarray:
    """P(X >= k) for k = 0..k_max via log-gamma pmf accumulation.

    Terms are summed upward from the far tail so the small ones are not
    swallowed by the big ones.
    """
    buf = int(k_max + lam + 20.0 * math.sqrt(lam) + 80)
    ks = np.arange(buf + 1, dtype=float)
    pmf = np.exp(_log_pmf(lam, ks))
    surv = np.cumsum(pmf[::-1])[::-1]
    out = np.minimum(surv[:k_max + 1], 1.0)
    out[0] = 1.0
    return out


@dataclass(frozen=True)
class TailDominanceCheck:
    """P(X >= k | X >= 1) <= P(X >= k-1), checked exactly for k = 1..k_max."""

    lam: float
    k: np.ndarray
    conditional: np.ndarray   # P(X >= k | X >= 1)
    unconditional: np.ndarray  # P(X >= k-1)
    margin: np.ndarray

    @property
    def min_margin(self) -> float:
        return float(self.margin.min())

    def holds(self, tol: float = 1e-12) -> bool:
        return self.min_margin >= -tol


def exact_tail_dominance(lam: float, k_max: int, survival=None) -> TailDominanceCheck:
    """Exact check that conditioning a Poisson count on being >= 1 costs at
    most one unit in the upper tail.

    `survival` may inject an alternative k -> P(X >= k) map; the default is
    the exact log-space accumulation.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if survival is None:
        surv = poisson_survival(lam, k_max)
    else:
        surv = np.array([survival(k) for k in range(k_max + 1)], dtype=float)
    ks = np.arange(1, k_max + 1)
    conditional = surv[1:] / surv[1]
    unconditional = surv[:-1]
    return TailDominanceCheck(lam, ks, conditional, unconditional,
                              unconditional - conditional)


def exact_tv_poisson_shift(lam: float) -> float:
    """Total-variation distance between Poisson(lam) and 1 + Poisson(lam).

    Computed as half the absolute pmf difference summed over all k, then
    cross-checked against the unimodality identity that the sum telescopes
    to the pmf at the mode floor(lam).  Disagreement beyond 1e-12 raises.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    k_hi = int(lam + 20.0 * math.sqrt(lam) + 80)
    ks = np.arange(k_hi + 1, dtype=float)
    pmf = np.exp(_log_pmf(lam, ks))
    shifted = np.concatenate([[0.0], pmf[:-1]])
    tv_sum = 0.5 * float(np.abs(pmf - shifted).sum())
    tv_mode = float(math.exp(_log_pmf(lam, np.array([math.floor(lam)]))[0]))
    if abs(tv_sum - tv_mode) > 1e-12:
        raise RuntimeError(
            f"pmf-sum TV {tv_sum!r} and mode-pmf TV {tv_mode!r} disagree at lam={lam}")
    return tv_sum


def sample_coupled_shift_pairs(lam: float, seed, n_samples: int):
    """Draw (Y0, Y1) from the maximal coupling of Poisson(lam) and its shift.

    The overlap measure min(p0, p1) is sampled with probability 1 - TV, in
    which case Y0 = Y1; otherwise the two residual distributions are sampled,
    and those have disjoint supports (below and above lam), so the pair
    disagrees exactly with probability TV.  Marginals are exact up to pmf
    truncation at ~1e-18.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    k_hi = int(lam + 24.0 * math.sqrt(lam) + 90)
    ks = np.arange(k_hi + 1, dtype=float)
    p0 = np.exp(_log_pmf(lam, ks))
    p1 = np.concatenate([[0.0], p0[:-1]])
    overlap = np.minimum(p0, p1)
    omega = float(overlap.sum())
    res0 = p0 - overlap
    res1 = p1 - overlap
    rng = make_rng(seed)
    u_branch = rng.random(n_samples)
    agree = u_branch < omega

    def draw(weights, u):
        cdf = np.cumsum(weights)
        cdf /= cdf[-1]
        return np.searchsorted(cdf, u, side="right")

    y0 = np.empty(n_samples, dtype=np.int64)
    y1 = np.empty(n_samples, dtype=np.int64)
    n_agree = int(agree.sum())
    if n_agree:
        same = draw(overlap, rng.random(n_agree))
        y0[agree] = same
        y1[agree] = same
    n_dis = n_samples - n_agree
    if n_dis:
        y0[~agree] = draw(res0, rng.random(n_dis))
        y1[~agree] = draw(res1, rng.random(n_dis))
    return y0, y1


@dataclass(frozen=True)
class CouplingReport:
    """Empirical disagreement of the maximal coupling against the exact TV."""

    lam: float
    n_samples: int
    exact_disagreement: float
    empirical_disagreement: float
    std_error: float
    z_score: float

    def consistent(self, z_max: float = 4.0) -> bool:
        return abs(self.z_score) <= z_max


def couple_poisson_shift(lam: float, seed, n_samples: int) -> CouplingReport:
    y0, y1 = sample_coupled_shift_pairs(lam, seed, n_samples)
    tv = exact_tv_poisson_shift(lam)
    emp = float(np.mean(y0 != y1))
    se = math.sqrt(max(tv * (1.0 - tv), 1e-300) / n_samples)
    return CouplingReport(lam, n_samples, tv, emp, se, (emp - tv) / se)


@dataclass(frozen=True)
class TvBoundCheck:
    n: np.ndarray
    lam: np.ndarray
    tv: np.ndarray
    bound: np.ndarray

    @property
    def all_within(self) -> bool:
        return bool(np.all(self.tv <= self.bound))


def tv_bound_check(n_max: int) -> TvBoundCheck:
    """Exact TV of the plus-one shift at lam = 4 n^2 against the 1/n bound.

    This is the quantitative step behind boundary-condition insensitivity:
    adding one uniformly placed point to a Poisson configuration on a box of
    side 2n moves its law by at most 1/n in total variation.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    ns = np.arange(1, n_max + 1)
    lams = 4.0 * ns.astype(float) ** 2
    tvs = np.array([exact_tv_poisson_shift(l) for l in lams])
    return TvBoundCheck(ns, lams, tvs, 1.0 / ns)


# ---------------------------------------------------------------------------
# serialization

def write_point_set(ps: PointSet, path) -> None:
    """Plain-text dump; coordinates use repr so the round trip is bit-exact."""
    if ps.window is None:
        raise ValueError("only window-backed point sets serialize")
    w = ps.window
    lines = [
        "pointset",
        f"d {w.dimension}",
        f"L {w.halfwidth!r}",
        f"M {w.margin!r}",
        f"boundary {w.boundary}",
        f"lam {ps.intensity!r}",
        "seed " + " ".join(str(s) for s in ps.seed),
        f"count {ps.count}",
    ]
    for row in ps.points:
        lines.append(" ".join(repr(float(x)) for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_point_set(path) -> PointSet:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != "pointset":
        raise ValueError(f"{path} is not a point-set file")
    head = {}
    i = 1
    while i < len(lines):
        key, _, rest = lines[i].partition(" ")
        head[key] = rest
        i += 1
        if key == "count":
            break
    window = Window(int(head["d"]), float(head["L"]), float(head["M"]), head["boundary"])
    count = int(head["count"])
    pts = np.empty((count, window.dimension))
    for j in range(count):
        pts[j] = [float(tok) for tok in lines[i + j].split()]
    seed = tuple(int(tok) for tok in head["seed"].split())
    return PointSet(pts, float(head["lam"]), seed, window)
