"""Cantor-type translate sets, covering numbers, delta-nets, and the
fractal measure-class check.

The translate sets have the form T = {0}^(n-k) x C, where C is a k-fold
product of symmetric Cantor sets in [-1/2, 1/2].  Each factor keeps both
endpoints of every interval and replaces an interval of length L by the two
end subintervals of length a*L, so after depth g there are 2^g cells of
length a^g per factor.  Choosing a = 2^(-1/d) gives the factor Minkowski
dimension d; a = 1/2 makes the cells tile, i.e. the factor is the whole
interval.

Membership and distance are exact at cell level: per factor the sorted left
endpoints allow a searchsorted lookup, and for product sets the squared
Euclidean distance splits across factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionError, ValidationError
from .rng import stream

__all__ = [
    "CantorSpec",
    "TranslateSet",
    "DiscreteMeasure",
    "SphereDomain",
    "BoxDomain",
    "build_cantor",
    "build_translate_set",
    "covering_number",
    "minkowski_profile",
    "minkowski_constant",
    "delta_net",
    "measure_class_ratio",
]

MAX_FACTOR_CELLS = 1 << 22
NET_POINT_LIMIT = 400_000


@dataclass(frozen=True)
class CantorSpec:
    """k-fold product of symmetric Cantor factors with contraction ratio a."""

    factors: int
    ratio: float
    depth: int

    def __post_init__(self):
        if self.factors < 1:
            raise ValidationError("CantorSpec needs at least one factor")
        if not (0 < self.ratio <= 0.5):
            raise ValidationError(f"ratio must lie in (0, 1/2], got {self.ratio}")
        if self.depth < 0:
            raise ValidationError("depth must be nonnegative")
        if 2**self.depth > MAX_FACTOR_CELLS:
            raise ValidationError(f"depth {self.depth} exceeds the cell budget")

    @property
    def factor_dimension(self) -> float:
        return math.log(2) / math.log(1 / self.ratio)

    @property
    def dimension(self) -> float:
        return self.factors * self.factor_dimension

    @property
    def cell_length(self) -> float:
        return self.ratio**self.depth

    def cell_lows(self) -> np.ndarray:
        """Sorted left endpoints of the 2^depth factor cells."""
        return _factor_cell_lows(self.ratio, self.depth)

    def factor_distance(self, coords: np.ndarray) -> np.ndarray:
        """Exact 1D distance from each coordinate to the depth-level factor set."""
        lows = self.cell_lows()
        length = self.cell_length
        x = np.asarray(coords, dtype=float)
        idx = np.searchsorted(lows, x)
        dist = np.full(x.shape, np.inf)
        left = idx - 1
        has_left = left >= 0
        gap_left = np.where(has_left, x - (lows[np.clip(left, 0, None)] + length), np.inf)
        inside = has_left & (gap_left <= 0)
        dist = np.where(inside, 0.0, dist)
        dist = np.minimum(dist, np.where(has_left, np.maximum(gap_left, 0.0), np.inf))
        has_right = idx < lows.size
        gap_right = np.where(has_right, lows[np.clip(idx, None, lows.size - 1)] - x, np.inf)
        dist = np.minimum(dist, np.maximum(gap_right, 0.0))
        return dist


@lru_cache(maxsize=64)
def _factor_cell_lows(ratio: float, depth: int) -> np.ndarray:
    lows = np.array([-0.5])
    length = 1.0
    for _ in range(depth):
        lows = np.concatenate([lows, lows + length * (1 - ratio)])
        length *= ratio
    lows = np.sort(lows)
    lows.setflags(write=False)
    return lows


@dataclass(frozen=True)
class TranslateSet:
    """T = {0}^(ambient_dim - factors) x C inside [-1/2, 1/2]^n.

    s = 0 degenerates to the single point {0}^n (cantor is None)."""

    ambient_dim: int
    s: float
    cantor: CantorSpec | None

    def __post_init__(self):
        if not (0 <= self.s < self.ambient_dim - 1 + 1e-12):
            raise ValidationError(f"s must lie in [0, n-1), got s={self.s}, n={self.ambient_dim}")
        if self.s == 0:
            if self.cantor is not None:
                raise ValidationError("s=0 translate set carries no Cantor factor")
        else:
            if self.cantor is None or self.cantor.factors != math.ceil(self.s):
                raise ValidationError("cantor.factors must equal ceil(s)")

    @property
    def factors(self) -> int:
        return 0 if self.cantor is None else self.cantor.factors

    @property
    def zero_padding(self) -> int:
        return self.ambient_dim - self.factors

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Exact Euclidean distance to the depth-level set; points (..., n)."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.ambient_dim:
            raise DimensionError("point dimension mismatch")
        pad = self.zero_padding
        sq = (pts[..., :pad] ** 2).sum(axis=-1)
        if self.cantor is not None:
            for j in range(self.factors):
                sq = sq + self.cantor.factor_distance(pts[..., pad + j]) ** 2
        return np.sqrt(sq)

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        return self.distance(points) <= tol

    def cell_centers(self) -> np.ndarray:
        """Centers of all depth-level product cells, padded with zeros."""
        if self.cantor is None:
            return np.zeros((1, self.ambient_dim))
        lows = self.cantor.cell_lows()
        mid = lows + self.cantor.cell_length / 2
        grids = np.meshgrid(*([mid] * self.factors), indexing="ij")
        stacked = np.stack([g.ravel() for g in grids], axis=-1)
        out = np.zeros((stacked.shape[0], self.ambient_dim))
        out[:, self.zero_padding :] = stacked
        return out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform points of the depth-level cell union (exact product law)."""
        out = np.zeros((size, self.ambient_dim))
        if self.cantor is None:
            return out
        lows = self.cantor.cell_lows()
        length = self.cantor.cell_length
        for j in range(self.factors):
            picks = rng.integers(0, lows.size, size)
            out[:, self.zero_padding + j] = lows[picks] + rng.random(size) * length
        return out


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely many weighted atoms; the measure nu = sum w_i delta_{x_i}."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.atoms, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValidationError("measure needs a nonempty (N, dim) atom array")
        if w.shape != (pts.shape[0],) or np.any(w < 0):
            raise ValidationError("weights must be nonnegative, one per atom")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "atoms", pts)
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class SphereDomain:
    """Unit sphere S^{n-1} in R^n; net separation measured geodesically."""

    n: int

    def __post_init__(self):
        if not (2 <= self.n <= 5):
            raise DimensionError(f"sphere domain needs n in 2..5, got {self.n}")


@dataclass(frozen=True)
class BoxDomain:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValidationError("box must satisfy lo < hi componentwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


# ---------------------------------------------------------------------------
# constructors


def build_cantor(dimension_per_factor: float, factors: int, depth: int) -> CantorSpec:
    """Cantor product whose per-factor Minkowski dimension is the given d.

    The contraction ratio solves log 2 / log(1/a) = d, i.e. a = 2^(-1/d);
    d = 1 gives a = 1/2 whose cells tile the full interval.
    """
    if not (0 < dimension_per_factor <= 1):
        raise ValidationError(f"dimension per factor must lie in (0, 1], got {dimension_per_factor}")
    ratio = 2.0 ** (-1.0 / dimension_per_factor)
    return CantorSpec(factors=factors, ratio=ratio, depth=depth)


def auto_depth(ratio: float, delta: float) -> int:
    """Smallest k with ratio^k <= delta/2 (cells finer than the working scale)."""
    k = 0
    length = 1.0
    while length > delta / 2:
        length *= ratio
        k += 1
    return k


def build_translate_set(n: int, s: float, delta: float | None = None, depth: int | None = None) -> TranslateSet:
    """Translate set of dimension s in R^n; depth defaults to the delta scale."""
    if s == 0:
        return TranslateSet(ambient_dim=n, s=0.0, cantor=None)
    factors = math.ceil(s)
    d = s / factors
    ratio = 2.0 ** (-1.0 / d)
    if depth is None:
        if delta is None:
            raise ValidationError("provide either delta or an explicit depth")
        depth = auto_depth(ratio, delta)
    return TranslateSet(ambient_dim=n, s=float(s), cantor=CantorSpec(factors=factors, ratio=ratio, depth=depth))


# ---------------------------------------------------------------------------
# covering numbers and Minkowski content


def _factor_generation(ratio: float, delta: float) -> int:
    # smallest g >= 0 with ratio^g <= delta, robust to float fuzz
    if delta >= 1.0:
        return 0
    g = math.log(delta) / math.log(ratio)
    gi = math.ceil(g - 1e-9)
    return max(gi, 0)


def covering_number(t: TranslateSet, delta: float) -> int:
    """Number of scale-delta dyadic-generation cells covering T, exactly.

    Per factor this is 2^g for the first generation with cell size <= delta;
    the zero padding contributes nothing.
    """
    if not (0 < delta < 0.5):
        raise ValidationError(f"delta must lie in (0, 1/2), got {delta}")
    if t.cantor is None:
        return 1
    g = _factor_generation(t.cantor.ratio, delta)
    if g > t.cantor.depth:
        raise ValidationError(
            f"depth {t.cantor.depth} too shallow for delta={delta} (needs generation {g})"
        )
    return (2**g) ** t.factors


def minkowski_profile(
    domain: TranslateSet | SphereDomain,
    delta_ladder: list[float],
    s: float | None = None,
    seed: int = 0,
) -> list[float]:
    """Per-rung values delta^s * N(domain, delta) along the ladder.

    For translate sets N is the exact combinatorial covering number; for
    spheres it is the size of a greedy maximal separated net (a delta-cover).
    """
    if isinstance(domain, TranslateSet):
        dim = domain.s if s is None else s
        return [delta**dim * covering_number(domain, delta) for delta in delta_ladder]
    dim = (domain.n - 1) if s is None else s
    out = []
    for delta in delta_ladder:
        net = delta_net(domain, delta, seed=seed)
        out.append(delta**dim * len(net))
    return out


def minkowski_constant(
    domain: TranslateSet | SphereDomain,
    delta_ladder: list[float],
    s: float | None = None,
    seed: int = 0,
) -> float:
    """Max over the ladder of delta^s * N(domain, delta)."""
    return max(minkowski_profile(domain, delta_ladder, s=s, seed=seed))


# ---------------------------------------------------------------------------
# delta-nets


def _axis_progression(a: float, b: float, delta: float) -> np.ndarray:
    count = int(math.floor((b - a) / delta + 1e-9)) + 1
    return a + delta * np.arange(count)


def _greedy_euclidean_net(candidates: np.ndarray, delta: float) -> np.ndarray:
    """Greedy delta-separated subset in candidate order, grid-accelerated.

    Bucket side equals delta, so any point within delta of a candidate lives
    in the same or an adjacent bucket.
    """
    k = candidates.shape[1]
    taken: list[np.ndarray] = []
    buckets: dict[tuple, list[int]] = {}
    offsets = [
        tuple(v) for v in np.array(np.meshgrid(*([[-1, 0, 1]] * k), indexing="ij")).reshape(k, -1).T
    ]
    thresh = delta**2
    for x in candidates:
        key = tuple(np.floor(x / delta).astype(int))
        ok = True
        for off in offsets:
            near = buckets.get(tuple(a + b for a, b in zip(key, off)))
            if near:
                pts = np.array([taken[i] for i in near])
                if np.min(((pts - x) ** 2).sum(axis=1)) < thresh:
                    ok = False
                    break
        if ok:
            buckets.setdefault(key, []).append(len(taken))
            taken.append(x.copy())
    return np.array(taken)


def _net_box(domain: BoxDomain, delta: float, seed: int) -> np.ndarray:
    k = domain.lo.size
    if k <= 3:
        axes = [_axis_progression(domain.lo[i], domain.hi[i], delta) for i in range(k)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)
    # cubic spacing cannot delta-cover in high dimension; greedy over a finer lattice
    axes = [_axis_progression(domain.lo[i], domain.hi[i], delta / math.sqrt(k)) for i in range(k)]
    total = int(np.prod([a.size for a in axes]))
    if total > 2_000_000:
        raise ValidationError(f"box net at delta={delta} would need {total} candidates")
    grids = np.meshgrid(*axes, indexing="ij")
    cand = np.stack([g.ravel() for g in grids], axis=-1)
    rng = stream(seed, "boxnet")
    cand = cand[rng.permutation(cand.shape[0])]
    return _greedy_euclidean_net(cand, delta)


def _net_sphere(domain: SphereDomain, delta: float, seed: int) -> np.ndarray:
    n = domain.n
    if n == 2:
        # equal-arc net; separation/maximality hold in the geodesic metric
        count = int(math.floor(2 * math.pi / delta + 1e-9))
        start = stream(seed, "s1net").random() * (2 * math.pi / count)
        ang = start + (2 * math.pi / count) * np.arange(count)
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    expected = 4.0 / delta ** (n - 1)
    if 6 * expected > NET_POINT_LIMIT:
        raise ValidationError(f"net at delta={delta} in n={n} would exceed the point budget")
    rng = stream(seed, "snet")
    chord = 2 * math.sin(min(delta, math.pi) / 2)
    pool = int(min(max(40 * expected, 20_000), 600_000))
    cand = rng.standard_normal((pool, n))
    cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    net = _greedy_euclidean_net(cand, chord)
    # repair: from the deepest probes, ascend the distance-to-net function on
    # the sphere and insert every local maximum that clears the separation
    # threshold; repeat with fresh probes until several clean rounds pass
    clean = 0
    while clean < 3:
        probes = rng.standard_normal((100_000, n))
        probes /= np.linalg.norm(probes, axis=1, keepdims=True)
        tree = cKDTree(net)
        dist, _ = tree.query(probes, k=1)
        deep = probes[np.argsort(dist)[-2000:]]
        peaks = _ascend_gap(deep, net, chord)
        added = 0
        for x in peaks:
            if np.min(((net - x) ** 2).sum(axis=1)) > chord**2 + 1e-12:
                net = np.vstack([net, x])
                added += 1
        clean = 0 if added else clean + 1
    return net


def _ascend_gap(points: np.ndarray, net: np.ndarray, chord: float) -> np.ndarray:
    """Push sphere points away from their nearest net point (steepest ascent
    of the min-distance function) to locate coverage holes."""
    x = points.copy()
    tree = cKDTree(net)
    step = chord / 2
    for _ in range(14):
        _, idx = tree.query(x, k=1)
        away = x - net[idx]
        norm = np.linalg.norm(away, axis=1, keepdims=True)
        away /= np.maximum(norm, 1e-300)
        x = x + step * away
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        step *= 0.6
    return x


def _net_translate(t: TranslateSet, delta: float, seed: int) -> np.ndarray:
    rng = stream(seed, "tnet")
    cand = t.cell_centers()
    cand = cand[rng.permutation(cand.shape[0])]
    net = _greedy_euclidean_net(cand, delta)
    clean = 0
    while clean < 3:
        probes = t.sample(rng, 100_000)
        tree = cKDTree(net)
        dist, _ = tree.query(probes, k=1)
        far = dist > delta + 1e-12
        if not far.any():
            clean += 1
            continue
        clean = 0
        for x in probes[far]:
            if np.min(((net - x) ** 2).sum(axis=1)) >= delta**2:
                net = np.vstack([net, x])
    return net


def delta_net(domain: TranslateSet | SphereDomain | BoxDomain, delta: float, seed: int = 0) -> np.ndarray:
    """Maximal delta-separated point family on the domain.

    Separation uses the geodesic metric on spheres and the Euclidean metric
    otherwise.  Maximality is certified by probe repair; the greedy order is
    fixed by the seed, so the output is deterministic.
    """
    if not (0 < delta < math.pi):
        raise ValidationError(f"delta out of range: {delta}")
    if isinstance(domain, BoxDomain):
        return _net_box(domain, delta, seed)
    if isinstance(domain, SphereDomain):
        return _net_sphere(domain, delta, seed)
    if isinstance(domain, TranslateSet):
        if domain.cantor is None:
            return np.zeros((1, domain.ambient_dim))
        return _net_translate(domain, delta, seed)
    raise ValidationError(f"unsupported net domain: {type(domain).__name__}")


# ---------------------------------------------------------------------------
# measure class


def measure_class_ratio(
    mu: DiscreteMeasure,
    alpha: float,
    ball_samples: int,
    seed: int,
    r_min: float = 1e-3,
    r_max: float = 2.0,
) -> float:
    """Largest sampled value of nu(B_r(x)) / r^alpha.

    Balls are centered at every atom and at random points near the support;
    radii run over a dyadic ladder in [r_min, r_max] plus log-uniform draws.
    A result <= 1 certifies the measure on the sampled family of balls.
    """
    if alpha <= 0:
        raise ValidationError("alpha must be positive")
    if not (0 < r_min < r_max):
        raise ValidationError("need 0 < r_min < r_max")
    rng = stream(seed, "cls")
    tree = cKDTree(mu.atoms)
    w = mu.weights

    radii = [r_min]
    while radii[-1] < r_max:
        radii.append(min(radii[-1] * 2, r_max))
    ladder = np.array(radii)

    centers = [mu.atoms]
    k = max(ball_samples, 1)
    lo = mu.atoms.min(axis=0) - r_max / 2
    hi = mu.atoms.max(axis=0) + r_max / 2
    centers.append(lo + rng.random((k, mu.atoms.shape[1])) * (hi - lo))
    all_centers = np.vstack(centers)

    rand_r = np.exp(
        math.log(r_min) + rng.random(all_centers.shape[0]) * (math.log(r_max) - math.log(r_min))
    )

    worst = 0.0
    uniform = bool(np.all(w == w[0]))
    for r in ladder:
        if uniform:
            counts = tree.query_ball_point(all_centers, r, return_length=True)
            worst = max(worst, float(counts.max()) * w[0] / r**alpha)
        else:
            for idx in tree.query_ball_point(all_centers, r):
                if idx:
                    worst = max(worst, float(w[idx].sum()) / r**alpha)
    if uniform:
        counts = tree.query_ball_point(all_centers, rand_r, return_length=True)
        vals = counts * w[0] / rand_r**alpha
        worst = max(worst, float(vals.max()))
    else:
        for idx, r in zip(tree.query_ball_point(all_centers, rand_r), rand_r):
            if idx:
                worst = max(worst, float(w[idx].sum()) / r**alpha)
    return worst
