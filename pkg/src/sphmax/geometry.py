"""Sphere and annulus geometry: pair/triple quantities, intersection-volume
bounds, and Monte Carlo volume estimators.

Conventions.  A sphere is the boundary set {x : |x-c| = r} in R^n with
n in {2,...,5}; its delta-annulus is {x : ||x-c| - r| <= delta}.  The two
pair quantities are

    d     = |a-b| + |r-s|
    Delta = ||a-b| - |r-s|| * |r+s - |a-b||

(d measures distance from coincidence, Delta distance from internal/external
tangency).  For triples of unit spheres the relevant quantities are the max
and min pairwise center distances M, m and the circumradius R of the three
centers (infinite when collinear).

The bound formulas are stated up to dimensional constants; callers that need
an actual dominating value multiply by the calibrated constants in
`config.Constants`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import Constants, DEFAULTS
from .errors import DimensionError, PreconditionError, ValidationError
from .rng import map_chunks, stream

__all__ = [
    "Sphere",
    "Annulus",
    "PairGeometry",
    "TripleGeometry",
    "TripleBound",
    "MCEstimate",
    "pair_quantities",
    "triple_quantities",
    "two_annuli_bound",
    "three_annuli_bound",
    "transverse_bound_value",
    "near_one_bound_value",
    "mc_volume",
    "annuli_intersection_volume",
    "two_annuli_volume_quadrature",
    "sphere_surface_measure",
    "ball_volume",
    "sphere_area",
    "annulus_volume",
    "sample_ball",
    "sample_shell",
    "sample_sphere_surface",
]

MIN_DIM = 2
MAX_DIM = 5
COLLINEAR_REL_AREA = 1e-12


@dataclass(frozen=True)
class Sphere:
    """Sphere {x : |x - center| = radius} in R^n, n in {2,...,5}."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.ndim != 1 or not (MIN_DIM <= c.size <= MAX_DIM):
            raise DimensionError(f"center must be a vector in R^2..R^5, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("center coordinates must be finite")
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValidationError(f"radius must be positive and finite, got {self.radius}")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    @property
    def n(self) -> int:
        return self.center.size


@dataclass(frozen=True)
class Annulus:
    """Closed delta-neighborhood of a sphere; thickness delta in (0, 1/2)."""

    sphere: Sphere
    delta: float

    def __post_init__(self):
        if not (0 < self.delta < 0.5):
            raise ValidationError(f"delta must lie in (0, 1/2), got {self.delta}")

    @property
    def n(self) -> int:
        return self.sphere.n

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Vectorized membership test; points has shape (..., n)."""
        pts = np.asarray(points, dtype=float)
        dist = np.sqrt(((pts - self.sphere.center) ** 2).sum(axis=-1))
        return np.abs(dist - self.sphere.radius) <= self.delta

    def volume(self) -> float:
        return annulus_volume(self.n, self.sphere.radius, self.delta)


@dataclass(frozen=True)
class PairGeometry:
    d: float
    Delta: float


@dataclass(frozen=True)
class TripleGeometry:
    M: float
    m: float
    R: float  # circumradius of the centers; math.inf when collinear


@dataclass(frozen=True)
class TripleBound:
    """Result of the three-annulus bound: either provably empty or a value
    with the case ('transverse' or 'near_one') that produced it."""

    value: float
    case: str | None
    empty: bool


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo estimate with its standard error.

    stderr is volume * sqrt(p*(1-p)/samples) for hit-fraction estimators;
    reproducible bit-for-bit from (seed, samples) at any worker count.
    """

    value: float
    stderr: float
    samples: int
    seed: int


def ball_volume(n: int, r: float = 1.0) -> float:
    """Volume of the n-ball of radius r."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * r**n


def sphere_area(n: int, r: float = 1.0) -> float:
    """Surface measure of the sphere S^{n-1} of radius r in R^n.

    n=1 gives 2 (the 0-sphere is two points with counting measure).
    """
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2) * r ** (n - 1)


def annulus_volume(n: int, r: float, delta: float) -> float:
    """Exact volume of the delta-annulus of a radius-r sphere in R^n."""
    lo = max(r - delta, 0.0)
    return ball_volume(n) * ((r + delta) ** n - lo**n)


def pair_quantities(s1: Sphere, s2: Sphere) -> PairGeometry:
    if s1.n != s2.n:
        raise DimensionError("spheres live in different dimensions")
    cc = float(np.linalg.norm(s1.center - s2.center))
    rr = abs(s1.radius - s2.radius)
    d = cc + rr
    Delta = abs(cc - rr) * abs(s1.radius + s2.radius - cc)
    return PairGeometry(d=d, Delta=Delta)


def _kahan_area(x: float, y: float, z: float) -> float:
    # numerically stable triangle area from side lengths (sorted a >= b >= c)
    a, b, c = sorted((x, y, z), reverse=True)
    t = max(c - (a - b), 0.0)
    return 0.25 * math.sqrt(max((a + (b + c)) * t * (c + (a - b)) * (a + (b - c)), 0.0))


def triple_quantities(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> TripleGeometry:
    """M, m, and circumradius R for three distinct points.

    R is reported as infinity when the triangle is degenerate relative to its
    diameter (area <= 1e-12 * M^2).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    ab = float(np.linalg.norm(a - b))
    bc = float(np.linalg.norm(b - c))
    ca = float(np.linalg.norm(c - a))
    M = max(ab, bc, ca)
    m = min(ab, bc, ca)
    if m == 0.0:
        raise ValidationError("triple_quantities requires three distinct points")
    area = _kahan_area(ab, bc, ca)
    if area <= COLLINEAR_REL_AREA * M * M:
        R = math.inf
    else:
        R = ab * bc * ca / (4.0 * area)
    return TripleGeometry(M=M, m=m, R=R)


def two_annuli_bound(s1: Sphere, s2: Sphere, delta: float, n: int | None = None) -> float:
    """Upper-bound formula (up to constants) for |S1^delta cap S2^delta|.

        delta^2/(d+delta) * ((Delta+delta)/(d+delta))^((n-3)/2)

    The exponent makes this delta^2/(d+delta) in n=3, the tangency-sensitive
    delta^2/sqrt((d+delta)(Delta+delta)) in n=2, and a bounded multiple of
    delta^2/(d+delta) in higher dimensions.  Requires radii in [1/2, 2].
    """
    if n is None:
        n = s1.n
    if n != s1.n or n != s2.n:
        raise DimensionError("dimension mismatch in two_annuli_bound")
    for s in (s1, s2):
        if not (0.5 <= s.radius <= 2.0):
            raise PreconditionError(f"two_annuli_bound requires radii in [1/2, 2], got {s.radius}")
    if not (0 < delta < 0.5):
        raise ValidationError(f"delta must lie in (0, 1/2), got {delta}")
    pg = pair_quantities(s1, s2)
    base = delta**2 / (pg.d + delta)
    ratio = (pg.Delta + delta) / (pg.d + delta)
    return base * ratio ** ((n - 3) / 2.0)


def transverse_bound_value(M: float, m: float, delta: float) -> float:
    """Raw formula of the transverse case: delta^3 / (M^2 m)."""
    return delta**3 / (M**2 * m)


def near_one_bound_value(M: float, m: float, delta: float) -> float:
    """Raw formula of the near-one case: delta^(5/2) / (M^(3/2) m^(1/2))."""
    return delta**2.5 / (M**1.5 * m**0.5)


def three_annuli_bound(
    s1: Sphere,
    s2: Sphere,
    s3: Sphere,
    delta: float,
    constants: Constants = DEFAULTS,
) -> TripleBound:
    """Volume bound (up to constants) for a triple of unit-sphere annuli.

    Preconditions: unit radii; c1*sqrt(delta) <= m <= M <= c2 with the
    calibration constants supplied.  Cases:
      * circumradius R >= 2: the intersection is empty;
      * R <= 1/2, or n >= 4: 'transverse', delta^3/(M^2 m);
      * otherwise: 'near_one', delta^(5/2)/(M^(3/2) m^(1/2)).
    When both formulas apply (n >= 4 with 1/2 < R < 2) the smaller one is
    returned together with its case label.
    """
    n = s1.n
    if s2.n != n or s3.n != n:
        raise DimensionError("dimension mismatch in three_annuli_bound")
    if n < 3:
        raise DimensionError("three_annuli_bound requires n >= 3")
    for s in (s1, s2, s3):
        if abs(s.radius - 1.0) > 1e-12:
            raise PreconditionError("three_annuli_bound requires unit radii")
    tg = triple_quantities(s1.center, s2.center, s3.center)
    lo = constants.c1 * math.sqrt(delta)
    if tg.m < lo or tg.M > constants.c2:
        raise PreconditionError(
            f"center distances out of band: need {lo:.3g} <= m <= M <= {constants.c2}, "
            f"got m={tg.m:.3g}, M={tg.M:.3g}"
        )
    if tg.R >= 2.0:
        return TripleBound(value=0.0, case=None, empty=True)
    transverse = transverse_bound_value(tg.M, tg.m, delta)
    near_one = near_one_bound_value(tg.M, tg.m, delta)
    if tg.R <= 0.5:
        return TripleBound(value=transverse, case="transverse", empty=False)
    if n >= 4:
        # both cases apply; keep the smaller bound
        if transverse <= near_one:
            return TripleBound(value=transverse, case="transverse", empty=False)
        return TripleBound(value=near_one, case="near_one", empty=False)
    return TripleBound(value=near_one, case="near_one", empty=False)


# ---------------------------------------------------------------------------
# samplers


def sample_ball(rng: np.random.Generator, center: np.ndarray, radius: float, size: int) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    n = center.size
    dirs = rng.standard_normal((size, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * rng.random(size) ** (1.0 / n)
    return center + dirs * radii[:, None]


def sample_sphere_surface(rng: np.random.Generator, center: np.ndarray, radius: float, size: int) -> np.ndarray:
    """Uniform points on the sphere via normalized Gaussians."""
    center = np.asarray(center, dtype=float)
    n = center.size
    dirs = rng.standard_normal((size, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return center + radius * dirs


def sample_shell(rng: np.random.Generator, center: np.ndarray, radius: float, delta: float, size: int) -> np.ndarray:
    """Uniform (w.r.t. Lebesgue measure) points in the delta-annulus.

    The radial coordinate is drawn by inverse CDF of rho^{n-1}, so no
    acceptance step is needed.
    """
    center = np.asarray(center, dtype=float)
    n = center.size
    dirs = rng.standard_normal((size, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lo = max(radius - delta, 0.0) ** n
    hi = (radius + delta) ** n
    radii = (lo + rng.random(size) * (hi - lo)) ** (1.0 / n)
    return center + dirs * radii[:, None]


# ---------------------------------------------------------------------------
# Monte Carlo estimators


def _hit_fraction_estimate(total_hits: int, samples: int, scale: float, seed: int) -> MCEstimate:
    p = total_hits / samples
    stderr = scale * math.sqrt(p * (1.0 - p) / samples)
    return MCEstimate(value=scale * p, stderr=stderr, samples=samples, seed=seed)


def mc_volume(
    member,
    lo: np.ndarray,
    hi: np.ndarray,
    samples: int,
    seed: int,
    threads: int = 1,
) -> MCEstimate:
    """Volume of {x in box : member(x)} by uniform box sampling.

    member maps an (k, n) array to a boolean array.  Results are identical
    for any thread count: chunk j always consumes stream(seed, 'mcvol', j)
    and partial sums are reduced in chunk order.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ValidationError("box must satisfy lo < hi componentwise")
    box_vol = float(np.prod(hi - lo))

    def work(idx: int, size: int) -> int:
        rng = stream(seed, "mcvol", idx)
        pts = lo + rng.random((size, lo.size)) * (hi - lo)
        return int(np.count_nonzero(member(pts)))

    hits = sum(map_chunks(work, samples, threads))
    return _hit_fraction_estimate(hits, samples, box_vol, seed)


def annuli_intersection_volume(
    annuli: list[Annulus],
    samples: int,
    seed: int,
    threads: int = 1,
) -> MCEstimate:
    """Volume of the intersection of annuli, importance-restricted to the
    first one: sample its shell uniformly (exact radial law) and test the
    rest.  Far more efficient than box sampling when delta is small.
    """
    if not annuli:
        raise ValidationError("need at least one annulus")
    first, rest = annuli[0], annuli[1:]
    shell_vol = first.volume()
    c = first.sphere.center

    def work(idx: int, size: int) -> int:
        rng = stream(seed, "annvol", idx)
        pts = sample_shell(rng, c, first.sphere.radius, first.delta, size)
        keep = np.ones(size, dtype=bool)
        for ann in rest:
            keep &= ann.contains(pts)
        return int(np.count_nonzero(keep))

    hits = sum(map_chunks(work, samples, threads))
    return _hit_fraction_estimate(hits, samples, shell_vol, seed)


def sphere_surface_measure(
    member,
    sphere: Sphere,
    samples: int,
    seed: int,
    threads: int = 1,
) -> MCEstimate:
    """Surface measure of {x on sphere : member(x)} by uniform sampling."""
    area = sphere_area(sphere.n, sphere.radius)

    def work(idx: int, size: int) -> int:
        rng = stream(seed, "surf", idx)
        pts = sample_sphere_surface(rng, sphere.center, sphere.radius, size)
        return int(np.count_nonzero(member(pts)))

    hits = sum(map_chunks(work, samples, threads))
    return _hit_fraction_estimate(hits, samples, area, seed)


def two_annuli_volume_quadrature(s1: Sphere, s2: Sphere, delta: float, resolution: float = 1e-3) -> float:
    """Deterministic quadrature for |S1^delta cap S2^delta|.

    Both annuli are rotationally symmetric about the line through the
    centers, so the volume reduces to a 2D integral over (axial, radial)
    coordinates weighted by the sphere-area factor of the transverse
    directions.  Midpoint rule at the given grid resolution; used as an
    independent cross-check of the Monte Carlo estimators.
    """
    n = s1.n
    if s2.n != n:
        raise DimensionError("dimension mismatch")
    axis = s2.center - s1.center
    dc = float(np.linalg.norm(axis))
    r1, r2 = s1.radius, s2.radius
    if dc < 1e-14:
        lo = max(r1 - delta, r2 - delta, 0.0)
        hi = min(r1 + delta, r2 + delta)
        if hi <= lo:
            return 0.0
        return ball_volume(n) * (hi**n - lo**n)
    z_lo = max(-(r1 + delta), dc - r2 - delta)
    z_hi = min(r1 + delta, dc + r2 + delta)
    if z_hi <= z_lo:
        return 0.0
    u_hi = min(r1, r2) + delta
    h = resolution
    z = np.arange(z_lo + h / 2, z_hi, h)
    u = np.arange(h / 2, u_hi, h)
    zz, uu = np.meshgrid(z, u, indexing="ij")
    rho1 = np.sqrt(zz**2 + uu**2)
    rho2 = np.sqrt((zz - dc) ** 2 + uu**2)
    inside = (np.abs(rho1 - r1) <= delta) & (np.abs(rho2 - r2) <= delta)
    # transverse directions span an (n-2)-sphere of radius u
    weight = sphere_area(n - 1, 1.0) * uu ** (n - 2)
    return float((inside * weight).sum() * h * h)
