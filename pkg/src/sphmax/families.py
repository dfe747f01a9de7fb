"""Delta-separated sphere families and their intersection statistics.

A family couples three aligned arrays: anchors (a globally delta-separated
point set), sphere centers, and radii.  Several anchors may share one
sphere; the intersection sums only see the distinct spheres together with
their anchor multiplicities, which keeps the pair/triple/quadruple sums
exact at desk scale instead of subsampling an enormous anchor-tuple space.

Three deterministic constructors produce the saturating configurations for
the pairwise, triple, and quadruple sums: a radially projected shell
cluster in the plane, spheres centered on a short arc of a unit circle in
R^3 (all passing near a common point), and unit spheres in R^4 centered on
the circle of radius 1/sqrt(2) that share a whole orthogonal circle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .config import DEFAULTS, Constants
from .errors import DimensionError, PreconditionError, ValidationError
from .fractal import TranslateSet, SphereDomain, _axis_progression, build_translate_set, delta_net
from .geometry import (
    Annulus,
    MCEstimate,
    Sphere,
    annuli_intersection_volume,
    annulus_volume,
    three_annuli_bound,
)
from .rng import map_chunks, stream, subsample_indices

__all__ = [
    "SphereFamily",
    "WeightVector",
    "KsphResult",
    "generate_family",
    "cluster_family",
    "circle_family",
    "lenz_family",
    "central_anchor",
    "count_in_balls",
    "weighted_count_sum",
    "ksph_sum",
    "nonconcentration_constant",
    "dual_sum_norm",
    "write_family",
    "read_family",
]

SEPARATION_TOL = 1e-9
ANCHOR_REL_TOL = 1e-12


# ---------------------------------------------------------------------------
# spatial hash over (center, radius) points


class SpatialHash:
    """Uniform-grid hash over points in R^d with cell size delta.

    Ball counts scan the ceil(rho/delta)-cube of cells around the query,
    or fall back to iterating the occupied cells when those are fewer.
    """

    def __init__(self, points: np.ndarray, cell: float):
        self.points = np.asarray(points, dtype=float)
        self.cell = float(cell)
        self.dim = self.points.shape[1]
        keys = np.floor(self.points / self.cell).astype(np.int64)
        buckets: dict[tuple, list[int]] = {}
        for i, key in enumerate(map(tuple, keys)):
            buckets.setdefault(key, []).append(i)
        self.buckets = {k: np.array(v) for k, v in buckets.items()}

    def count_in_ball(self, center: np.ndarray, rho: float) -> int:
        center = np.asarray(center, dtype=float)
        reach = int(math.ceil(rho / self.cell))
        base = np.floor(center / self.cell).astype(np.int64)
        if (2 * reach + 1) ** self.dim > len(self.buckets):
            total = 0
            r2 = rho * rho
            half = self.cell * math.sqrt(self.dim) / 2.0
            for key, idx in self.buckets.items():
                mid = (np.array(key) + 0.5) * self.cell
                gap = np.linalg.norm(mid - center) - half
                if gap > rho:
                    continue
                d2 = ((self.points[idx] - center) ** 2).sum(axis=1)
                total += int(np.count_nonzero(d2 <= r2))
            return total
        total = 0
        r2 = rho * rho
        rng = range(-reach, reach + 1)
        for off in np.stack(np.meshgrid(*([list(rng)] * self.dim), indexing="ij"), axis=-1).reshape(-1, self.dim):
            idx = self.buckets.get(tuple(base + off))
            if idx is None:
                continue
            d2 = ((self.points[idx] - center) ** 2).sum(axis=1)
            total += int(np.count_nonzero(d2 <= r2))
        return total


# ---------------------------------------------------------------------------
# family type


@dataclass(frozen=True, eq=False)
class SphereFamily:
    """Spheres through a globally delta-separated anchor set.

    anchors[i] lies on the sphere (centers[i], radii[i]); with a translate
    set the on-sphere condition is replaced by (anchor - center)/radius
    lying in the set.  Radii stay within [1/2, 2].
    """

    n: int
    delta: float
    centers: np.ndarray
    radii: np.ndarray
    anchors: np.ndarray
    mode: str
    seed: int
    translate: TranslateSet | None = None

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        radii = np.asarray(self.radii, dtype=float)
        anchors = np.asarray(self.anchors, dtype=float)
        if not (0 < self.delta < 0.5):
            raise ValidationError(f"delta must lie in (0, 1/2), got {self.delta}")
        if centers.ndim != 2 or centers.shape[1] != self.n:
            raise DimensionError("centers must have shape (N, n)")
        if anchors.shape != centers.shape or radii.shape != (centers.shape[0],):
            raise DimensionError("anchors and radii must align with centers")
        if centers.shape[0] == 0:
            raise ValidationError("family must contain at least one sphere")
        if np.any(radii < 0.5 - 1e-12) or np.any(radii > 2.0 + 1e-12):
            raise ValidationError("radii must lie in [1/2, 2]")
        for arr in (centers, radii, anchors):
            arr.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "anchors", anchors)
        self._check_anchor_relation()
        self._check_separation()

    def _check_anchor_relation(self):
        offset = self.anchors - self.centers
        if self.translate is None:
            dist = np.linalg.norm(offset, axis=1)
            rel = np.abs(dist - self.radii) / np.maximum(self.radii, 1.0)
            if np.any(rel > ANCHOR_REL_TOL):
                raise ValidationError("every sphere must pass through its anchor")
        else:
            gap = self.translate.distance(offset / self.radii[:, None])
            if np.any(gap > SEPARATION_TOL):
                raise ValidationError("anchor offsets must lie in the scaled translate set")

    def _check_separation(self):
        tree = cKDTree(self.anchors)
        pairs = tree.query_pairs(self.delta * (1.0 - SEPARATION_TOL))
        if pairs:
            raise ValidationError(f"anchors are not delta-separated ({len(pairs)} close pairs)")

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    def points(self) -> np.ndarray:
        """(center, radius) points in R^(n+1), the objects the counting
        estimates are about."""
        return np.concatenate([self.centers, self.radii[:, None]], axis=1)

    @cached_property
    def index(self) -> SpatialHash:
        return SpatialHash(self.points(), cell=self.delta)

    def unique_spheres(self):
        """Distinct (center, radius) rows with anchor multiplicities."""
        seen: dict[bytes, int] = {}
        order: list[int] = []
        counts: list[int] = []
        pts = self.points()
        for i in range(self.size):
            key = pts[i].tobytes()
            at = seen.get(key)
            if at is None:
                seen[key] = len(order)
                order.append(i)
                counts.append(1)
            else:
                counts[at] += 1
        rows = np.array(order)
        return self.centers[rows], self.radii[rows], np.array(counts, dtype=float)


def central_anchor(fam: SphereFamily) -> int:
    """Index of the anchor whose sphere center is closest to the center-set
    centroid; first index on ties."""
    mid = fam.centers.mean(axis=0)
    d = np.linalg.norm(fam.centers - mid, axis=1)
    return int(np.argmin(d))


# ---------------------------------------------------------------------------
# constructors

_SPACING = 1.15  # ring-grid spacing in units of delta; keeps >= delta margins


def _ring_points_2d(radius: float, spacing: float, phase: float) -> np.ndarray:
    count = max(int(math.floor(2 * math.pi * radius / spacing)), 1)
    ang = phase + 2 * math.pi * np.arange(count) / count
    return np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)


def _cap_grid_s2(half_angle: float, spacing_angle: float) -> np.ndarray:
    """Deterministic net of a polar cap on S^2: latitude rings at the given
    angular spacing, each ring filled at matching arc spacing."""
    pts = [np.array([0.0, 0.0, 1.0])]
    k = 1
    while k * spacing_angle <= half_angle:
        phi = k * spacing_angle
        r = math.sin(phi)
        count = max(int(math.floor(2 * math.pi * r / spacing_angle)), 1)
        ang = (k % 2) * math.pi / count + 2 * math.pi * np.arange(count) / count
        ring = np.stack(
            [r * np.cos(ang), r * np.sin(ang), np.full(count, math.cos(phi))], axis=1
        )
        pts.append(ring)
        k += 1
    return np.concatenate([p.reshape(-1, 3) for p in pts], axis=0)


def _cap_grid_s3(half_angle: float, spacing_angle: float) -> np.ndarray:
    """Polar-cap net on S^3: latitude 2-spheres of radius sin(phi), each
    carrying an S^2 cap-grid over the full sphere at rescaled spacing."""
    pts = [np.array([0.0, 0.0, 0.0, 1.0])]
    k = 1
    while k * spacing_angle <= half_angle:
        phi = k * spacing_angle
        r = math.sin(phi)
        shell = _cap_grid_s2(math.pi, spacing_angle / r)
        layer = np.concatenate([r * shell, np.full((shell.shape[0], 1), math.cos(phi))], axis=1)
        pts.append(layer)
        k += 1
    return np.concatenate([p.reshape(-1, 4) for p in pts], axis=0)


def _householder_to(axis: np.ndarray) -> np.ndarray:
    """Orthogonal map sending e_last to the given unit vector."""
    d = axis.size
    e = np.zeros(d)
    e[-1] = 1.0
    v = e - axis
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        return np.eye(d)
    v = v / norm
    return np.eye(d) - 2.0 * np.outer(v, v)


def _keep_separated_blocks(blocks: list[np.ndarray], delta: float) -> list[np.ndarray]:
    """Cross-block delta-filter: each block is internally separated already,
    so one nearest-distance query against the kept set per block suffices."""
    kept: list[np.ndarray] = []
    masks: list[np.ndarray] = []
    for block in blocks:
        if kept:
            tree = cKDTree(np.concatenate(kept, axis=0))
            d, _ = tree.query(block, k=1)
            mask = d >= delta
        else:
            mask = np.ones(block.shape[0], dtype=bool)
        masks.append(mask)
        if mask.any():
            kept.append(block[mask])
    return masks


def generate_family(
    n: int,
    delta: float,
    t: TranslateSet | str = "sphere",
    mode: str = "unit_radius",
    seed: int = 0,
) -> SphereFamily:
    """Family anchored on a maximal delta-net of the unit cube.

    Each anchor gets one translate u from a delta-net of t (the unit sphere
    by default) and a radius: 1 in unit_radius mode, otherwise a seeded
    draw from the delta-grid of [1, 2].  Centers are anchor + radius * u.
    """
    if mode not in ("unit_radius", "varying_radius"):
        raise ValidationError(f"unknown mode {mode!r}")
    if not (0 < delta < 0.5):
        raise ValidationError(f"delta must lie in (0, 1/2), got {delta}")
    domain: TranslateSet | SphereDomain
    translate: TranslateSet | None
    if isinstance(t, TranslateSet):
        if t.ambient_dim != n:
            raise DimensionError("translate set dimension mismatch")
        domain, translate = t, t
    elif t == "sphere":
        domain, translate = SphereDomain(n), None
    else:
        raise ValidationError(f"t must be a translate set or 'sphere', got {t!r}")

    from .fractal import BoxDomain

    anchors = delta_net(BoxDomain(lo=[0.0] * n, hi=[1.0] * n), delta)
    count = anchors.shape[0]
    rng = stream(seed, "family", n)
    unet = delta_net(domain, delta, seed=seed)
    us = unet[rng.integers(0, unet.shape[0], size=count)]
    if mode == "unit_radius":
        radii = np.ones(count)
    else:
        grid = _axis_progression(1.0, 2.0, delta)
        radii = grid[rng.integers(0, grid.size, size=count)]
    centers = anchors + radii[:, None] * us
    return SphereFamily(
        n=n,
        delta=delta,
        centers=centers,
        radii=radii,
        anchors=anchors,
        mode=mode,
        seed=seed,
        translate=translate,
    )


def cluster_family(
    delta: float, seed: int = 0, constants: Constants = DEFAULTS
) -> SphereFamily:
    """Planar family saturating the pairwise sum: anchors tile a thin shell
    around the unit circle, every anchor's sphere is the unit circle pushed
    radially through it, so all centers collapse into a small ball around
    the origin with the 1/|center| radial density that feeds every dyadic
    separation scale equally."""
    half = constants.c_diam / 4.0
    spacing = _SPACING * delta
    layers = int(math.floor(2 * half / spacing)) + 1
    offsets = (np.arange(layers) - (layers - 1) / 2.0) * spacing
    blocks = []
    for j, off in enumerate(offsets):
        blocks.append(_ring_points_2d(1.0 + off, spacing, phase=j * 0.5 * spacing))
    anchors = np.concatenate(blocks, axis=0)
    norms = np.linalg.norm(anchors, axis=1)
    centers = anchors - anchors / norms[:, None]
    return SphereFamily(
        n=2,
        delta=delta,
        centers=centers,
        radii=np.ones(anchors.shape[0]),
        anchors=anchors,
        mode="cluster",
        seed=seed,
    )


def circle_family(
    delta: float, seed: int = 0, constants: Constants = DEFAULTS, cap_angle: float = 0.35
) -> SphereFamily:
    """Unit spheres in R^3 centered on a short arc of the unit circle, the
    configuration whose triple intersections are all tangential.

    Every sphere passes through the origin; anchors are cap-grids around
    each sphere's origin-facing pole, filtered to global delta-separation
    sphere by sphere from the middle of the arc outward.
    """
    arc = 0.9 * min(constants.c_diam, constants.c2)
    step = delta
    count = int(math.floor(arc / step)) + 1
    order = np.argsort(np.abs(np.arange(count) - (count - 1) / 2.0), kind="stable")
    thetas = (np.arange(count) - (count - 1) / 2.0) * step
    cap = _cap_grid_s2(cap_angle, _SPACING * delta)

    blocks = []
    ids = []
    for j in order:
        c = np.array([math.cos(thetas[j]), math.sin(thetas[j]), 0.0])
        rot = _householder_to(-c)
        blocks.append(c + cap @ rot.T)
        ids.append(np.full(cap.shape[0], j))
    masks = _keep_separated_blocks(blocks, delta)
    anchors = np.concatenate([b[m] for b, m in zip(blocks, masks)], axis=0)
    which = np.concatenate([i[m] for i, m in zip(ids, masks)])
    centers = np.stack([np.cos(thetas[which]), np.sin(thetas[which]), np.zeros(which.size)], axis=1)
    return SphereFamily(
        n=3,
        delta=delta,
        centers=centers,
        radii=np.ones(anchors.shape[0]),
        anchors=anchors,
        mode="circle",
        seed=seed,
    )


def lenz_family(
    delta: float, seed: int = 0, constants: Constants = DEFAULTS, cap_angle: float = 0.25
) -> SphereFamily:
    """Unit spheres in R^4 centered on a short arc of (1/sqrt 2) S^1 x {0}^2.

    All of them contain the whole orthogonal circle {0}^2 x (1/sqrt 2) S^1,
    so every quadruple intersection keeps a full tube around it.  Anchors
    are S^3 cap-grids around the direction of one common point.
    """
    radius = 1.0 / math.sqrt(2.0)
    arc = 0.9 * min(constants.c_diam, constants.c2)
    step_angle = math.sqrt(2.0) * delta
    count = int(math.floor((arc / radius) / step_angle)) + 1
    order = np.argsort(np.abs(np.arange(count) - (count - 1) / 2.0), kind="stable")
    thetas = (np.arange(count) - (count - 1) / 2.0) * step_angle
    q0 = np.array([0.0, 0.0, radius, 0.0])
    cap = _cap_grid_s3(cap_angle, _SPACING * delta)

    blocks = []
    ids = []
    for j in order:
        c = np.array([radius * math.cos(thetas[j]), radius * math.sin(thetas[j]), 0.0, 0.0])
        axis = q0 - c  # unit by construction
        rot = _householder_to(axis / np.linalg.norm(axis))
        blocks.append(c + cap @ rot.T)
        ids.append(np.full(cap.shape[0], j))
    masks = _keep_separated_blocks(blocks, delta)
    anchors = np.concatenate([b[m] for b, m in zip(blocks, masks)], axis=0)
    which = np.concatenate([i[m] for i, m in zip(ids, masks)])
    centers = np.stack(
        [
            radius * np.cos(thetas[which]),
            radius * np.sin(thetas[which]),
            np.zeros(which.size),
            np.zeros(which.size),
        ],
        axis=1,
    )
    return SphereFamily(
        n=4,
        delta=delta,
        centers=centers,
        radii=np.ones(anchors.shape[0]),
        anchors=anchors,
        mode="lenz",
        seed=seed,
    )


# ---------------------------------------------------------------------------
# counting estimates


def count_in_balls(
    fam: SphereFamily,
    s: float,
    rho_ladder: list,
    ball_samples: int,
    seed: int,
) -> float:
    """Worst sampled ratio of ball counts against delta^(-n) rho^(n-s).

    Balls live in R^(n+1) around (center, radius) points; half the sampled
    ball centers sit on family points (the worst case), half are uniform
    over the family's bounding box.
    """
    pts = fam.points()
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    rng = stream(seed, "countballs")
    worst = 0.0
    for rho in rho_ladder:
        rho = float(rho)
        if rho < fam.delta * (1.0 - 1e-12):
            raise PreconditionError(f"ball radius {rho} below delta={fam.delta}")
        bound = fam.delta ** (-fam.n) * rho ** (fam.n - s)
        at_points = pts[rng.integers(0, pts.shape[0], size=ball_samples // 2)]
        uniform = lo + rng.random((ball_samples - ball_samples // 2, pts.shape[1])) * (hi - lo)
        for center in np.concatenate([at_points, uniform], axis=0):
            ratio = fam.index.count_in_ball(center, rho) / bound
            if ratio > worst:
                worst = ratio
    return worst


def weighted_count_sum(
    fam: SphereFamily, a, alpha: float, P: float, Q: float
) -> tuple[float, float, float]:
    """Distance-weighted center count around a, against its closed form.

    lhs sums (|a - center| + delta)^alpha over centers at distance [P, Q];
    rhs is delta^(-n) times Q^(alpha+1), log(Q/(P+delta)), or
    (P+delta)^(alpha+1) according to the sign of alpha + 1.  The log case
    clamps its factor below at log 2 so degenerate windows stay finite.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (fam.n,):
        raise DimensionError(f"a must be a point in R^{fam.n}")
    if not (0 <= P <= Q) or not math.isfinite(Q):
        raise ValidationError("need 0 <= P <= Q < inf")
    d = np.linalg.norm(fam.centers - a, axis=1)
    sel = (d >= P) & (d <= Q)
    lhs = float(math.fsum((d[sel] + fam.delta) ** alpha))
    scale = fam.delta ** (-fam.n)
    if alpha > -1.0 + 1e-12:
        rhs = scale * Q ** (alpha + 1.0)
    elif alpha < -1.0 - 1e-12:
        rhs = scale * (P + fam.delta) ** (alpha + 1.0)
    else:
        rhs = scale * math.log(max(Q / (P + fam.delta), 2.0))
    return lhs, rhs, lhs / rhs


def nonconcentration_constant(
    fam: SphereFamily, rho_ladder: list, ball_samples: int, seed: int
) -> float:
    """Smallest A with #(centers in B_rho) <= A * rho over the sampled balls;
    the linear-growth constant of the dual-norm estimates."""
    pts = fam.points()
    rng = stream(seed, "noncon")
    A = 0.0
    for rho in rho_ladder:
        rho = float(rho)
        if rho < fam.delta * (1.0 - 1e-12):
            raise PreconditionError(f"ball radius {rho} below delta={fam.delta}")
        centers = pts[rng.integers(0, pts.shape[0], size=ball_samples)]
        for center in centers:
            A = max(A, fam.index.count_in_ball(center, rho) / rho)
    return A


# ---------------------------------------------------------------------------
# k-fold intersection sums


def _pair_bound_vec(c0, r0, cs, rs, delta: float, n: int) -> np.ndarray:
    """Vectorized two-annulus volume bound; matches the scalar formula."""
    c0 = np.asarray(c0, dtype=float)
    cs = np.asarray(cs, dtype=float)
    rs = np.asarray(rs, dtype=float)
    cd = np.linalg.norm(cs - c0, axis=-1)
    rd = np.abs(rs - r0)
    d = cd + rd
    big = np.abs(rs + r0 - cd)
    Delta = np.abs(cd - rd) * big
    base = delta**2 / (d + delta)
    return base * ((Delta + delta) / (d + delta)) ** ((n - 3) / 2.0)


def _vec_circumradius(dab, dac, dbc):
    """Circumradius from side lengths, inf where numerically collinear."""
    sides = np.sort(np.stack([dab, dac, dbc], axis=0), axis=0)
    c, b, a = sides[0], sides[1], sides[2]
    term = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    area = 0.25 * np.sqrt(np.clip(term, 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.where(area > 1e-12 * a * a, a * b * c / (4.0 * area), np.inf)
    return R


def _triple_surrogate_vec(a, b, c, delta: float, n: int, constants: Constants) -> np.ndarray:
    """Upper bound (with calibration constants) for unit-sphere triple
    intersection volumes, vectorized over tuples.

    Coinciding centers collapse the tuple to a pair or a single annulus.
    Distinct tuples always carry the best pairwise bound; inside the
    [c1 sqrt(delta), c2] separation band the three-annulus dispatch
    (empty / transverse / near-one) can only improve it.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    a, b, c = np.broadcast_arrays(a, b, c)
    dab = np.linalg.norm(a - b, axis=-1)
    dac = np.linalg.norm(a - c, axis=-1)
    dbc = np.linalg.norm(b - c, axis=-1)
    pair_c = constants.pair_const[n]

    def pair(d):
        Delta = d * np.abs(2.0 - d)
        return delta**2 / (d + delta) * ((Delta + delta) / (d + delta)) ** ((n - 3) / 2.0)

    out = np.empty(dab.shape)
    ab = dab < 1e-12
    ac = dac < 1e-12
    bc = dbc < 1e-12
    all_same = ab & ac
    some_same = (ab | ac | bc) & ~all_same
    out[all_same] = pair_c * delta  # concentric bound; the exact ring is ~4 pi delta
    # one coincident pair leaves a genuine two-sphere intersection
    two_dist = np.where(ab, dac, np.where(ac, dab, dab))
    out[some_same] = pair_c * pair(two_dist[some_same])

    distinct = ~(all_same | some_same)
    if np.any(distinct):
        d1, d2, d3 = dab[distinct], dac[distinct], dbc[distinct]
        best = pair_c * np.minimum(np.minimum(pair(d1), pair(d2)), pair(d3))
        m = np.minimum(np.minimum(d1, d2), d3)
        M = np.maximum(np.maximum(d1, d2), d3)
        R = _vec_circumradius(d1, d2, d3)
        empty = R >= 2.0
        best = np.where(empty, 0.0, best)
        band = (~empty) & (m >= constants.c1 * math.sqrt(delta)) & (M <= constants.c2)
        if np.any(band):
            trans = delta**3 / (M**2 * m)
            near = delta**2.5 / (M**1.5 * np.sqrt(m))
            if n >= 4:
                tri = np.where(R <= 0.5, trans, np.minimum(trans, near))
            else:
                tri = np.where(R <= 0.5, trans, near)
            best = np.where(band, np.minimum(best, constants.triple_const * tri), best)
        out[distinct] = best
    return out


@dataclass(frozen=True)
class KsphResult:
    lhs: float
    rhs: float
    ratio: float
    k: int
    mode: str
    tuples: int
    subsampled: bool


def _mc_tuple_volume(spheres: list[Sphere], delta: float, samples: int, seed: int) -> float:
    uniq: list[Sphere] = []
    for s in spheres:
        if not any(np.linalg.norm(s.center - u.center) < 1e-12 and s.radius == u.radius for u in uniq):
            uniq.append(s)
    est = annuli_intersection_volume([Annulus(sphere=s, delta=delta) for s in uniq], samples, seed)
    return est.value


def ksph_sum(
    fam: SphereFamily,
    i: int,
    k: int,
    vol_mode: str = "analytic_bound",
    constants: Constants = DEFAULTS,
    tuple_budget: int = 10**8,
    mc_samples: int = 2048,
    seed: int = 0,
) -> KsphResult:
    """Normalized sum of k-fold annulus intersection volumes against the
    pivot sphere i, compared to its expected size.

    lhs = delta^((k-1)n) * sum over (k-1)-tuples of anchors of the k-fold
    intersection volume; tuples collapse to distinct spheres weighted by
    anchor multiplicities, so the sum is exact whenever the distinct-tuple
    count fits the budget (uniform seeded subsampling with rescaling above
    it).  rhs = delta^2, delta^(5/2), delta^3 times log(1/delta) for
    k = 2, 3, 4.  Analytic mode uses the calibrated pair/triple bounds (a
    per-tuple upper bound); monte_carlo integrates the same tuples.
    """
    if k not in (2, 3, 4):
        raise ValidationError(f"k must be 2, 3, or 4, got {k}")
    if vol_mode not in ("analytic_bound", "monte_carlo"):
        raise ValidationError(f"unknown vol_mode {vol_mode!r}")
    if k >= 3 and fam.n < k - 1 + 1:
        raise DimensionError(f"k={k} sums need n >= {k}, got n={fam.n}")
    if not (0 <= i < fam.size):
        raise ValidationError("pivot index out of range")
    mid = fam.centers.mean(axis=0)
    spread = 2.0 * float(np.linalg.norm(fam.centers - mid, axis=1).max())
    if spread > constants.c_diam * (1.0 + 1e-9):
        raise PreconditionError(
            f"center spread {spread:.3g} exceeds the diameter cap {constants.c_diam}"
        )
    if k >= 3 and np.any(np.abs(fam.radii - 1.0) > 1e-12):
        raise PreconditionError(f"k={k} sums require unit radii")

    delta, n = fam.delta, fam.n
    x0, r0 = fam.centers[i], fam.radii[i]
    ucenters, uradii, mult = fam.unique_spheres()
    K = ucenters.shape[0]
    total_tuples = K ** (k - 1)
    rng = stream(seed, "ksph", k)
    picked = subsample_indices(rng, total_tuples, tuple_budget)
    subsampled = picked is not None

    if vol_mode == "analytic_bound":
        if k == 2:
            vals = constants.pair_const[n] * _pair_bound_vec(x0, r0, ucenters, uradii, delta, n)
            weights = mult
            if subsampled:
                vals, weights = vals[picked], weights[picked]
        elif k == 3:
            if subsampled:
                jb, jc = picked // K, picked % K
            else:
                jb, jc = np.divmod(np.arange(total_tuples), K)
            vals = _triple_surrogate_vec(x0, ucenters[jb], ucenters[jc], delta, n, constants)
            weights = mult[jb] * mult[jc]
        else:
            if subsampled:
                jb, jc = picked // (K * K), (picked // K) % K
                jd = picked % K
                sub = np.minimum(
                    _triple_surrogate_vec(x0, ucenters[jb], ucenters[jc], delta, n, constants),
                    _triple_surrogate_vec(x0, ucenters[jb], ucenters[jd], delta, n, constants),
                )
                sub = np.minimum(
                    sub,
                    _triple_surrogate_vec(x0, ucenters[jc], ucenters[jd], delta, n, constants),
                )
                sub = np.minimum(
                    sub,
                    _triple_surrogate_vec(
                        ucenters[jb], ucenters[jc], ucenters[jd], delta, n, constants
                    ),
                )
                vals = constants.quad_reduction_const * sub
                weights = mult[jb] * mult[jc] * mult[jd]
            else:
                chunks_v = []
                chunks_w = []
                for jb in range(K):
                    for jc in range(K):
                        sub = np.minimum(
                            _triple_surrogate_vec(
                                x0, ucenters[jb], ucenters[jc], delta, n, constants
                            ),
                            _triple_surrogate_vec(x0, ucenters[jb], ucenters, delta, n, constants),
                        )
                        sub = np.minimum(
                            sub,
                            _triple_surrogate_vec(x0, ucenters[jc], ucenters, delta, n, constants),
                        )
                        sub = np.minimum(
                            sub,
                            _triple_surrogate_vec(
                                ucenters[jb], ucenters[jc], ucenters, delta, n, constants
                            ),
                        )
                        chunks_v.append(constants.quad_reduction_const * sub)
                        chunks_w.append(mult[jb] * mult[jc] * mult)
                vals = np.concatenate(chunks_v)
                weights = np.concatenate(chunks_w)
        contrib = vals * weights
    else:
        if subsampled:
            flat = picked
        else:
            flat = np.arange(total_tuples)
        contribs = []
        for t_idx, fl in enumerate(flat):
            others = []
            rest = int(fl)
            for _ in range(k - 1):
                others.append(rest % K)
                rest //= K
            spheres = [Sphere(center=x0, radius=r0)] + [
                Sphere(center=ucenters[j], radius=uradii[j]) for j in others
            ]
            w = float(np.prod([mult[j] for j in others]))
            sub_seed = int(stream(seed, "ksphmc", k, t_idx).integers(2**62))
            contribs.append(w * _mc_tuple_volume(spheres, delta, mc_samples, sub_seed))
        contrib = np.asarray(contribs)

    scale = total_tuples / contrib.size if subsampled else 1.0
    lhs = delta ** ((k - 1) * n) * scale * float(math.fsum(contrib.tolist()))
    rhs = {2: delta**2, 3: delta**2.5, 4: delta**3}[k] * math.log(1.0 / delta)
    return KsphResult(
        lhs=lhs,
        rhs=rhs,
        ratio=lhs / rhs,
        k=k,
        mode=vol_mode,
        tuples=int(contrib.size),
        subsampled=subsampled,
    )


# ---------------------------------------------------------------------------
# dual-norm estimates


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative weights aligned to a family, in the dual exponent context
    q; the duality normalization is delta^n * sum a_i^(q') = 1."""

    a: np.ndarray
    q: float

    def __post_init__(self):
        arr = np.asarray(self.a, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("weights must form a nonempty vector")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValidationError("weights must be finite and nonnegative")
        if not (1.0 < self.q < math.inf):
            raise ValidationError(f"dual context requires 1 < q < inf, got {self.q}")
        arr.setflags(write=False)
        object.__setattr__(self, "a", arr)

    @property
    def q_dual(self) -> float:
        return self.q / (self.q - 1.0)

    def dual_power_sum(self, delta: float, n: int) -> float:
        return delta**n * float(math.fsum((self.a**self.q_dual).tolist()))

    def normalized(self, delta: float, n: int) -> "WeightVector":
        total = self.dual_power_sum(delta, n)
        if total <= 0:
            raise ValidationError("cannot normalize an all-zero weight vector")
        return WeightVector(a=self.a * total ** (-1.0 / self.q_dual), q=self.q)

    def normalization_defect(self, delta: float, n: int) -> float:
        return abs(self.dual_power_sum(delta, n) - 1.0)


def dual_sum_norm(
    fam: SphereFamily,
    w: WeightVector,
    p_prime: float,
    region: tuple,
    samples: int,
    seed: int,
    threads: int = 1,
) -> MCEstimate:
    """Monte Carlo L^(p') norm of sum_i a_i 1_{annulus_i} over the region.

    Membership counting groups spheres by exact radius and queries a KD
    tree per group (points within r+delta minus points within r-delta);
    with equal weights inside a group this is two counting queries, the
    inner boundary being Monte Carlo null.
    """
    if not (1.0 <= p_prime < math.inf):
        raise ValidationError(f"p_prime must lie in [1, inf), got {p_prime}")
    if w.a.shape != (fam.size,):
        raise ValidationError("weight vector must align with the family")
    lo = np.asarray(region[0], dtype=float)
    hi = np.asarray(region[1], dtype=float)
    if lo.shape != (fam.n,) or hi.shape != (fam.n,) or np.any(hi <= lo):
        raise ValidationError("region must be a bounded box in R^n")
    reach = fam.radii + fam.delta
    if np.any(fam.centers - reach[:, None] < lo) or np.any(fam.centers + reach[:, None] > hi):
        raise ValidationError("region must cover every annulus of the family")
    vol = float(np.prod(hi - lo))

    groups = []
    for r in np.unique(fam.radii):
        sel = np.flatnonzero(fam.radii == r)
        wsel = w.a[sel]
        uniform = float(wsel.max() - wsel.min()) <= 1e-15 if sel.size else True
        groups.append((float(r), cKDTree(fam.centers[sel]), wsel, uniform))

    def work(idx: int, size: int):
        rng = stream(seed, "dualnorm", idx)
        xs = lo + rng.random((size, fam.n)) * (hi - lo)
        F = np.zeros(size)
        for r, tree, wsel, uniform in groups:
            if uniform:
                outer = tree.query_ball_point(xs, r + fam.delta, return_length=True)
                inner = tree.query_ball_point(xs, r - fam.delta, return_length=True)
                F += wsel[0] * (np.asarray(outer) - np.asarray(inner))
            else:
                outer = tree.query_ball_point(xs, r + fam.delta)
                inner = tree.query_ball_point(xs, r - fam.delta)
                for row, (o, ii) in enumerate(zip(outer, inner)):
                    F[row] += float(wsel[o].sum() - wsel[ii].sum())
        g = F**p_prime
        return float(math.fsum(g.tolist())), float(math.fsum((g * g).tolist()))

    parts = map_chunks(work, samples, threads=threads)
    total = math.fsum(p[0] for p in parts)
    total_sq = math.fsum(p[1] for p in parts)
    mean_g = total / samples
    var_g = max(total_sq / samples - mean_g**2, 0.0)
    se_g = math.sqrt(var_g / samples)
    norm = (vol * mean_g) ** (1.0 / p_prime)
    stderr = norm * se_g / (p_prime * mean_g) if mean_g > 0 else 0.0
    return MCEstimate(value=norm, stderr=stderr, samples=samples, seed=seed)


# ---------------------------------------------------------------------------
# serialization


def write_family(fam: SphereFamily, path) -> None:
    lines = ["sphere-family 1"]
    if fam.translate is None:
        tfield = "none"
    else:
        depth = fam.translate.cantor.depth if fam.translate.cantor else 0
        tfield = f"s:{fam.translate.s!r}:depth:{depth}"
    lines.append(f"n={fam.n} delta={fam.delta!r} mode={fam.mode} seed={fam.seed} translate={tfield}")
    for i in range(fam.size):
        row = list(fam.centers[i]) + [fam.radii[i]] + list(fam.anchors[i])
        lines.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_family(path) -> SphereFamily:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "sphere-family 1":
        raise ValidationError("unrecognized family file header")
    fields = dict(part.split("=", 1) for part in lines[1].split())
    n = int(fields["n"])
    delta = float(fields["delta"])
    translate = None
    if fields["translate"] != "none":
        _, sval, _, dval = fields["translate"].split(":")
        translate = build_translate_set(n, float(sval), depth=int(dval))
    rows = np.array([[float(v) for v in ln.split()] for ln in lines[2:]])
    if rows.shape[1] != 2 * n + 1:
        raise ValidationError("malformed sphere line")
    return SphereFamily(
        n=n,
        delta=delta,
        centers=rows[:, :n],
        radii=rows[:, n],
        anchors=rows[:, n + 1 :],
        mode=fields["mode"],
        seed=int(fields["seed"]),
        translate=translate,
    )
