"""Discretized maximal operators over sphere and fractal translate families.

Five operator kinds share one evaluation scheme: a supremum over a net of
translates u (the unit sphere for NM/NS, a Cantor translate set for the
rest), optionally over dilation parameters t, of a normalized average of f
over a shifted sphere.  NM/NS/NT average over the delta-annulus of the unit
sphere (radial-offset sampling with the ratio^(n-1) Jacobian weight, so the
constant function averages to exactly 1); MT/ST average over the
zero-thickness surface measure.  NS dilates the fixed annulus, so the
effective thickness at dilation t is t*delta.

Determinism: all sampling derives from EvalConfig.seed only, never from x.
Evaluations at x and x+v with a correspondingly shifted indicator therefore
agree bit for bit, and enlarging the indicator can only increase values.
The supremum takes the first maximum in net order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, PreconditionError, ValidationError
from .fractal import BoxDomain, SphereDomain, TranslateSet, delta_net
from .geometry import MCEstimate
from .rng import chunk_sizes, stream

__all__ = [
    "OperatorSpec",
    "EvalConfig",
    "Witness",
    "make_operator",
    "eval_at",
    "eval_with_witness",
    "lp_ratio",
    "mollified_compare",
    "net_slack",
]

KINDS = ("NM", "NS", "NT", "MT", "ST")
SURFACE_KINDS = ("MT", "ST")
Y_CHUNK = 2048
X_CHUNK = 1024


@dataclass(frozen=True)
class OperatorSpec:
    """One of the five maximal operators.

    t_interval is the dilation window ((1,1) when there is none); ST also
    carries the dyadic levels l, each contributing the window 2^l*[1,2].
    """

    kind: str
    n: int
    delta: float
    T: SphereDomain | TranslateSet
    t_interval: tuple[float, float]
    levels: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown operator kind {self.kind!r}")
        if not (0 < self.delta < 0.5):
            raise ValidationError(f"delta must lie in (0, 1/2), got {self.delta}")
        if self.kind in ("NM", "NS"):
            if not isinstance(self.T, SphereDomain) or self.T.n != self.n:
                raise ValidationError(f"{self.kind} takes the unit sphere in R^{self.n}")
        else:
            if not isinstance(self.T, TranslateSet) or self.T.ambient_dim != self.n:
                raise ValidationError(f"{self.kind} takes a translate set in R^{self.n}")


def make_operator(
    kind: str,
    n: int,
    delta: float,
    tset: TranslateSet | None = None,
    max_level: int = 6,
) -> OperatorSpec:
    if kind in ("NM", "NS"):
        domain: SphereDomain | TranslateSet = SphereDomain(n)
    else:
        if tset is None:
            raise ValidationError(f"{kind} requires a translate set")
        domain = tset
    t_interval = (1.0, 2.0) if kind in ("NS", "ST") else (1.0, 1.0)
    levels = tuple(range(-max_level, max_level + 1)) if kind == "ST" else (0,)
    return OperatorSpec(kind=kind, n=n, delta=delta, T=domain, t_interval=t_interval, levels=levels)


@dataclass(frozen=True)
class EvalConfig:
    u_net_scale: float
    t_net_scale: float
    avg_samples: int
    seed: int

    def __post_init__(self):
        if self.u_net_scale <= 0 or self.t_net_scale <= 0:
            raise ValidationError("net scales must be positive")
        if self.avg_samples < 1:
            raise ValidationError("avg_samples must be positive")


@dataclass(frozen=True)
class Witness:
    """A prescribed supremum point: u in the translate domain, dilation t."""

    u: np.ndarray
    t: float = 1.0
    l: int | None = None

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        u.setflags(write=False)
        object.__setattr__(self, "u", u)


def _check_cfg(op: OperatorSpec, cfg: EvalConfig):
    if cfg.u_net_scale > op.delta + 1e-12 or cfg.t_net_scale > op.delta + 1e-12:
        raise ValidationError("net scales must not exceed the operator delta")


def net_slack(op: OperatorSpec, cfg: EvalConfig) -> float:
    """Resolution slack of the discretized supremum, in value units: moving
    (u, t) by one net cell changes an indicator average by at most about
    this fraction."""
    return (cfg.u_net_scale + cfg.t_net_scale) / op.delta


# ---------------------------------------------------------------------------
# sampling blocks


def _annulus_block(rng: np.random.Generator, n: int, delta: float, count: int):
    """Directions, radial offsets, and Jacobian weights for averaging over
    the unit-sphere delta-annulus.  Self-normalized: constant f averages to 1."""
    dirs = rng.standard_normal((count, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rho = 1.0 + delta * (2.0 * rng.random(count) - 1.0)
    ys = dirs * rho[:, None]
    weights = rho ** (n - 1)
    return ys, weights / weights.sum()


def _surface_block(rng: np.random.Generator, n: int, count: int):
    dirs = rng.standard_normal((count, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs, np.full(count, 1.0 / count)


def _sample_block(op: OperatorSpec, cfg: EvalConfig, *path):
    rng = stream(cfg.seed, "avg", *path)
    if op.kind in SURFACE_KINDS:
        return _surface_block(rng, op.n, cfg.avg_samples)
    return _annulus_block(rng, op.n, op.delta, cfg.avg_samples)


_NET_CACHE: dict = {}


def _u_net(op: OperatorSpec, cfg: EvalConfig) -> np.ndarray:
    key = (op.T, cfg.u_net_scale, cfg.seed)
    if key not in _NET_CACHE:
        _NET_CACHE[key] = delta_net(op.T, cfg.u_net_scale, seed=cfg.seed)
    return _NET_CACHE[key]


def _t_net(op: OperatorSpec, cfg: EvalConfig) -> np.ndarray:
    lo, hi = op.t_interval
    if hi <= lo:
        return np.array([lo])
    key = ("t", lo, hi, cfg.t_net_scale)
    if key not in _NET_CACHE:
        _NET_CACHE[key] = delta_net(BoxDomain(lo=[lo], hi=[hi]), cfg.t_net_scale).ravel()
    return _NET_CACHE[key]


# ---------------------------------------------------------------------------
# pointwise evaluation


def _averages_over_net(f, x: np.ndarray, us: np.ndarray, t: float, ys: np.ndarray, w: np.ndarray):
    """Weighted averages of f over x + t*(u + y), one value per net point u."""
    nu = us.shape[0]
    out = np.zeros(nu)
    for start in range(0, ys.shape[0], Y_CHUNK):
        yy = ys[start : start + Y_CHUNK]
        ww = w[start : start + Y_CHUNK]
        pts = x[None, None, :] + t * (us[:, None, :] + yy[None, :, :])
        vals = np.asarray(f(pts.reshape(-1, x.size)), dtype=float).reshape(nu, yy.shape[0])
        out += vals @ ww
    return out


def eval_at(op: OperatorSpec, f, x, cfg: EvalConfig) -> float:
    """Discretized supremum over the (u, t) net of the normalized average.

    Ties break to the first maximum in net order; identical seeds give
    identical sampling for every u, so the result is monotone in f.
    """
    _check_cfg(op, cfg)
    x = np.asarray(x, dtype=float)
    if x.shape != (op.n,):
        raise DimensionError(f"x must be a point in R^{op.n}")
    us = _u_net(op, cfg)
    if us.shape[0] == 0:
        raise ValidationError("empty translate net")
    taus = _t_net(op, cfg)
    ys, w = _sample_block(op, cfg)
    best = -1.0
    for level in op.levels:
        scale = 2.0**level
        for tau in taus:
            t = scale * tau
            vals = _averages_over_net(f, x, us, t, ys, w)
            top = float(vals.max())
            if top > best:
                best = top
    return best


def _witness_in_domain(op: OperatorSpec, w: Witness) -> bool:
    u = np.asarray(w.u, dtype=float)
    if u.shape != (op.n,):
        return False
    if isinstance(op.T, SphereDomain):
        if abs(np.linalg.norm(u) - 1.0) > 1e-9:
            return False
    else:
        if float(op.T.distance(u[None, :])[0]) > 1e-9:
            return False
    lo, hi = op.t_interval
    if op.kind == "ST":
        lmin, lmax = min(op.levels), max(op.levels)
        return 2.0**lmin * lo - 1e-12 <= w.t <= 2.0**lmax * hi + 1e-12
    return lo - 1e-12 <= w.t <= hi + 1e-12


def eval_with_witness(op: OperatorSpec, f, x, w: Witness, cfg: EvalConfig) -> float:
    """Normalized average at one prescribed (u, t); no supremum is taken."""
    _check_cfg(op, cfg)
    if not _witness_in_domain(op, w):
        raise PreconditionError("witness outside the operator's supremum domain")
    x = np.asarray(x, dtype=float)
    ys, weights = _sample_block(op, cfg)
    val = _averages_over_net(f, x, w.u[None, :], w.t, ys, weights)
    return float(val[0])


# ---------------------------------------------------------------------------
# L^p norms


def _witnessed_values(op, f, xs: np.ndarray, us: np.ndarray, ts: np.ndarray, ys, w) -> np.ndarray:
    """Per-x averages at per-x witnesses, chunked over both axes."""
    k = xs.shape[0]
    out = np.zeros(k)
    for xa in range(0, k, X_CHUNK):
        xb = min(xa + X_CHUNK, k)
        acc = np.zeros(xb - xa)
        for start in range(0, ys.shape[0], Y_CHUNK):
            yy = ys[start : start + Y_CHUNK]
            ww = w[start : start + Y_CHUNK]
            shift = us[xa:xb, None, :] + yy[None, :, :]
            pts = xs[xa:xb, None, :] + ts[xa:xb, None, None] * shift
            vals = np.asarray(f(pts.reshape(-1, xs.shape[1])), dtype=float)
            acc += vals.reshape(xb - xa, yy.shape[0]) @ ww
        out[xa:xb] = acc
    return out


def lp_ratio(
    op: OperatorSpec,
    f,
    p: float,
    cfg: EvalConfig,
    region: tuple,
    x_samples: int,
    f_measure: float,
    witness_map=None,
) -> MCEstimate:
    """Monte Carlo estimate of ||op f||_p(region) / ||f||_p.

    f_measure is the Lebesgue measure of the support of the indicator f
    (||f||_p = f_measure^(1/p)).  witness_map, if given, maps an (k, n)
    array of points to (us, ts) and replaces the supremum by the witnessed
    average: a certified lower bound that is exact when the witness is
    optimal.  Without it every x runs the full net supremum.
    """
    if not (1.0 <= p < math.inf):
        raise ValidationError(f"p must lie in [1, inf), got {p}")
    if f_measure <= 0:
        raise ValidationError("f_measure must be positive")
    lo = np.asarray(region[0], dtype=float)
    hi = np.asarray(region[1], dtype=float)
    if lo.shape != (op.n,) or hi.shape != (op.n,) or np.any(hi <= lo):
        raise ValidationError("region must be a bounded box in R^n")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValidationError("region must be bounded")
    vol = float(np.prod(hi - lo))

    sums = []
    sumsq = []
    for idx, size in chunk_sizes(x_samples, chunk=X_CHUNK * 8):
        rng = stream(cfg.seed, "lp", idx)
        xs = lo + rng.random((size, op.n)) * (hi - lo)
        if witness_map is not None:
            us, ts = witness_map(xs)
            ys, w = _sample_block(op, cfg, idx)
            vals = _witnessed_values(op, f, xs, np.asarray(us, float), np.asarray(ts, float), ys, w)
        else:
            vals = np.array([eval_at(op, f, x, cfg) for x in xs])
        g = vals**p
        sums.append(float(g.sum()))
        sumsq.append(float((g * g).sum()))
    total = math.fsum(sums)
    total_sq = math.fsum(sumsq)
    mean_g = total / x_samples
    var_g = max(total_sq / x_samples - mean_g**2, 0.0)
    se_g = math.sqrt(var_g / x_samples)
    norm = (vol * mean_g) ** (1.0 / p)
    ratio = norm / f_measure ** (1.0 / p)
    if mean_g > 0:
        se_ratio = ratio * se_g / (p * mean_g)
    else:
        se_ratio = 0.0
    return MCEstimate(value=ratio, stderr=se_ratio, samples=x_samples, seed=cfg.seed)


# ---------------------------------------------------------------------------
# mollified comparison


def mollified_compare(
    tset: TranslateSet,
    f,
    x,
    delta: float,
    cfg: EvalConfig,
    inner_samples: int = 64,
) -> tuple[float, float]:
    """Annulus average of f versus surface average of its local mollification.

    lhs is the translate-annulus operator applied to f; rhs applies the
    zero-thickness operator to the ball average of f at radius 2*delta (the
    normalized-indicator mollifier; its mass constant is absorbed by the
    calibrated comparison constant).  The expected relation is
    lhs <= C * rhs.
    """
    nt = make_operator("NT", tset.ambient_dim, delta, tset=tset)
    mt = make_operator("MT", tset.ambient_dim, delta, tset=tset)
    lhs = eval_at(nt, f, x, cfg)

    n = tset.ambient_dim
    rng = stream(cfg.seed, "moll")
    dirs = rng.standard_normal((inner_samples, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = 2.0 * delta * rng.random(inner_samples) ** (1.0 / n)
    offsets = dirs * radii[:, None]

    def mollified(zs: np.ndarray) -> np.ndarray:
        pts = zs[:, None, :] + offsets[None, :, :]
        vals = np.asarray(f(pts.reshape(-1, n)), dtype=float)
        return vals.reshape(zs.shape[0], inner_samples).mean(axis=1)

    rhs = eval_at(mt, mollified, x, cfg)
    return lhs, rhs
