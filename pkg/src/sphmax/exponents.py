"""Critical exponent tables.

Two kinds of curves live here.  The operator-norm tables nm_upper/ns_upper
give the power of delta in the L^p norm of the discretized maximal operators
(log factors dropped), as piecewise-affine functions of 1/p.  The
fractal-parameter tables mt_*/st_* give, for each ambient dimension n and
translate-set dimension s, the critical integrability exponent p: sufficient
curves mark where boundedness starts, necessary curves where counterexamples
stop.  Floor/ceiling terms make some necessary curves jump at integer s;
everything else is continuous.

loglog_fit turns measured (delta, value) ladders into slopes comparable
against these tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import ValidationError

__all__ = [
    "PiecewiseExponent",
    "FitResult",
    "nm_upper",
    "ns_upper",
    "mt_sufficient",
    "mt_necessary",
    "st_sufficient",
    "st_necessary",
    "region_boundary",
    "loglog_fit",
]

SNAP = 1e-9


def _snap_int(s: float) -> float:
    r = round(s)
    return float(r) if abs(s - r) < SNAP else s


def _ceil(s: float) -> int:
    return math.ceil(_snap_int(s))


def _floor(s: float) -> int:
    return math.floor(_snap_int(s))


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    fn: Callable[[float], float]


@dataclass(frozen=True)
class PiecewiseExponent:
    """Function defined piecewise on [pieces[0].lo, pieces[-1].hi]; pieces
    are tried in order with inclusive, fuzz-tolerant bounds."""

    pieces: tuple[Piece, ...]

    def __call__(self, x: float) -> float:
        for p in self.pieces:
            if p.lo - SNAP <= x <= p.hi + SNAP:
                return p.fn(x)
        raise ValidationError(f"argument {x} outside the table domain")

    def breakpoints(self) -> list[float]:
        return [p.hi for p in self.pieces[:-1]]


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    residual_max: float


# ---------------------------------------------------------------------------
# operator-norm exponent tables, piecewise affine in x = 1/p


def _nm_table(n: int) -> PiecewiseExponent:
    if n == 2:
        return PiecewiseExponent(
            (
                Piece(0.0, 0.5, lambda x: 0.0),
                Piece(0.5, 1.0, lambda x: 1.0 - 2.0 * x),
            )
        )
    if n == 3:
        return PiecewiseExponent(
            (
                Piece(0.0, 0.5, lambda x: 0.0),
                Piece(0.5, 2.0 / 3.0, lambda x: 0.5 - x),
                Piece(2.0 / 3.0, 1.0, lambda x: 1.5 - 2.5 * x),
            )
        )
    return PiecewiseExponent(
        (
            Piece(0.0, 0.5, lambda x: 0.0),
            Piece(0.5, 0.75, lambda x: 0.5 - x),
            Piece(0.75, 1.0, lambda x: 2.0 - 3.0 * x),
        )
    )


def _ns_table(n: int) -> PiecewiseExponent:
    if n == 2:
        return PiecewiseExponent(
            (
                Piece(0.0, 1.0 / 3.0, lambda x: 0.0),
                Piece(1.0 / 3.0, 1.0, lambda x: 0.5 - 1.5 * x),
            )
        )
    return PiecewiseExponent(
        (
            Piece(0.0, 0.5, lambda x: 0.0),
            Piece(0.5, 1.0, lambda x: 1.0 - 2.0 * x),
        )
    )


def _inv_p(p: float) -> float:
    if p == math.inf:
        return 0.0
    if p < 1.0 - SNAP:
        raise ValidationError(f"p must satisfy p >= 1, got {p}")
    return 1.0 / p


def nm_upper(n: int, p: float) -> float:
    """Power of delta in the L^p norm of the sphere-translate maximal
    operator; also the sharp lower-bound exponent."""
    if n < 2:
        raise ValidationError("n must be at least 2")
    return _nm_table(n)(_inv_p(p))


def ns_upper(n: int, p: float) -> float:
    """Power of delta for the dilated variant (sup over radii in [1,2])."""
    if n < 2:
        raise ValidationError("n must be at least 2")
    return _ns_table(n)(_inv_p(p))


# ---------------------------------------------------------------------------
# fractal-parameter critical exponents


def _check_ns(n: int, s: float):
    if n < 2:
        raise ValidationError("n must be at least 2")
    if not (-SNAP <= s <= n - 1 + SNAP):
        raise ValidationError(f"s={s} outside [0, n-1] for n={n}")


def mt_sufficient(n: int, s: float) -> float:
    """Critical p above which the fractal-translate surface average is
    L^p-bounded."""
    _check_ns(n, s)
    s = max(s, 0.0)
    if n == 2:
        return 1.0 + s
    if n == 3:
        return 1.0 + min(s / 2.0, 1.0 / (3.0 - s), (5.0 - 2.0 * s) / (9.0 - 4.0 * s))
    return 1.0 + min(s / (n - 1.0), 1.0 / (n - s), (n - s) / (3.0 * (n - s) - 2.0))


def mt_necessary(n: int, s: float) -> float:
    """Critical p below which explicit examples rule out boundedness."""
    _check_ns(n, s)
    s = max(s, 0.0)
    snapped = _snap_int(s)
    if snapped <= 1.0:
        return 1.0 + s / (n - 1.0)
    if snapped <= 2.0:
        return 1.0 + max(1.0 / (n - 1.0), s / (2.0 * n - 3.0), 3.0 - 2.0 * (n - s))
    cs, fs = _ceil(s), _floor(s)
    return 1.0 + max(
        2.0 / (2.0 * n - 3.0),
        (s + 1.0 - cs) / (n + 1.0 - cs),
        1.0 / (n - fs + 1.0),
        3.0 - 2.0 * (n - s),
    )


def st_sufficient(n: int, s: float) -> float:
    """Critical p for the dilation-invariant fractal-translate operator."""
    _check_ns(n, s)
    s = max(s, 0.0)
    if n == 2:
        return 2.0 + min(1.0, max(s, (4.0 * s - 2.0) / (2.0 - s)))
    gain = max(0.0, min(1.0, (2.0 * s - n + 3.0) / 4.0))
    return 1.0 + 1.0 / (n - 1.0 - s + gain)


def _st_necessary_low(n: int, s: float) -> float:
    cs, fs = _ceil(s), _floor(s)
    return max(
        (1.0 - (cs - s) / 2.0) / (n - (cs + 2.0) / 2.0),
        1.0 / (n - fs / 2.0),
    )


def _st_necessary_high(n: int, s: float) -> float:
    cs, fs = _ceil(s), _floor(s)
    return max((1.0 + s - cs) / (n - cs), 1.0 / (n - fs))


def st_necessary(n: int, s: float) -> float:
    _check_ns(n, s)
    s = max(s, 0.0)
    snapped = _snap_int(s)
    if snapped < 2.0:
        return 1.0 + _st_necessary_low(n, s)
    if snapped > 2.0:
        return 1.0 + _st_necessary_high(n, s)
    # both branch families are stated at s = 2; take the stronger bound
    return 1.0 + max(_st_necessary_low(n, 2.0), _st_necessary_high(n, 2.0))


_TABLES = {
    "MT": (mt_sufficient, mt_necessary),
    "ST": (st_sufficient, st_necessary),
}


def region_boundary(table: str, n: int, s_grid) -> list[tuple[float, float, float]]:
    """Rows (s, sufficient_p, necessary_p) along the grid, for figures."""
    if table not in _TABLES:
        raise ValidationError(f"unknown table {table!r}; expected MT or ST")
    suff, nec = _TABLES[table]
    return [(float(s), suff(n, float(s)), nec(n, float(s))) for s in s_grid]


# ---------------------------------------------------------------------------
# log-log regression


def loglog_fit(points, log_theta: float = 0.0) -> FitResult:
    """Least squares of log(value) against log(delta).

    log_theta > 0 divides values by (log 1/delta)^theta first, removing a
    known logarithmic factor so the slope isolates the power of delta.
    """
    pts = list(points)
    if len(pts) < 3:
        raise ValidationError("need at least 3 ladder points to fit")
    xs, ys = [], []
    for delta, value in pts:
        if not (0 < delta < 1) or value <= 0:
            raise ValidationError("fit needs delta in (0,1) and positive values")
        corrected = value / math.log(1.0 / delta) ** log_theta
        xs.append(math.log(delta))
        ys.append(math.log(corrected))
    k = len(xs)
    mx = math.fsum(xs) / k
    my = math.fsum(ys) / k
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    if sxx <= 0:
        raise ValidationError("fit needs at least two distinct delta values")
    slope = sxy / sxx
    intercept = my - slope * mx
    residuals = [y - (intercept + slope * x) for x, y in zip(xs, ys)]
    ss_res = math.fsum(r * r for r in residuals)
    ss_tot = math.fsum((y - my) ** 2 for y in ys)
    if ss_tot <= 1e-30:
        r2 = 1.0 if ss_res <= 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return FitResult(
        slope=slope,
        intercept=intercept,
        r_squared=r2,
        residual_max=max(abs(r) for r in residuals),
    )
