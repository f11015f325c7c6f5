"""Paired one-tailed t-test and the fixed-vs-open monthly series."""

from __future__ import annotations

import csv
import math
import sys
from collections import defaultdict
from dataclasses import dataclass
from datetime import date
from typing import IO, Iterable, Mapping, Sequence

from .errors import DegenerateSeries

T_CAP = 1e8  # |t| reported for zero-variance, nonzero-mean differences
_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAX_ITER = 10_000


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularised incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """Upper tail P(T >= t) of Student's t with ``df`` degrees of freedom."""
    tail = 0.5 * betainc_regularized(df / 2.0, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    p_value: float
    n: int

    def __iter__(self):
        return iter((self.t_stat, self.p_value))


def paired_t_one_tailed(xs: Sequence[float], ys: Sequence[float]) -> TTestResult:
    """H1: mean(xs - ys) > 0. Returns the t statistic and the upper-tail p-value."""
    if len(xs) != len(ys):
        raise DegenerateSeries("paired series differ in length")
    n = len(xs)
    if n < 2:
        raise DegenerateSeries("need at least two pairs")
    diffs = [float(x) - float(y) for x, y in zip(xs, ys)]
    mean = math.fsum(diffs) / n
    var = math.fsum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            raise DegenerateSeries("all paired differences are zero")
        t = math.copysign(T_CAP, mean)
    else:
        t = mean / math.sqrt(var / n)
        t = max(-T_CAP, min(T_CAP, t))
    p = student_t_sf(t, n - 1)
    # keep p inside (0, 1] even when the tail underflows
    return TTestResult(t_stat=t, p_value=min(1.0, max(p, sys.float_info.min)), n=n)


# --- fixed vs open monthly series -------------------------------------------

@dataclass(frozen=True)
class MonthPoint:
    month: str  # YYYY-MM
    fixed_mean: float | None
    open_mean: float | None


def month_key(day: date) -> str:
    return f"{day.year:04d}-{day.month:02d}"


def months_between(start: date, end: date) -> list[str]:
    out = []
    y, m = start.year, start.month
    while (y, m) <= (end.year, end.month):
        out.append(f"{y:04d}-{m:02d}")
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    return out


def fixed_vs_open_series(
    fixes: Iterable,
    open_means: Mapping[str, float | None],
    attribute: str,
    months: Sequence[str],
) -> list[MonthPoint]:
    """Per month: mean ``attribute`` of bugs fixed that month vs mean over bugs open at month end.

    ``fixes`` are records with ``day`` and the attribute as a field (see
    ``replay.FixRecord``); ``open_means`` maps month to the open-bug mean at
    its last day. Months without data carry None.
    """
    grouped: dict[str, list[float]] = defaultdict(list)
    for rec in fixes:
        grouped[month_key(rec.day)].append(float(getattr(rec, attribute)))
    points = []
    for month in months:
        vals = grouped.get(month)
        points.append(MonthPoint(month, sum(vals) / len(vals) if vals else None, open_means.get(month)))
    return points


def complete_pairs(points: Sequence[MonthPoint]) -> tuple[list[float], list[float]]:
    """Months where both means exist; months with a missing side are dropped."""
    xs, ys = [], []
    for p in points:
        if p.fixed_mean is not None and p.open_mean is not None:
            xs.append(p.fixed_mean)
            ys.append(p.open_mean)
    return xs, ys


def write_series(fh: IO[str], points: Iterable[MonthPoint]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("month", "fixed_mean", "open_mean"))
    for p in points:
        writer.writerow((
            p.month,
            "" if p.fixed_mean is None else repr(round(p.fixed_mean, 9)),
            "" if p.open_mean is None else repr(round(p.open_mean, 9)),
        ))
