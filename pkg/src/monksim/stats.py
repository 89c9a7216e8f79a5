"""Statistical battery used by the comparison tables.

Welch's unequal-variance t-test, the Shapiro-Wilk normality test (Royston's
AS R94 approximation), median-absolute-deviation outlier filtering and the
relative standard deviation. Everything is plain Python on lists of floats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import NamedTuple, Sequence

_EPS = 1e-12
_TINY = 1e-300


@dataclass
class Sample:
    values: list
    label: str = ""

    def __post_init__(self):
        self.values = list(self.values)
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError(f"sample {self.label!r} contains non-finite values")

    def __len__(self):
        return len(self.values)


class WelchResult(NamedTuple):
    t: float
    df: float
    p: float


@dataclass
class StatsReport:
    t: float
    df: float
    p: float
    normality_p: float | None
    rsd_percent: float
    n_removed_outliers: int = 0
    mean_a: float = 0.0
    mean_b: float = 0.0
    extra: dict = field(default_factory=dict)


def _mean(xs):
    return math.fsum(xs) / len(xs)


def _var(xs, mean=None):
    m = _mean(xs) if mean is None else mean
    return math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1)


def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """Upper-tail probability P(T > t) of Student's t with ``df`` degrees of freedom."""
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


def welch_t(a: Sample, b: Sample) -> WelchResult:
    """Two-sided Welch t-test of mean(a) == mean(b)."""
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValueError("welch_t needs at least two values per sample")
    ma, mb = _mean(a.values), _mean(b.values)
    va, vb = _var(a.values, ma) / na, _var(b.values, mb) / nb
    se2 = va + vb
    if se2 == 0.0:
        if ma == mb:
            return WelchResult(0.0, float(na + nb - 2), 1.0)
        return WelchResult(math.copysign(math.inf, ma - mb), float(na + nb - 2), 0.0)
    t = (ma - mb) / math.sqrt(se2)
    df = se2 * se2 / (va * va / (na - 1) + vb * vb / (nb - 1))
    p = betainc(df / 2.0, 0.5, df / (df + t * t))
    return WelchResult(t, df, min(1.0, max(0.0, p)))


def _poly(coeffs, x):
    result = 0.0
    for c in reversed(coeffs):
        result = result * x + c
    return result


# Royston (1995) AS R94 coefficients, lowest order first
_C1 = (0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _sw_coefficients(n):
    half = n // 2
    if n == 3:
        return [math.sqrt(0.5)]
    nd = NormalDist()
    m = [nd.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, half + 1)]
    summ2 = 2.0 * sum(v * v for v in m)
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a1 = _poly(_C1, rsn) - m[0] / ssumm2
    a = [0.0] * half
    a[0] = a1
    if n > 5:
        a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
        fac = math.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2) / (1 - 2 * a1 ** 2 - 2 * a2 ** 2))
        a[1] = a2
        first = 2
    else:
        fac = math.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1 ** 2))
        first = 1
    for i in range(first, half):
        a[i] = -m[i] / fac
    return a


def shapiro_wilk(x: Sample) -> tuple[float, float]:
    """Shapiro-Wilk W and its p-value, valid for 3 <= n <= 5000."""
    n = len(x)
    if not 3 <= n <= 5000:
        raise ValueError(f"shapiro_wilk needs 3 <= n <= 5000, got {n}")
    xs = sorted(x.values)
    if xs[-1] - xs[0] < 1e-19:
        raise ValueError("all values identical")
    a = _sw_coefficients(n)
    mean = _mean(xs)
    ssq = math.fsum((v - mean) ** 2 for v in xs)
    num = math.fsum(a[i] * (xs[n - 1 - i] - xs[i]) for i in range(len(a)))
    w = min(1.0, num * num / ssq)

    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.pi / 3.0)
        return w, max(0.0, p)
    w1 = math.log1p(-w) if w < 1.0 else -math.inf
    if n <= 11:
        gamma = _poly(_G, n)
        if w1 >= gamma:
            return w, 1e-99
        y = -math.log(gamma - w1)
        mu = _poly(_C3, n)
        sigma = math.exp(_poly(_C4, n))
    else:
        y = w1
        ln = math.log(n)
        mu = _poly(_C5, ln)
        sigma = math.exp(_poly(_C6, ln))
    if y == -math.inf:
        return w, 1.0
    p = 0.5 * math.erfc((y - mu) / (sigma * math.sqrt(2.0)))
    return w, p


def _median(xs):
    s = sorted(xs)
    n = len(s)
    mid = n // 2
    return s[mid] if n % 2 else 0.5 * (s[mid - 1] + s[mid])


def mad_filter(x: Sample, k: float = 3.0, scale: float = 1.0) -> tuple[Sample, int]:
    """Drop values further than ``k * scale * MAD`` from the median.

    ``scale`` is the consistency constant (1.4826 for a normal-equivalent
    sigma); the default applies the raw MAD. A zero MAD removes nothing.
    """
    if len(x) == 0:
        raise ValueError("mad_filter needs at least one value")
    if k <= 0:
        raise ValueError("k must be positive")
    med = _median(x.values)
    mad = _median([abs(v - med) for v in x.values]) * scale
    if mad == 0.0:
        return Sample(x.values, x.label), 0
    bound = k * mad
    kept = [v for v in x.values if abs(v - med) <= bound]
    return Sample(kept, x.label), len(x) - len(kept)


def rsd(x: Sample) -> float:
    """Relative standard deviation in percent (sample sd over |mean|)."""
    if len(x) < 2:
        raise ValueError("rsd needs at least two values")
    m = _mean(x.values)
    if m == 0.0:
        raise ValueError("rsd undefined for zero mean")
    return 100.0 * math.sqrt(_var(x.values, m)) / abs(m)


def compare(baseline: Sample, candidate: Sample, mad_k: float | None = None,
            mad_scale: float = 1.0) -> StatsReport:
    """Welch test of candidate vs baseline with optional MAD pre-filtering.

    The RSD and normality p-value describe the candidate sample.
    """
    removed = 0
    if mad_k is not None:
        baseline, r1 = mad_filter(baseline, mad_k, mad_scale)
        candidate, r2 = mad_filter(candidate, mad_k, mad_scale)
        removed = r1 + r2
    res = welch_t(candidate, baseline)
    try:
        normality = shapiro_wilk(candidate)[1]
    except ValueError:
        normality = None
    mean_c = _mean(candidate.values)
    spread = rsd(candidate) if mean_c != 0.0 else 0.0
    return StatsReport(
        t=res.t, df=res.df, p=res.p, normality_p=normality, rsd_percent=spread,
        n_removed_outliers=removed, mean_a=_mean(baseline.values), mean_b=mean_c,
    )


def mean(xs: Sequence[float]) -> float:
    return _mean(list(xs))
