"""Response curves, max-JOPS/critical-JOPS scoring and piecewise polynomial fits."""
from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .sim import run_scenario
from .stats import Sample, mad_filter, rsd, welch_t

SLAS_MS = (10, 25, 50, 75, 100)
SUSTAINED = 0.99
DEFAULT_BREAKPOINTS = (55.0, 80.0, 93.0)
CURVE_COLUMNS = ["rate", "throughput", "max_us", "p99_us", "mean_us", "cpu_pct", "stalls"]


class BenchError(ValueError):
    pass


@dataclass(frozen=True)
class CurveStep:
    injection_rate: float
    achieved_throughput: float
    max_latency: int
    p99_latency: float
    mean_latency: float
    cpu_load: float
    stalls: int

    def sustained(self, threshold: float = SUSTAINED) -> bool:
        return self.achieved_throughput >= threshold * self.injection_rate

    def row(self) -> list:
        return [f"{self.injection_rate:.3f}", f"{self.achieved_throughput:.3f}", self.max_latency,
                f"{self.p99_latency:.0f}", f"{self.mean_latency:.1f}", f"{self.cpu_load:.3f}", self.stalls]


@dataclass
class ResponseCurve:
    steps: list[CurveStep]
    preliminary_max: float

    def __post_init__(self):
        rates = [s.injection_rate for s in self.steps]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise BenchError("curve rates must be strictly increasing")


@dataclass
class Scores:
    max_jops: float
    critical_per_sla: dict[int, float]
    critical_aggregate: float

    def as_dict(self) -> dict[str, float]:
        out = {"max_jops": self.max_jops}
        out.update({f"critical_{ms}ms": v for ms, v in self.critical_per_sla.items()})
        out["critical_geomean"] = self.critical_aggregate
        return out


@dataclass
class Segment:
    lo: float
    hi: float
    degree: int
    coeffs: tuple[float, ...]  # highest power first
    sse: float
    n: int

    @property
    def leading(self) -> float:
        return self.coeffs[0]

    def __call__(self, x):
        return np.polyval(self.coeffs, x)

    def equation(self) -> str:
        terms = []
        for i, c in enumerate(self.coeffs):
            p = self.degree - i
            var = "" if p == 0 else ("x" if p == 1 else f"x^{p}")
            terms.append(f"{c:.6g}{var}")
        return "y = " + " + ".join(terms).replace("+ -", "- ")


@dataclass
class PiecewiseFit:
    breakpoints: tuple[float, ...]
    segments: list[Segment] = field(default_factory=list)
    leading_ratios: list[float] = field(default_factory=list)

    def report(self) -> str:
        lines = [f"breakpoints: {', '.join(f'{b:g}' for b in self.breakpoints)}"]
        for s in self.segments:
            lines.append(f"[{s.lo:g}, {s.hi:g}) n={s.n} sse={s.sse:.6g}  {s.equation()}")
        for i, r in enumerate(self.leading_ratios):
            lines.append(f"segment {i + 2} vs {i + 1}: leading term ratio {r:.6g}x")
        return "\n".join(lines) + "\n"


# -- measuring ----------------------------------------------------------------

@dataclass
class StepWindow:
    settle_us: int = 2_000_000
    measure_us: int = 8_000_000

    @property
    def horizon_us(self) -> int:
        return self.settle_us + self.measure_us


def measure(cfg: ScenarioConfig, rate: float, seed: int, window: StepWindow | None = None) -> CurveStep:
    """One independent run at a fixed injection rate, scored over the measurement window."""
    if window is not None:
        cfg = dataclasses.replace(cfg, horizon_us=window.horizon_us, settle_us=window.settle_us)
    res = run_scenario(cfg.with_rate(rate), seed)
    lats = res.window()
    # served fraction of what actually arrived, so Poisson count noise in
    # short windows does not read as saturation
    arrived, done = res.window_counts()
    thr = rate * min(1.0, done / arrived) if arrived else float(rate)
    return CurveStep(
        injection_rate=float(rate), achieved_throughput=thr,
        max_latency=max(lats) if lats else 0, p99_latency=res.percentile(99),
        mean_latency=sum(lats) / len(lats) if lats else 0.0,
        cpu_load=res.cpu_load(), stalls=res.stalls,
    )


def warmup(cfg: ScenarioConfig, seed: int = 0, window: StepWindow | None = None,
           rel_tol: float = 0.005) -> float:
    """Largest injection rate the scenario sustains (>= 99% of it completes)."""
    # service-time bound on throughput; the true capacity is never above it
    bound = cfg.cores * 1e6 / cfg.request.service_micros
    lo = bound / 64
    if not measure(cfg, lo, seed, window).sustained():
        raise BenchError("scenario saturates at the lowest probed injection rate")
    hi = bound * 1.05
    if measure(cfg, hi, seed, window).sustained():
        return hi
    while hi - lo > rel_tol * hi:
        mid = (lo + hi) / 2
        if measure(cfg, mid, seed, window).sustained():
            lo = mid
        else:
            hi = mid
    return lo


def build_curve(cfg: ScenarioConfig, steps: int = 50, seed: int = 0, window: StepWindow | None = None,
                preliminary_max: float | None = None) -> ResponseCurve:
    window = window or StepWindow()
    if steps < 1:
        raise BenchError("steps must be >= 1")
    pmax = warmup(cfg, seed, window) if preliminary_max is None else preliminary_max
    rates = [pmax * (i + 1) / steps for i in range(steps)]
    return ResponseCurve([measure(cfg, r, seed, window) for r in rates], pmax)


def calibrate(cfg: ScenarioConfig, targets, seed: int = 0, window: StepWindow | None = None,
              tol: float = 2.0, max_iter: int = 30) -> list[float]:
    """Injection rates whose mean CPU usage lands within ``tol`` points of each target."""
    bound = cfg.cores * 1e6 / cfg.request.service_micros * 1.1
    top = measure(cfg, bound, seed, window).cpu_load
    out = []
    floor = 0.0
    for target in targets:
        if target < 0 or target > 100:
            raise BenchError(f"target load {target} outside [0, 100]")
        if target == 0:
            out.append(0.0)
            continue
        if target > top + tol:
            raise BenchError(f"target load {target}% unreachable (saturates at {top:.1f}%)")
        lo, hi = floor, bound
        best, best_err = None, math.inf
        for _ in range(max_iter):
            mid = (lo + hi) / 2
            load = measure(cfg, mid, seed, window).cpu_load
            err = abs(load - target)
            if err < best_err:
                best, best_err = mid, err
            if err <= tol / 4:
                break
            if load < target:
                lo = mid
            else:
                hi = mid
        if best_err > tol:
            raise BenchError(f"target load {target}% unreachable (closest {best_err:.2f} points off)")
        if out and best <= out[-1]:
            raise BenchError(f"target load {target}% does not need more load than the previous target")
        out.append(best)
        floor = best
    return out


# -- scoring ------------------------------------------------------------------

def critical_jops(curve: ResponseCurve, sla_us: int) -> float:
    passing = [s.injection_rate for s in curve.steps if s.max_latency <= sla_us]
    return max(passing) if passing else 0.0


def aggregate_critical(per_sla) -> float:
    vals = list(per_sla)
    if any(v < 0 for v in vals):
        raise BenchError("critical-JOPS values must be nonnegative")
    if not vals or any(v == 0 for v in vals):
        return 0.0
    return math.exp(math.fsum(math.log(v) for v in vals) / len(vals))


def max_jops(curve: ResponseCurve, threshold: float = SUSTAINED) -> float:
    """Rate of the last step before the first unsustained one."""
    best = 0.0
    for s in curve.steps:
        if not s.sustained(threshold):
            break
        best = s.injection_rate
    return best


def score(curve: ResponseCurve) -> Scores:
    if not curve.steps:
        raise BenchError("empty curve")
    mj = max_jops(curve)
    per = {}
    for ms in SLAS_MS:
        # a step only counts towards an SLA while throughput is still sustained
        per[ms] = min(critical_jops(curve, ms * 1000), mj) if mj else 0.0
    # nondecreasing by construction: a looser SLA admits every step a tighter one does
    return Scores(mj, per, aggregate_critical(per.values()))


# -- least squares ------------------------------------------------------------

def polyfit(x, y, degree: int) -> tuple[tuple[float, ...], float]:
    """Ordinary least squares through an SVD-based solver; returns (coeffs, sse)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.vander(x, degree + 1)
    coeffs, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coeffs
    return tuple(float(c) for c in coeffs), float(resid @ resid)


def sse(coeffs, x, y) -> float:
    r = np.asarray(y, dtype=float) - np.polyval(coeffs, np.asarray(x, dtype=float))
    return float(r @ r)


def fit_piecewise(points, breakpoints=DEFAULT_BREAKPOINTS, degree: int = 2) -> PiecewiseFit:
    """Fit one polynomial per load band; bands without any points are skipped."""
    if degree < 0:
        raise BenchError("degree must be >= 0")
    bps = tuple(sorted(float(b) for b in breakpoints))
    edges = (-math.inf, *bps, math.inf)
    pts = sorted((float(x), float(y)) for x, y in points)
    fit = PiecewiseFit(bps)
    for i, (lo, hi) in enumerate(zip(edges, edges[1:])):
        seg = [(x, y) for x, y in pts if lo <= x < hi]
        if not seg:
            continue
        if len(seg) <= degree + 1:
            raise BenchError(f"segment {i + 1} [{lo:g}, {hi:g}) has {len(seg)} points; "
                             f"degree {degree} needs more than {degree + 1}")
        xs, ys = zip(*seg)
        coeffs, err = polyfit(xs, ys, degree)
        fit.segments.append(Segment(lo, hi, degree, coeffs, err, len(seg)))
    for a, b in zip(fit.segments, fit.segments[1:]):
        fit.leading_ratios.append(b.leading / a.leading if a.leading else math.inf)
    return fit


def leading_ratio(fit: PiecewiseFit, i: int = 0) -> float:
    return fit.leading_ratios[i]


# -- output -------------------------------------------------------------------

def write_curve_csv(path, curve: ResponseCurve, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# preliminary_max={curve.preliminary_max:.3f}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for s in curve.steps:
            w.writerow(s.row())


def read_curve_csv(path) -> ResponseCurve:
    pmax = 0.0
    rows = []
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key == "preliminary_max":
                    pmax = float(val)
            else:
                lines.append(line)
    for r in csv.DictReader(lines):
        rows.append(CurveStep(float(r["rate"]), float(r["throughput"]), int(r["max_us"]),
                              float(r["p99_us"]), float(r["mean_us"]), float(r["cpu_pct"]),
                              int(r["stalls"])))
    return ResponseCurve(rows, pmax)


# -- comparison tables ----------------------------------------------------------

# consistency constant: MAD to a normal-equivalent sigma
MAD_SCALE = 1.4826
LOWER_IS_BETTER = {"max_latency_us", "p99_latency_us", "mean_latency_us", "stalls"}


@dataclass
class ComparisonRow:
    config: str
    metric: str
    mean: float
    normalized: float
    p: float
    rsd: float
    marker: str


@dataclass
class ComparisonTable:
    baseline: str
    rows: list[ComparisonRow]
    # outliers dropped per (config, metric) when MAD filtering was requested
    dropped: dict = field(default_factory=dict)

    def render(self) -> str:
        head = ("config", "metric", "mean", "normalized", "p", "rsd%", "marker")
        body = [(r.config, r.metric, f"{r.mean:.3f}", f"{r.normalized:.4f}", f"{r.p:.4g}",
                 f"{r.rsd:.2f}", r.marker) for r in self.rows]
        widths = [max(len(str(x[i])) for x in [head, *body]) for i in range(len(head))]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        return "\n".join(fmt.format(*x).rstrip() for x in [head, *body]) + "\n"

    def write_csv(self, path, header_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["config", "metric", "mean", "normalized", "p_value", "rsd_pct", "marker"])
            for r in self.rows:
                w.writerow([r.config, r.metric, repr(r.mean), repr(r.normalized), repr(r.p),
                            repr(r.rsd), r.marker])


def _rsd(xs) -> float:
    if len(xs) < 2 or sum(xs) == 0:
        return 0.0
    return rsd(Sample(list(xs)))


def comparison_table(samples: dict[str, dict[str, list[float]]], baseline: str,
                     alpha: float = 0.05, mad_k: float | None = None) -> ComparisonTable:
    """``samples[config][metric]`` holds one value per run; the baseline row normalizes to 1.

    With ``mad_k`` set, each sample first loses values further than
    ``mad_k`` normal-scaled MADs from its median.
    """
    if baseline not in samples:
        raise BenchError(f"baseline {baseline!r} missing from samples")
    dropped = {}
    if mad_k is not None:
        kept = {}
        for name, metrics in samples.items():
            kept[name] = {}
            for metric, vals in metrics.items():
                x, n = mad_filter(Sample(list(vals)), mad_k, MAD_SCALE) if vals else (Sample([]), 0)
                kept[name][metric] = x.values
                dropped[name, metric] = n
        samples = kept
    base = samples[baseline]
    rows = []
    for name, metrics in samples.items():
        for metric, vals in metrics.items():
            ref = base[metric]
            if len(vals) < 2 or len(ref) < 2:
                raise BenchError("comparisons need at least two runs per configuration")
            m, mb = sum(vals) / len(vals), sum(ref) / len(ref)
            if name == baseline:
                norm, p = 1.0, 1.0
            else:
                norm = m / mb if mb else (1.0 if m == 0 else math.inf)
                p = welch_t(Sample(list(vals)), Sample(list(ref))).p
            marker = "not-significant"
            if p < alpha and m != mb:
                up = m > mb
                marker = "worse" if up == (metric in LOWER_IS_BETTER) else "better"
            rows.append(ComparisonRow(name, metric, m, norm, p, _rsd(vals), marker))
    return ComparisonTable(baseline, rows, dropped)
