"""Command-line entry point: run, curve, compare, fit, calibrate."""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import bench
from .config import ConfigError, ScenarioConfig, load_config
from .monk import PolicyConfigError, ProtocolViolation
from .sim import run_scenario, write_artifacts

OUT_ENV = "MONKSIM_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3
FIXED_METRICS = ("max_latency_us", "p99_latency_us", "mean_latency_us", "throughput", "stalls")


class InvariantViolation(RuntimeError):
    pass


def out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "monksim-out")


def scenario(path: str | None, policy: str | None = None, rate: float | None = None,
             horizon: int | None = None, settle: int | None = None) -> ScenarioConfig:
    cfg = load_config(path) if path else ScenarioConfig()
    try:
        if policy:
            cfg = cfg.with_policy(policy)
        if rate is not None:
            cfg = cfg.with_rate(rate)
        if horizon is not None or settle is not None:
            cfg = dataclasses.replace(cfg, horizon_us=horizon or cfg.horizon_us,
                                      settle_us=cfg.settle_us if settle is None else settle)
    except PolicyConfigError as e:
        raise ConfigError("policy.variant", str(e)) from None
    return cfg


def parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def parse_seeds(text: str) -> list[int]:
    """``0,3,7`` or ``0-9``."""
    out = []
    for part in text.split(","):
        lo, _, hi = part.partition("-")
        out.extend(range(int(lo), int(hi) + 1) if hi else [int(lo)])
    return out


def pmap(fn, items, jobs: int) -> list:
    """Map in worker processes, preserving input order."""
    items = list(items)
    jobs = max(1, min(jobs, len(items), os.cpu_count() or 1))
    if jobs == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(jobs) as ex:
        return list(ex.map(fn, items))


def checked_run(args):
    cfg, seed, trace = args
    res = run_scenario(cfg, seed, trace=trace, audit=True)
    if res.violations:
        raise InvariantViolation(f"{res.violations} priority violations at dispatch instants")
    return res


def curve_scores(args) -> bench.Scores:
    cfg, seed, steps, window = args
    return bench.score(bench.build_curve(cfg, steps, seed, window))


def fixed_metrics(args) -> dict:
    cfg, seed = args
    s = run_scenario(cfg, seed).summary()
    return {m: float(s[m]) for m in FIXED_METRICS}


# -- subcommands ----------------------------------------------------------------

def cmd_run(a) -> int:
    cfg = scenario(a.config, a.policy, a.rate, a.horizon, a.settle)
    seeds = parse_seeds(a.seeds) if a.seeds else [a.seed]
    root = out_dir(a.out)
    results = pmap(checked_run, [(cfg, s, a.trace) for s in seeds], a.jobs)
    for res in results:
        dest = root / f"seed{res.seed}" if len(seeds) > 1 else root
        write_artifacts(res, dest)
        s = res.summary()
        print(f"seed={res.seed} policy={s['policy']} requests={s['requests']} "
              f"max_latency_us={s['max_latency_us']} stalls={s['stalls']} cycles={s['cycles']} -> {dest}")
    return EXIT_OK


def cmd_curve(a) -> int:
    cfg = scenario(a.config, a.policy)
    window = bench.StepWindow(a.settle, a.measure)
    curve = bench.build_curve(cfg, a.steps, a.seed, window, a.preliminary_max)
    scores = bench.score(curve)
    root = out_dir(a.out)
    root.mkdir(parents=True, exist_ok=True)
    header = cfg.header_lines(a.seed) + [f"steps={a.steps}", f"settle_us={a.settle}",
                                         f"measure_us={a.measure}"]
    bench.write_curve_csv(root / "curve.csv", curve, header)
    text = "".join(f"{k}={v:.3f}\n" for k, v in scores.as_dict().items())
    (root / "scores.txt").write_text("".join(f"# {h}\n" for h in header) + text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_compare(a) -> int:
    if a.runs < 2:
        raise ConfigError("runs", "compare needs at least two runs")
    seeds = list(range(a.first_seed, a.first_seed + a.runs))
    configs: dict[str, ScenarioConfig] = {}
    if a.policies:
        for label in a.policies.split(","):
            configs[label] = scenario(a.config[0] if a.config else None, label)
    else:
        if not a.config:
            raise ConfigError("config", "give config files or --policies")
        for path in a.config:
            configs[Path(path).stem] = scenario(path)
    if a.rate is not None:
        configs = {k: v.with_rate(a.rate) for k, v in configs.items()}
    samples = {}
    for name, cfg in configs.items():
        if a.rate is not None:
            rows = pmap(fixed_metrics, [(cfg, s) for s in seeds], a.jobs)
            samples[name] = {m: [r[m] for r in rows] for m in FIXED_METRICS}
        else:
            window = bench.StepWindow(a.settle, a.measure)
            scores = pmap(curve_scores, [(cfg, s, a.steps, window) for s in seeds], a.jobs)
            keys = scores[0].as_dict().keys()
            samples[name] = {k: [sc.as_dict()[k] for sc in scores] for k in keys}
    table = bench.comparison_table(samples, next(iter(configs)), mad_k=a.mad)
    root = out_dir(a.out)
    root.mkdir(parents=True, exist_ok=True)
    first = next(iter(configs.values()))
    header = first.header_lines() + [f"runs={a.runs}", f"baseline={table.baseline}",
                                     f"mad_filter={'off' if a.mad is None else f'k={a.mad:g}'}"]
    header += [f"mad_dropped {c}.{m}={n}" for (c, m), n in table.dropped.items() if n]
    table.write_csv(root / "comparison.csv", header)
    sys.stdout.write(table.render())
    return EXIT_OK


def cmd_fit(a) -> int:
    curve = bench.read_curve_csv(a.curve)
    pts = [(s.cpu_load, s.max_latency / 1000.0) for s in curve.steps]
    fit = bench.fit_piecewise(pts, a.breakpoints, a.degree)
    sys.stdout.write(fit.report())
    return EXIT_OK


def cmd_calibrate(a) -> int:
    cfg = scenario(a.config, a.policy)
    rates = bench.calibrate(cfg, a.targets, a.seed)
    print("target_pct  rate")
    for t, r in zip(a.targets, rates):
        print(f"{t:<10g}  {r:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="monksim", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", nargs="?", help="scenario YAML (default scenario if omitted)")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./monksim-out)")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1)

    r = sub.add_parser("run", help="simulate one scenario and write CSV artifacts")
    common(r)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--seeds", help="several seeds, e.g. 0-9 or 1,4,7")
    r.add_argument("--policy", help="override policy, e.g. MONK or HMONK(1)")
    r.add_argument("--rate", type=float, help="override injection rate (req/s)")
    r.add_argument("--horizon", type=int, help="override horizon (us)")
    r.add_argument("--settle", type=int, help="override settle window (us)")
    r.add_argument("--trace", action="store_true", help="also write the scheduler event trace")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("curve", help="build a response curve and score it")
    common(c)
    c.add_argument("--policy")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--steps", type=int, default=50)
    c.add_argument("--settle", type=int, default=2_000_000)
    c.add_argument("--measure", type=int, default=8_000_000)
    c.add_argument("--preliminary-max", type=float, help="skip the warm-up search")
    c.set_defaults(fn=cmd_curve)

    m = sub.add_parser("compare", help="multi-seed comparison against the first configuration")
    m.add_argument("config", nargs="*", help="scenario YAML files; the first is the baseline")
    m.add_argument("--out")
    m.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    m.add_argument("--policies", help="compare policies on one scenario, e.g. VANILLA,MONK")
    m.add_argument("--runs", type=int, default=10)
    m.add_argument("--first-seed", type=int, default=0)
    m.add_argument("--rate", type=float, help="compare latency at one fixed rate instead of curve scores")
    m.add_argument("--steps", type=int, default=50)
    m.add_argument("--settle", type=int, default=2_000_000)
    m.add_argument("--measure", type=int, default=8_000_000)
    m.add_argument("--mad", type=float, metavar="K",
                   help="drop runs further than K normal-scaled MADs from the median before testing")
    m.set_defaults(fn=cmd_compare)

    f = sub.add_parser("fit", help="piecewise least-squares fit of max latency against CPU load")
    f.add_argument("curve", help="curve.csv written by `monksim curve`")
    f.add_argument("--breakpoints", type=parse_floats, default=list(bench.DEFAULT_BREAKPOINTS))
    f.add_argument("--degree", type=int, default=2)
    f.set_defaults(fn=cmd_fit)

    k = sub.add_parser("calibrate", help="injection rates that hit target CPU loads")
    k.add_argument("config", nargs="?")
    k.add_argument("--targets", type=parse_floats, default=[40.0, 70.0, 95.0])
    k.add_argument("--policy", default="VANILLA")
    k.add_argument("--seed", type=int, default=0)
    k.set_defaults(fn=cmd_calibrate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except bench.BenchError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, ProtocolViolation) as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
