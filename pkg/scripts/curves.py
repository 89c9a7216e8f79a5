"""Response curves and scores for several policies, plus a piecewise fit of
max latency against CPU load for each.

    python3 scripts/curves.py --steps 20 --out results/curves
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from monksim import bench
from monksim.bench import StepWindow
from monksim.config import ScenarioConfig, load_config


def curve(args):
    cfg, steps, seed, window = args
    return bench.build_curve(cfg, steps, seed, window)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config", nargs="?")
    p.add_argument("--policies", default="VANILLA,MONK,HMONK(0),HMONK(1)")
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--settle", type=int, default=1_000_000)
    p.add_argument("--measure", type=int, default=3_000_000)
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--out", default="results/curves")
    p.add_argument("--jobs", type=int, default=None)
    a = p.parse_args()

    base = load_config(Path(a.config).read_text()) if a.config else ScenarioConfig()
    window = StepWindow(a.settle, a.measure)
    policies = a.policies.split(",")
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(base.with_policy(pol), a.steps, a.seed, window) for pol in policies]
    with ProcessPoolExecutor(a.jobs) as ex:
        curves = list(ex.map(curve, jobs))
    for pol, c in zip(policies, curves):
        name = pol.replace("(", "").replace(")", "")
        bench.write_curve_csv(out / f"{name}.csv", c, [f"policy={pol}", f"seed={a.seed}"])
        sc = bench.score(c)
        per = " ".join(f"{ms}ms={sc.critical_per_sla[ms]:.0f}" for ms in bench.SLAS_MS)
        print(f"{pol:10} max_jops={sc.max_jops:.0f} critical={sc.critical_aggregate:.0f}  {per}")
        pts = [(s.cpu_load, s.max_latency) for s in c.steps]
        try:
            print(bench.fit_piecewise(pts, degree=a.degree).report())
        except bench.BenchError as e:
            print(f"  fit skipped: {e}")


if __name__ == "__main__":
    main()
