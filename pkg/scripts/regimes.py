"""Policy comparison at calibrated ~40/70/95% CPU loads.

Writes one row per (load, policy) with mean max latency, stalls and the
Welch p-value against VANILLA.

    python3 scripts/regimes.py --seeds 10 --out results/regimes.csv
"""
import argparse
import csv
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from monksim import bench
from monksim.config import ScenarioConfig, load_config
from monksim.sim import run_scenario
from monksim.stats import Sample, welch_t

POLICIES = ["VANILLA", "MONK", "MONK_S", "MONK_L", "HMONK(0)", "HMONK(1)"]


def one(args):
    cfg, seed = args
    r = run_scenario(cfg, seed)
    return r.max_latency_us, r.stalls, r.cpu_load()


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config", nargs="?")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--targets", default="40,70,95")
    p.add_argument("--policies", default=",".join(POLICIES))
    p.add_argument("--out", default="results/regimes.csv")
    p.add_argument("--jobs", type=int, default=None)
    a = p.parse_args()

    base = load_config(Path(a.config).read_text()) if a.config else ScenarioConfig()
    targets = [float(t) for t in a.targets.split(",")]
    rates = bench.calibrate(base.with_policy("VANILLA"), targets, seed=0)
    policies = a.policies.split(",")
    rows = []
    with ProcessPoolExecutor(a.jobs) as ex:
        for target, rate in zip(targets, rates):
            got = {}
            for pol in policies:
                cfg = base.with_policy(pol).with_rate(rate)
                got[pol] = list(ex.map(one, [(cfg, s) for s in range(a.seeds)]))
            ref = [m for m, _, _ in got.get("VANILLA", [])]
            for pol, res in got.items():
                lat = [m for m, _, _ in res]
                pval = welch_t(Sample(lat), Sample(ref)).p if ref and pol != "VANILLA" else 1.0
                rows.append({
                    "target_pct": target, "rate": round(rate, 3), "policy": pol,
                    "cpu_pct": round(sum(c for _, _, c in res) / len(res), 2),
                    "max_latency_us": round(sum(lat) / len(lat), 1),
                    "stalls": sum(s for _, s, _ in res),
                    "seeds_with_stalls": sum(1 for _, s, _ in res if s),
                    "p_vs_vanilla": round(pval, 6),
                })
                print(*rows[-1].values(), sep="\t", flush=True)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
