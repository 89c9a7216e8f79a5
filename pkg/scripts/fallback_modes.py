"""Fallback-mode trade-off for HMONK: max-JOPS and mid-load latency gain
for every-other-cycle versus while-critical.

    python3 scripts/fallback_modes.py --seeds 10 --headroom 1
"""
import argparse
import dataclasses
from concurrent.futures import ProcessPoolExecutor

from monksim import bench
from monksim.config import ScenarioConfig
from monksim.monk import FallbackMode, PolicyConfig
from monksim.sim import run_scenario
from monksim.stats import Sample, rsd


def with_mode(cfg, headroom, mode):
    pol = PolicyConfig.parse(f"HMONK({headroom})", fallback_mode=mode, switch_delay_us=cfg.policy.switch_delay_us)
    return dataclasses.replace(cfg, policy=pol)


def jops(args):
    cfg, seed = args
    return bench.warmup(cfg, seed, rel_tol=0.01)


def max_lat(args):
    cfg, seed = args
    return run_scenario(cfg, seed).max_latency_us


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--headroom", type=int, default=1)
    p.add_argument("--jobs", type=int, default=None)
    a = p.parse_args()

    base = ScenarioConfig()
    mid = bench.calibrate(base.with_policy("VANILLA"), [70], seed=0)[0]
    seeds = range(a.seeds)
    with ProcessPoolExecutor(a.jobs) as ex:
        ref = list(ex.map(max_lat, [(base.with_policy("VANILLA").with_rate(mid), s) for s in seeds]))
        print(f"VANILLA at {mid:.0f} req/s: mean max latency {sum(ref) / len(ref):.0f} us")
        for mode in FallbackMode:
            cfg = with_mode(base, a.headroom, mode)
            j = list(ex.map(jops, [(cfg, s) for s in seeds]))
            lat = list(ex.map(max_lat, [(cfg.with_rate(mid), s) for s in seeds]))
            gain = sum(ref) / len(ref) - sum(lat) / len(lat)
            print(f"{mode.value:18} max_jops={sum(j) / len(j):.1f} gain={gain:.0f} us rsd={rsd(Sample(lat)):.1f}%")


if __name__ == "__main__":
    main()
