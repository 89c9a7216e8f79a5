"""Long stress run counting reconciler checks and corrections.

    python3 scripts/reconciler_stress.py --hours 2
"""
import argparse

from monksim.config import ScenarioConfig
from monksim.gc import GcConfig
from monksim.sim import run_scenario
from monksim.workload import ArrivalProcess, RequestSpec


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--hours", type=float, default=2.0)
    p.add_argument("--policy", default="MONK_L")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rate", type=float, default=120.0)
    a = p.parse_args()

    cfg = ScenarioConfig(cores=2, horizon_us=int(a.hours * 3600e6), settle_us=0,
                         request=RequestSpec(4000, 0.5, 100_000), arrival=ArrivalProcess(rate=a.rate),
                         gc=GcConfig(heap_capacity=20_000_000, locks_per_cycle=20.0)).with_policy(a.policy)
    res = run_scenario(cfg, a.seed)
    frac = res.corrections / res.checks if res.checks else 0.0
    print(f"checks={res.checks} corrections={res.corrections} fraction={100 * frac:.4f}% "
          f"cycles={len(res.cycles)} policy_changes={len(res.policy_log)}")


if __name__ == "__main__":
    main()
