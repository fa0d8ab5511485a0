"""Run the four shipped scenarios and compare what the victim rover sees.

    python3 demos/attack_comparison.py [--out-dir DIR]
"""

import argparse
import time
from pathlib import Path

from rtkspoof.scenario import load_scenario, run_scenario, shipped_scenario, write_outputs

NAMES = ["nominal", "sync_lift_off", "async_spoof", "jam"]


def fmt(s):
    if s is None:
        return "-"
    h = ", ".join(f"{k}={v}" for k, v in s.status_histogram.items() if v)
    return f"fail={s.fail_fraction:5.3f}  mean_3d={s.mean_3d:8.3f} m  max_3d={s.max_3d:8.3f} m  [{h}]"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", help="also write per-epoch CSV and summary JSON here")
    args = ap.parse_args()

    for name in NAMES:
        cfg = load_scenario(shipped_scenario(name))
        t0 = time.perf_counter()
        res = run_scenario(cfg)
        dt = time.perf_counter() - t0
        print(f"== {name} ({cfg.n_epochs} epochs, {dt:.1f} s)")
        if cfg.attack is None:
            print(f"   whole run     {fmt(res.summary)}")
        else:
            a = cfg.attack
            print(f"   attack {a.mode.value} over [{a.start:g}, {a.end:g}) s")
            print(f"   inside window {fmt(res.attack_summary)}")
            print(f"   outside       {fmt(res.outside_summary)}")
        if res.monitor_summary is not None:
            print(f"   attacker monitor {fmt(res.monitor_summary)}")
        if args.out_dir:
            out = Path(args.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            write_outputs(cfg, res, out / f"{name}.csv", out / f"{name}_summary.json")


if __name__ == "__main__":
    main()
