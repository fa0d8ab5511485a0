"""The attacker's feedback channel, live over TCP.

A caster streams the async-spoof station. A victim rover and the attacker's own
monitor rover both subscribe; whenever either changes solution status a line is
printed. The monitor sees the fix collapse at the same moment the victim does,
without the attacker ever touching the victim.

    python3 demos/live_feedback.py [--speed 20] [--epochs 160]
"""

import argparse
import threading
import time
from dataclasses import replace

from rtkspoof.ntrip import Caster, CorrectionClient
from rtkspoof.scenario import live_records, load_scenario, rover_session, shipped_scenario, station_frames


def follow(label, client, session, epochs, lock):
    last = None
    for rec in live_records(client, session, epochs):
        if rec.status is not last:
            with lock:
                print(f"{label:>8}  t={rec.t:6.1f}  {rec.status.name:<6} err_3d={rec.error_3d:8.3f} m")
            last = rec.status


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--speed", type=float, default=20.0, help="scenario seconds per wall-clock second")
    ap.add_argument("--epochs", type=int, default=160)
    args = ap.parse_args()

    cfg = load_scenario(shipped_scenario("async_spoof"))
    cfg = replace(cfg, duration=float(args.epochs))
    eph = cfg.ephemeris()
    lock = threading.Lock()
    with Caster(mountpoint=cfg.mountpoint, auth_token="demo") as caster:
        print(f"caster on {caster.address[0]}:{caster.address[1]}/{cfg.mountpoint}; "
              f"spoofing starts at t={cfg.attack.start:g} s")
        threads = []
        for label, which in (("victim", "rover"), ("monitor", "monitor")):
            client = CorrectionClient(caster.address, cfg.mountpoint, token="demo")
            th = threading.Thread(target=follow, args=(label, client, rover_session(cfg, which, eph), args.epochs, lock))
            th.start()
            threads.append(th)
        while caster.client_count < 2:
            time.sleep(0.01)
        for t, frames in station_frames(cfg, eph):
            for f in frames:
                caster.publish(f)
            time.sleep(cfg.epoch_interval / args.speed)
        for th in threads:
            th.join()


if __name__ == "__main__":
    main()
