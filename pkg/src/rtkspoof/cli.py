"""Command-line entry point: run, caster, rover, attack-monitor, validate.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .metrics import CSV_HEADER, compute_metrics
from .ntrip import Caster, CorrectionClient, HandshakeRejected
from .scenario import (
    ConfigInvalid,
    ScenarioConfig,
    load_scenario,
    live_records,
    rover_session,
    run_scenario,
    shipped_scenario,
    station_frames,
    write_outputs,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        host, port = "127.0.0.1", text
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}") from None


def _scenario_path(text: str) -> Path:
    p = Path(text)
    if not p.exists() and shipped_scenario(text).exists():
        return shipped_scenario(text)  # bare names pick a shipped scenario
    return p


def cmd_validate(args) -> int:
    cfg = load_scenario(args.scenario)
    mode = cfg.attack.mode.value if cfg.attack else "no attack"
    print(f"ok: {cfg.name} ({cfg.n_epochs} epochs, {mode})")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_scenario(args.scenario)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = Path(args.csv) if args.csv else out / cfg.outputs.get("csv", f"{cfg.name}.csv")
    summary_path = Path(args.summary) if args.summary else out / cfg.outputs.get("summary", f"{cfg.name}_summary.json")
    t0 = time.perf_counter()
    res = run_scenario(cfg, transport=args.transport)
    write_outputs(cfg, res, csv_path, summary_path)
    s = res.attack_summary or res.summary
    label = "attack window" if res.attack_summary else "overall"
    print(
        f"{cfg.name}: {len(res.records)} epochs in {time.perf_counter() - t0:.1f} s; "
        f"{label}: fix_rate={s.fix_rate:.3f} fail_fraction={s.fail_fraction:.3f} "
        f"mean_3d={s.mean_3d:.3f} m rms_3d={s.rms_3d:.3f} m"
    )
    print(f"wrote {csv_path} and {summary_path}")
    return EXIT_OK


def cmd_caster(args) -> int:
    cfg = load_scenario(args.scenario)
    host, port = args.bind
    with Caster(host, port, cfg.mountpoint, auth_token=args.token, stall_timeout=args.stall_timeout) as caster:
        h, p = caster.address
        print(f"caster listening on {h}:{p}/{cfg.mountpoint}", flush=True)
        deadline = time.monotonic() + args.wait_timeout
        while caster.client_count < args.wait_clients:
            if time.monotonic() > deadline:
                print("error: clients did not connect in time", file=sys.stderr)
                return EXIT_RUNTIME
            time.sleep(0.01)
        dt = cfg.epoch_interval / args.speed if args.speed > 0 else 0.0
        start = time.monotonic()
        for k, (t, frames) in enumerate(station_frames(cfg)):
            if dt:
                time.sleep(max(0.0, start + k * dt - time.monotonic()))
            for f in frames:
                caster.publish(f)
        time.sleep(args.linger)
    return EXIT_OK


def _client(args) -> CorrectionClient:
    return CorrectionClient(args.address, args.mountpoint, token=args.token, max_retries=args.retries)


def cmd_rover(args) -> int:
    cfg = load_scenario(args.scenario)
    session = rover_session(cfg, "rover")
    client = _client(args)
    sink = open(args.csv, "w", encoding="utf-8", newline="") if args.csv else sys.stdout
    try:
        sink.write(CSV_HEADER + "\n")
        for rec in live_records(client, session, args.epochs):
            sink.write(rec.csv_row() + "\n")
            sink.flush()
    finally:
        client.close()
        if sink is not sys.stdout:
            sink.close()
    return EXIT_OK


def cmd_attack_monitor(args) -> int:
    cfg = load_scenario(args.scenario)
    session = rover_session(cfg, "monitor")
    client = _client(args)
    recs = []
    last = None
    try:
        for rec in live_records(client, session, args.epochs):
            recs.append(rec)
            if rec.status is not last:
                print(f"t={rec.t:.1f} status {rec.status.name} err_3d={rec.error_3d:.3f} m n_sats={rec.n_sats}", flush=True)
                last = rec.status
    except KeyboardInterrupt:
        pass
    finally:
        client.close()
    if recs:
        print(json.dumps(compute_metrics(recs).to_dict(), sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rtkspoof", description="RTK reference-station attack simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario, write per-epoch CSV and a JSON summary")
    p.add_argument("scenario", type=_scenario_path)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--csv", help="per-epoch CSV path (overrides the scenario's outputs)")
    p.add_argument("--summary", help="summary JSON path")
    p.add_argument("--transport", choices=["inprocess", "tcp"], default="inprocess")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("caster", help="serve the scenario's station corrections over TCP")
    p.add_argument("scenario", type=_scenario_path)
    p.add_argument("--bind", type=_address, default=("127.0.0.1", 2101), metavar="HOST:PORT")
    p.add_argument("--token", help="require this bearer token")
    p.add_argument("--speed", type=float, default=1.0, help="time multiplier; 0 publishes as fast as possible")
    p.add_argument("--wait-clients", type=int, default=0, help="hold the first epoch until N clients joined")
    p.add_argument("--wait-timeout", type=float, default=60.0)
    p.add_argument("--stall-timeout", type=float, default=5.0)
    p.add_argument("--linger", type=float, default=1.0, help="seconds to keep serving after the last epoch")
    p.set_defaults(func=cmd_caster)

    for name, func, hlp in (
        ("rover", cmd_rover, "standalone rover: correction client plus RTK solver"),
        ("attack-monitor", cmd_attack_monitor, "attacker-owned rover reporting what victims see"),
    ):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("address", type=_address, metavar="HOST:PORT")
        p.add_argument("mountpoint")
        p.add_argument("--token")
        p.add_argument("--scenario", type=_scenario_path, default=shipped_scenario("nominal"),
                       help="scenario providing constellation, atmosphere and receiver setup")
        p.add_argument("--epochs", type=int, help="stop after N solved epochs")
        p.add_argument("--retries", type=int, default=5)
        if name == "rover":
            p.add_argument("--csv", help="write records here instead of stdout")
        p.set_defaults(func=func)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario", type=_scenario_path)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigInvalid as e:
        print(f"config error in {args.scenario if hasattr(args, 'scenario') else 'scenario'}:", file=sys.stderr)
        for err in e.errors:
            print(f"  {err}", file=sys.stderr)
        return EXIT_CONFIG
    except HandshakeRejected as e:
        print(f"error: caster rejected the handshake: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, RuntimeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
