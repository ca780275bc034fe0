"""farmctl command line: sim | run | train | experiment-germination | replay.

Exit codes are a stable contract: 0 success, 1 runtime failure, 2 usage or
validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import time
from dataclasses import replace

from . import chamber
from . import compensation as comp
from .api import ApiServer, HubAdapter
from .control import RecipeError
from .datastore import replay_file
from .runtime import (
    ConfigError,
    Daemon,
    DaemonConfig,
    ReplaySource,
    run_germination_experiment,
)
from .telemetry import Channel

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _install_signal_handlers(handler) -> None:
    # only possible from the main thread; threaded callers manage their own
    # shutdown
    try:
        signal.signal(signal.SIGTERM, handler)
        signal.signal(signal.SIGINT, handler)
    except ValueError:
        pass


def cmd_sim(args) -> int:
    try:
        spec = chamber.ScenarioSpec.load(args.scenario)
    except FileNotFoundError:
        print(f"scenario file not found: {args.scenario}", file=sys.stderr)
        return EXIT_USAGE
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"bad scenario {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.duration is not None:
        spec = replace(spec, duration_s=args.duration)
    if args.dt is not None:
        spec = replace(spec, dt_s=args.dt)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)

    try:
        trace = chamber.run_scenario(spec)
    except chamber.ScenarioError as exc:
        print(f"scenario failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    with open(args.out, "w", encoding="utf-8") as fh:
        trace.dump_jsonl(fh)
    final = trace.final_state
    print(f"wrote {len(trace.entries)} samples to {args.out}")
    print(
        "final state: "
        f"t_air={final.t_air:.3f}C t_soil={final.t_soil:.3f}C rh={final.rh:.2f}% "
        f"co2={final.co2:.1f}ppm moisture={final.moisture:.2f}% ph={final.ph_true:.3f} "
        f"lux={final.lux:.0f}"
    )
    print(f"clamp violations: {trace.clamp_events}")
    return EXIT_OK


def cmd_train(args) -> int:
    if args.samples < 100:
        print("--samples must be at least 100 per channel", file=sys.stderr)
        return EXIT_USAGE

    sweep = comp.CalibrationSweep.default(samples_per_channel=args.samples)
    data = comp.generate_calibration(sweep, seed=args.seed)
    # held-out evaluation grid: offset from the training grid, fresh noise
    eval_sweep = comp.CalibrationSweep.default(
        samples_per_channel=max(100, args.samples // 10),
        t_amb_lo=comp.T_AMB_RANGE[0] + 0.37,
        t_amb_hi=comp.T_AMB_RANGE[1] - 0.13,
    )
    eval_data = comp.generate_calibration(eval_sweep, seed=args.seed + 1)

    hyper = comp.TrainHyper(
        lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed, val_fraction=args.val_fraction
    )
    models: comp.ModelSuite = {}
    reports = {}
    rows = []
    for ch in Channel:
        try:
            model, report = comp.train(data[ch], hyper)
        except comp.TrainingDiverged as exc:
            print(f"training diverged on {ch.value}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        models[ch] = model
        reports[ch.value] = report.to_json()
        stats = comp.compensation_errors(model, eval_data[ch])
        rows.append(
            {
                "channel": ch.value,
                "raw_worst_pct": 100 * stats["raw_worst"],
                "raw_mean_pct": 100 * stats["raw_mean"],
                "corrected_mean_pct": 100 * stats["corrected_mean"],
                "best_val_mse": report.best_val_mse,
                "monotone": report.monotone_descent,
            }
        )

    comp.dump_models(models, args.out)
    report_path = args.out + ".report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(reports, separators=(",", ":"), sort_keys=True))
        fh.write("\n")

    if args.json:
        print(json.dumps({"model_path": args.out, "channels": rows}))
    else:
        print(f"wrote {len(models)} channel models to {args.out} (reports: {report_path})")
        print(f"{'channel':<16}{'raw worst %':>12}{'raw mean %':>12}{'comp mean %':>13}{'val mse':>12}")
        for row in rows:
            print(
                f"{row['channel']:<16}{row['raw_worst_pct']:>12.2f}{row['raw_mean_pct']:>12.2f}"
                f"{row['corrected_mean_pct']:>13.3f}{row['best_val_mse']:>12.2e}"
            )
    return EXIT_OK


def cmd_experiment_germination(args) -> int:
    models = None
    if args.model:
        try:
            models = comp.load_models(args.model)
        except FileNotFoundError:
            print(f"model file not found: {args.model}", file=sys.stderr)
            return EXIT_USAGE
    report = run_germination_experiment(args.lux, seed=args.seed, models=models, hours=args.hours)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(report, separators=(",", ":"), sort_keys=True))
            fh.write("\n")
    if args.json:
        print(json.dumps(report))
    else:
        print(f"germination experiment: lux target {args.lux:.0f}, {args.hours:.0f} h, seed {args.seed}")
        print(f"mean photoperiod lux: {report['mean_photoperiod_lux']:.1f}")
        if report["mean_lux_relative_error"] is not None:
            print(f"relative error vs target: {100 * report['mean_lux_relative_error']:.2f}%")
        if report["unreachable_setpoint"]:
            print("WARNING: setpoint unreachable, duty saturated at 1.0")
        print("in-band fractions:")
        for ch, frac in report["in_band_fractions"].items():
            print(f"  {ch:<16}{100 * frac:>7.2f}%")
        print(f"chatter violations: {report['chatter_violations']}")
        fc = report["forecast"]
        print(
            f"forecast: stage {fc['stage']}, yield factor {fc['yield_factor']:.3f}, "
            f"days to harvest {fc['days_to_harvest']:.1f}"
        )
    return EXIT_OK


def cmd_run(args) -> int:
    config_path = args.config or os.environ.get("FARMCTL_CONFIG")
    if config_path:
        try:
            config = DaemonConfig.load(config_path)
        except ConfigError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_USAGE
    else:
        config = DaemonConfig()
    if args.embedded_sim:
        config.bus_endpoint = None
    if args.bind:
        config.api_bind = args.bind
    if args.data_dir:
        config.data_dir = args.data_dir

    if config.recipe_path and not os.path.exists(config.recipe_path):
        print(f"recipe file not found: {config.recipe_path}", file=sys.stderr)
        return EXIT_USAGE

    try:
        daemon = Daemon(config)
    except RecipeError as exc:
        print(f"bad recipe: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        return EXIT_USAGE

    api = ApiServer(HubAdapter(daemon=daemon), bind=config.api_bind, ui_dir=config.ui_dir).start()
    print(f"farmctl running: api at {api.endpoint}, data in {config.data_dir}", flush=True)

    def on_signal(signum, frame):
        daemon.stop()

    _install_signal_handlers(on_signal)
    try:
        daemon.run(pace_s=args.pace, max_ticks=args.max_ticks)
    finally:
        api.stop()
        daemon.shutdown()
        print("farmctl stopped, logs flushed")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        lines = list(replay_file(args.log))
    except FileNotFoundError:
        print(f"log file not found: {args.log}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"malformed log {args.log}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not lines:
        print(f"log is empty: {args.log}", file=sys.stderr)
        return EXIT_USAGE
    if "state" in lines[0]:
        records = ReplaySource.trace_to_records(lines)
    else:
        records = lines

    try:
        source = ReplaySource(records, speed=args.speed)
    except ValueError as exc:
        print(f"cannot replay {args.log}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    api = ApiServer(HubAdapter(replay=source), bind=args.bind, ui_dir=args.ui_dir).start()
    print(f"replaying {args.log} at {args.speed}x: api at {api.endpoint}", flush=True)

    stop = {"flag": False}

    def on_signal(signum, frame):
        stop["flag"] = True

    _install_signal_handlers(on_signal)
    try:
        deadline = None
        if args.max_seconds:
            deadline = time.monotonic() + args.max_seconds
        while not stop["flag"]:
            time.sleep(0.1)
            if deadline and time.monotonic() >= deadline:
                break
    finally:
        api.stop()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="farmctl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="run a chamber scenario and write a JSONL trace")
    p.add_argument("scenario", help="scenario spec JSON file")
    p.add_argument("-o", "--out", default="trace.jsonl")
    p.add_argument("--duration", type=int, help="override duration_s")
    p.add_argument("--dt", type=float, help="override dt_s")
    p.add_argument("--seed", type=int, help="override seed")
    p.set_defaults(fn=cmd_sim)

    p = sub.add_parser("run", help="run the closed-loop daemon with the HTTP API")
    p.add_argument("--config", help="farmctl.json (or FARMCTL_CONFIG)")
    p.add_argument("--embedded-sim", action="store_true", help="drive the in-process chamber simulator")
    p.add_argument("--bind", help="override api bind address")
    p.add_argument("--data-dir", help="override datastore directory")
    p.add_argument("--pace", type=float, default=1.0, help="seconds of wall time per tick (0 = flat out)")
    p.add_argument("--max-ticks", type=int, help="stop after N ticks (testing aid)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("train", help="generate calibration data and train compensation models")
    p.add_argument("--samples", type=int, default=10000, help="samples per channel")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="model.json")
    p.add_argument("--json", action="store_true", help="machine-readable stdout")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("experiment-germination", help="24h closed-loop germination illumination experiment")
    p.add_argument("--lux", type=float, default=3500.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hours", type=float, default=24.0)
    p.add_argument("--model", help="compensation model file to run with")
    p.add_argument("--out", help="write the report JSON here")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_experiment_germination)

    p = sub.add_parser("replay", help="re-serve a recorded log through the API")
    p.add_argument("log", help="telemetry or trace JSONL file")
    p.add_argument("--speed", type=float, default=60.0)
    p.add_argument("--bind", default="127.0.0.1:8642")
    p.add_argument("--ui-dir", help="static UI bundle to serve at /")
    p.add_argument("--max-seconds", type=float, help="stop after this much wall time (testing aid)")
    p.set_defaults(fn=cmd_replay)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FARMCTL_LOGLEVEL", "WARNING"))
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
