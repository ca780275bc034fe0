"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
Tolerances are pinned here, not configurable.
"""

import functools
import json
import random
import threading
import time

import numpy as np
import requests

from farmctl import compensation as comp
from farmctl.bus import (
    BusClient,
    ChamberBackend,
    InfoCommand,
    InProcessClient,
    PingCommand,
    ReadCommand,
    SetCommand,
    dispatch_line,
    encode_command,
    parse_command,
    parse_response,
    serve,
)
from farmctl.chamber import (
    AmbientConditions,
    AmbientProfileSpec,
    ChamberState,
    PlantStage,
    ScenarioSpec,
    default_sensor_params,
    run_scenario,
    sense,
    step,
)
from farmctl.cli import main
from farmctl.control import default_recipe
from farmctl.datastore import DataStore, downsample
from farmctl.runtime import ClosedLoopController, Daemon, DaemonConfig
from farmctl.telemetry import Actuator, ActuatorCommandSet, Channel

from test_chamber import DORMANT, NOMINAL_STATE, euler_reference, heater_closed_form
from test_cli import write_scenario
from test_compensation import assert_grads_close, fd_gradient, rand_batch, rand_model


def criterion(number, title):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"\n[criterion {number}] {title}: FAIL", flush=True)
                raise
            print(f"\n[criterion {number}] {title}: PASS", flush=True)

        return wrapper

    return decorate


def cmd(t=0, **levels):
    base = {a: 0.0 for a in Actuator}
    base.update({Actuator(k): float(v) for k, v in levels.items()})
    return ActuatorCommandSet(base, t)


@criterion(1, "sensor error reproduction (2% stable / >10% pH drift)")
def test_criterion_1_sensor_error_reproduction():
    params = default_sensor_params()
    # (a) 99th-percentile relative error per channel <= 2% at 25 degC
    rng = random.Random(20240901)
    amb = AmbientConditions(t_amb=25.0)
    errs = {ch: [] for ch in Channel}
    for _ in range(10000):
        rs = sense(NOMINAL_STATE, params, amb, rng)
        for ch in Channel:
            truth = NOMINAL_STATE.truth(ch)
            errs[ch].append(abs(rs.value(ch) - truth) / truth)
    for ch in Channel:
        p99 = float(np.percentile(errs[ch], 99))
        assert p99 <= 0.02, f"{ch.value} p99 {p99:.4f} > 2%"

    # (b) pH raw relative bias exceeds 10% at 40 degC ambient
    amb40 = AmbientConditions(t_amb=40.0)
    ph_errs = []
    for _ in range(1000):
        rs = sense(NOMINAL_STATE, params, amb40, rng)
        ph_errs.append((rs.value(Channel.PH) - 6.5) / 6.5)
    mean_bias = sum(ph_errs) / len(ph_errs)
    assert mean_bias > 0.10, f"pH bias {mean_bias:.4f} <= 10%"


@criterion(2, "compensation: post-training mean |rel err| < 2% per channel")
def test_criterion_2_compensation_efficacy():
    started = time.monotonic()
    sweep = comp.CalibrationSweep.default(samples_per_channel=10000)
    data = comp.generate_calibration(sweep, seed=11)
    eval_sweep = comp.CalibrationSweep.default(
        samples_per_channel=1000,
        t_amb_lo=comp.T_AMB_RANGE[0] + 0.37,
        t_amb_hi=comp.T_AMB_RANGE[1] - 0.13,
    )
    eval_data = comp.generate_calibration(eval_sweep, seed=12)

    hyper = comp.TrainHyper()  # the documented defaults: lr 0.01, 200 epochs, batch 32
    for ch in Channel:
        model, report = comp.train(data[ch], hyper)
        stats = comp.compensation_errors(model, eval_data[ch])
        assert stats["corrected_mean"] < 0.02, f"{ch.value}: corrected mean {stats['corrected_mean']:.4f}"
        if ch is Channel.PH:
            assert stats["raw_worst"] > 0.10, f"pH raw worst {stats['raw_worst']:.4f} <= 10%"
    elapsed = time.monotonic() - started
    assert elapsed < 120, f"took {elapsed:.0f}s, budget 120s"


@criterion(3, "analytic gradients match finite differences (1e-4 rel)")
def test_criterion_3_gradient_correctness():
    for seed in range(100):
        model = rand_model(seed)
        batch = rand_batch(seed + 5000, n=4)
        analytic, _ = comp.gradient(model, batch)
        numeric = fd_gradient(model, batch)
        assert_grads_close(analytic, numeric, rel_tol=1e-4, abs_floor=1e-7)


@criterion(4, "germination experiment holds 3500 lux within 2%, no chatter")
def test_criterion_4_germination_experiment(capsys):
    started = time.monotonic()
    code = main(["experiment-germination", "--lux", "3500", "--json"])
    out = capsys.readouterr().out
    elapsed = time.monotonic() - started
    assert code == 0
    report = json.loads(out)
    assert abs(report["mean_photoperiod_lux"] - 3500.0) <= 0.02 * 3500.0
    assert report["chatter_violations"]["air_temp"] == 0
    assert report["chatter_violations"]["soil_temp"] == 0
    assert elapsed < 30, f"took {elapsed:.0f}s, budget 30s"


@criterion(5, "closed-loop hold and flowering pollination schedule")
def test_criterion_5_closed_loop_hold():
    started = time.monotonic()

    # (a) ambient 15 const, setpoint 24 +- 0.5: t_air in [23.3, 24.7] after 2h
    controller = ClosedLoopController(default_recipe())
    spec = ScenarioSpec(
        duration_s=86400,
        seed=5,
        ambient=AmbientProfileSpec(mean_c=15.0, amp_c=0.0),
        initial_state=ChamberState(t_air=15.0, t_soil=15.0),
    )
    trace = run_scenario(spec, controller=controller)
    for entry in trace.entries:
        if entry.t >= 7200:
            assert 23.3 <= entry.state.t_air <= 24.7, f"t={entry.t}: t_air {entry.state.t_air:.3f}"

    # (b) flowering: exactly pulses_per_day fan pulses, all in the photoperiod
    recipe = default_recipe()
    controller = ClosedLoopController(recipe, initial_stage=PlantStage.FLOWERING)
    spec = ScenarioSpec(
        duration_s=86400,
        seed=6,
        ambient=AmbientProfileSpec(mean_c=20.0, amp_c=3.0),
        initial_state=ChamberState(co2=420.0),
        stage=PlantStage.FLOWERING,
    )
    trace = run_scenario(spec, controller=controller)
    fan = [e.cmd[Actuator.FAN] for e in trace.entries]
    pulses = []
    for i in range(len(fan)):
        if fan[i] == 1.0 and (i == 0 or fan[i - 1] == 0.0):
            start = i
        if fan[i] == 1.0 and (i == len(fan) - 1 or fan[i + 1] == 0.0):
            pulses.append((start, i))
    plan = recipe[PlantStage.FLOWERING]
    assert len(pulses) == plan.pollination.pulses_per_day, f"pulses: {pulses}"
    for start, end in pulses:
        assert plan.photoperiod.active(start % 86400)
        assert plan.photoperiod.active(end % 86400)

    elapsed = time.monotonic() - started
    assert elapsed < 60, f"took {elapsed:.0f}s, budget 60s"


@criterion(6, "physics oracle: Euler vs fine reference, clamps under fuzz")
def test_criterion_6_physics_oracle():
    # (a) 20 random piecewise-constant heater schedules, <= 100 switch points
    rng = random.Random(66)
    for schedule_i in range(20):
        n_seg = rng.randint(2, 100)
        cuts = sorted(rng.sample(range(1, 86400), n_seg - 1))
        bounds = [0] + cuts + [86400]
        schedule = [(bounds[i + 1] - bounds[i], rng.random()) for i in range(n_seg)]
        _, ref_at = euler_reference(18.0, 12.0, schedule, dt_fine=0.01)
        state = ChamberState(t_air=18.0, t_soil=18.0, moisture=0.0)
        amb = AmbientConditions(t_amb=12.0)
        t = 0
        check_at = set(bounds) | set(range(0, 86401, 3600))
        for duration, duty in schedule:
            for _ in range(duration):
                state = step(state, cmd(air_heater=duty), amb, PlantStage.GERMINATION, 1.0, DORMANT)
                t += 1
                if t in check_at:
                    diff = abs(state.t_air - ref_at(t))
                    assert diff < 0.05, f"schedule {schedule_i} t={t}: diff {diff:.4f}"

    # (b) closed-form heater step within 0.02 degC
    state = ChamberState(t_air=15.0, t_soil=15.0, moisture=0.0)
    amb = AmbientConditions(t_amb=15.0)
    for t in range(86400):
        state = step(state, cmd(air_heater=1), amb, PlantStage.GERMINATION, 1.0, DORMANT)
        if (t + 1) % 3600 == 0:
            expect = heater_closed_form(t + 1, 15.0, 15.0, 1.0)
            assert abs(state.t_air - expect) < 0.02

    # (c) clamp invariants over 1e5 random-actuation steps
    rng = random.Random(67)
    state = ChamberState(rh=99.5, moisture=99.5, co2=5.0)
    amb = AmbientConditions(t_amb=35.0, rh_amb=95.0)
    for t in range(100000):
        levels = {
            Actuator.AIR_HEATER: rng.random(),
            Actuator.SOIL_HEATER: rng.random(),
            Actuator.FAN: float(rng.random() < 0.5),
            Actuator.PUMP: float(rng.random() < 0.5),
            Actuator.HUMIDIFIER: float(rng.random() < 0.5),
            Actuator.LED: rng.random(),
        }
        state = step(state, ActuatorCommandSet(levels, t), amb, PlantStage.FLOWERING, 1.0, rng=rng)
        assert 0.0 <= state.rh <= 100.0
        assert 0.0 <= state.moisture <= 100.0
        assert state.co2 >= 0.0


@criterion(7, "protocol robustness: fuzz round trips, transport transparency")
def test_criterion_7_protocol_robustness():
    # (a) 1e5 round-trip fuzz cases
    rng = random.Random(777)
    channels, actuators = list(Channel), list(Actuator)
    for _ in range(100000):
        roll = rng.random()
        if roll < 0.4:
            c = ReadCommand(rng.choice(channels))
        elif roll < 0.8:
            actuator = rng.choice(actuators)
            level = float(rng.choice([0, 1])) if actuator.is_binary else rng.random()
            c = SetCommand(actuator, level)
        elif roll < 0.9:
            c = PingCommand()
        else:
            c = InfoCommand()
        line = encode_command(c)
        assert parse_command(line) == c
        assert encode_command(parse_command(line)) == line

    # (b) parser survives arbitrary byte lines
    backend = ChamberBackend(seed=3)
    lock = threading.Lock()
    for _ in range(20000):
        raw = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 128)))
        line = raw.decode("utf-8", "replace")
        out = dispatch_line(backend, line, lock)
        assert out.startswith(("OK", "ERR"))
        parse_response(out)
        parse_response(line)

    # (c) in-process vs socket traces identical under fixed seed
    def script(client):
        out = []
        out.append(client.poll_all(0))
        client.set(Actuator.LED, 0.175)
        client.set(Actuator.FAN, 1.0)
        out.append(client.info())
        out.append(client.poll_all(1))
        return out

    local = InProcessClient(ChamberBackend(seed=99))
    server = serve(ChamberBackend(seed=99))
    try:
        with BusClient(server.endpoint) as remote:
            local_out = script(local)
            remote_out = script(remote)
    finally:
        server.stop()
    for a, b in zip(local_out, remote_out):
        if hasattr(a, "readings"):
            assert all(a.value(ch) == b.value(ch) for ch in Channel)
        else:
            assert a == b


@criterion(8, "determinism: byte-identical outputs under fixed seeds")
def test_criterion_8_determinism(tmp_path):
    scenario = write_scenario(tmp_path / "eq.json", duration_s=60)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"trace-{name}.jsonl"
        assert main(["sim", str(scenario), "-o", str(out), "--seed", "4"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1], "sim traces differ"

    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"model-{name}.json"
        assert main(["train", "--samples", "150", "--epochs", "2", "--seed", "9", "--out", str(out)]) == 0
        outs.append((out.read_bytes(), (tmp_path / f"model-{name}.json.report.json").read_bytes()))
    assert outs[0] == outs[1], "train outputs differ"

    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"exp-{name}.json"
        assert main([
            "experiment-germination", "--lux", "3500", "--hours", "2", "--seed", "2", "--out", str(out),
        ]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1], "experiment reports differ"


@criterion(9, "datastore round-trip and API/store history equality")
def test_criterion_9_datastore_round_trip(tmp_path):
    from test_datastore import random_record

    rng = random.Random(909)
    store = DataStore(tmp_path / "big")
    records = []
    t = 0
    for _ in range(100000):
        t += rng.randint(0, 2)
        rec = random_record(rng, t)
        records.append(rec)
        store.append(rec)
    store.close()
    assert DataStore(tmp_path / "big").replay_all() == records

    # API history equals datastore query + downsample on a live fixture
    daemon = Daemon(DaemonConfig(data_dir=str(tmp_path / "daemon-data")))
    from farmctl.api import ApiServer, HubAdapter

    server = ApiServer(HubAdapter(daemon=daemon), bind="127.0.0.1:0").start()
    try:
        for _ in range(40):
            daemon.tick_once()
        r = requests.get(
            server.endpoint + "/api/history",
            params={"channel": "co2", "from": 0, "to": 40, "bucket": 4},
        )
        got = [(int(a), b) for a, b in r.json()["points"]]
        expect = downsample(daemon.store.query("reading", "co2", 0, 40, "corrected"), 4)
        assert got == expect
    finally:
        server.stop()
        daemon.shutdown()
