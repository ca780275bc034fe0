"""Per-channel correction of temperature-induced sensor error.

Each channel gets a small feed-forward network (2 inputs: normalized raw
value and ambient temperature; one tanh hidden layer of 8; linear scalar
output) predicting the relative bias c of the transducer. Readings are
corrected by raw / (1 + c), which makes the zero-parameter network an exact
identity. Training is plain mini-batch gradient descent with hand-written
backprop; gradients are checked against finite differences in the tests.

The yield/availability forecast lives here too: it turns per-stage in-band
statistics into a stress index, a relative yield factor, and a
days-to-harvest estimate.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

import numpy as np

from .chamber import PlantStage, SensorParams, default_sensor_params, transduce
from .telemetry import (
    CONTROLLED_CHANNELS,
    Channel,
    Quality,
    Reading,
    channel_meta,
)

HIDDEN_WIDTH = 8


class TrainingDiverged(Exception):
    """Loss went non-finite; the partial report rides along."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class Layer:
    w: list[list[float]]     # out x in
    b: list[float]
    act: str = "tanh"        # "tanh" or "linear"

    def to_json(self) -> dict:
        return {"w": self.w, "b": self.b, "act": self.act}

    @staticmethod
    def from_json(obj: dict) -> "Layer":
        return Layer([list(map(float, row)) for row in obj["w"]], list(map(float, obj["b"])), obj["act"])


@dataclass
class CompModel:
    """One channel's compensation network plus its input normalization."""

    channel: Channel
    norm_mean: tuple[float, float]    # (raw, t_amb)
    norm_scale: tuple[float, float]   # > 0
    layers: list[Layer]

    def __post_init__(self):
        if any(s <= 0 for s in self.norm_scale):
            raise ValueError("normalization scales must be positive")
        for layer in self.layers:
            for row in layer.w:
                if not all(math.isfinite(v) for v in row):
                    raise ValueError("non-finite weight")
            if not all(math.isfinite(v) for v in layer.b):
                raise ValueError("non-finite bias")

    def to_json(self) -> dict:
        return {
            "channel": self.channel.value,
            "norm": {"mean": list(self.norm_mean), "scale": list(self.norm_scale)},
            "layers": [layer.to_json() for layer in self.layers],
        }

    @staticmethod
    def from_json(obj: dict) -> "CompModel":
        return CompModel(
            channel=Channel(obj["channel"]),
            norm_mean=tuple(float(v) for v in obj["norm"]["mean"]),
            norm_scale=tuple(float(v) for v in obj["norm"]["scale"]),
            layers=[Layer.from_json(l) for l in obj["layers"]],
        )


def zero_model(channel: Channel) -> CompModel:
    """All weights and biases zero: forward is the identity correction."""
    return CompModel(
        channel=channel,
        norm_mean=(0.0, 25.0),
        norm_scale=(1.0, 1.0),
        layers=[
            Layer([[0.0, 0.0] for _ in range(HIDDEN_WIDTH)], [0.0] * HIDDEN_WIDTH, "tanh"),
            Layer([[0.0] * HIDDEN_WIDTH], [0.0], "linear"),
        ],
    )


def predict_bias(model: CompModel, raw: float, t_amb: float) -> float:
    """Network output: the predicted relative bias of this raw reading."""
    x = [
        (raw - model.norm_mean[0]) / model.norm_scale[0],
        (t_amb - model.norm_mean[1]) / model.norm_scale[1],
    ]
    for layer in model.layers:
        out = []
        for row, bias in zip(layer.w, layer.b):
            z = bias
            for wij, xj in zip(row, x):
                z += wij * xj
            out.append(math.tanh(z) if layer.act == "tanh" else z)
        x = out
    return x[0]


def forward(model: CompModel, raw: float, t_amb: float) -> Reading:
    """Correct one raw value: raw / (1 + predicted bias), clamped to the
    channel's plausible range.

    Returns quality CORRECTED; a non-finite input or a correction that had to
    be clamped comes back as FAULT (the value is the boundary, untrusted).
    """
    _, lo, hi = channel_meta(model.channel)
    if not (math.isfinite(raw) and math.isfinite(t_amb)):
        return Reading(model.channel, float("nan"), 0, Quality.FAULT)
    c = predict_bias(model, raw, t_amb)
    denom = 1.0 + c
    if abs(denom) < 1e-9:
        return Reading(model.channel, float("nan"), 0, Quality.FAULT)
    corrected = raw / denom
    if corrected < lo:
        return Reading(model.channel, lo, 0, Quality.FAULT)
    if corrected > hi:
        return Reading(model.channel, hi, 0, Quality.FAULT)
    return Reading(model.channel, corrected, 0, Quality.CORRECTED)


@dataclass(frozen=True)
class CalibSample:
    channel: Channel
    raw: float
    t_amb: float
    truth: float


# ---------------------------------------------------------------------------
# numpy views used by training; the JSON lists in CompModel stay the source
# of truth so that files round-trip exactly.

def _to_arrays(model: CompModel):
    return [(np.asarray(l.w, dtype=np.float64), np.asarray(l.b, dtype=np.float64), l.act) for l in model.layers]


def _from_arrays(model: CompModel, arrays) -> CompModel:
    layers = [Layer([[float(v) for v in row] for row in w], [float(v) for v in b], act) for w, b, act in arrays]
    return CompModel(model.channel, model.norm_mean, model.norm_scale, layers)


def _forward_batch(arrays, x: np.ndarray):
    """x: n x 2 normalized inputs. Returns (activations per layer, output n)."""
    acts = [x]
    for w, b, act in arrays:
        z = acts[-1] @ w.T + b
        acts.append(np.tanh(z) if act == "tanh" else z)
    return acts, acts[-1][:, 0]


def _mse(arrays, x: np.ndarray, target: np.ndarray) -> float:
    _, y = _forward_batch(arrays, x)
    return float(np.mean((y - target) ** 2))


def _normalize(model: CompModel, raws: np.ndarray, t_ambs: np.ndarray) -> np.ndarray:
    m, s = model.norm_mean, model.norm_scale
    return np.stack([(raws - m[0]) / s[0], (t_ambs - m[1]) / s[1]], axis=1)


def gradient(model: CompModel, batch: list[CalibSample]):
    """Analytic MSE gradients over a batch via backprop.

    Loss: mean((c_hat - c*)^2) with c* = raw/truth - 1. Returns
    (grads, loss) where grads mirrors model.layers as (dw, db) arrays.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    raws = np.array([s.raw for s in batch])
    t_ambs = np.array([s.t_amb for s in batch])
    target = raws / np.array([s.truth for s in batch]) - 1.0
    x = _normalize(model, raws, t_ambs)
    arrays = _to_arrays(model)
    return _gradient_arrays(arrays, x, target)


def _gradient_arrays(arrays, x: np.ndarray, target: np.ndarray):
    # overflow here just means training is diverging; the caller checks loss
    with np.errstate(over="ignore", invalid="ignore"):
        acts, y = _forward_batch(arrays, x)
        n = x.shape[0]
        loss = float(np.mean((y - target) ** 2))
        delta = (2.0 / n) * (y - target)[:, None]   # d loss / d output
        grads = [None] * len(arrays)
        for i in reversed(range(len(arrays))):
            w, b, act = arrays[i]
            a_in, a_out = acts[i], acts[i + 1]
            if act == "tanh":
                delta = delta * (1.0 - a_out ** 2)
            dw = delta.T @ a_in
            db = delta.sum(axis=0)
            grads[i] = (dw, db)
            if i > 0:
                delta = delta @ w
    return grads, loss


@dataclass
class TrainHyper:
    lr: float = 0.01
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    val_fraction: float = 0.2


@dataclass
class TrainReport:
    epochs_run: int
    final_train_mse: float
    final_val_mse: float
    best_val_mse: float
    best_epoch: int
    train_curve: list[float] = field(default_factory=list)
    val_curve: list[float] = field(default_factory=list)
    monotone_descent: bool = True

    def to_json(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "final_train_mse": self.final_train_mse,
            "final_val_mse": self.final_val_mse,
            "best_val_mse": self.best_val_mse,
            "best_epoch": self.best_epoch,
            "train_curve": self.train_curve,
            "val_curve": self.val_curve,
            "monotone_descent": self.monotone_descent,
        }


def _init_model(channel: Channel, raws: np.ndarray, t_ambs: np.ndarray, rng: np.random.Generator) -> CompModel:
    def init(shape, fan_in):
        return rng.uniform(-0.5, 0.5, size=shape) / math.sqrt(fan_in)

    mean = (float(raws.mean()), float(t_ambs.mean()))
    scale = (max(float(raws.std()), 1e-9), max(float(t_ambs.std()), 1e-9))
    # The output layer starts at zero so an untrained net is the exact
    # identity correction; only the hidden layer draws random weights.
    layers = [
        Layer(init((HIDDEN_WIDTH, 2), 2).tolist(), init((HIDDEN_WIDTH,), 2).tolist(), "tanh"),
        Layer([[0.0] * HIDDEN_WIDTH], [0.0], "linear"),
    ]
    return CompModel(channel, mean, scale, layers)


def train(samples: list[CalibSample], hyper: TrainHyper = TrainHyper()) -> tuple[CompModel, TrainReport]:
    """Mini-batch gradient descent on one channel's samples.

    Deterministic given hyper.seed (init and shuffling both draw from it).
    Returns the parameters with the best validation MSE seen over the run.
    """
    if len(samples) < 100:
        raise ValueError(f"need at least 100 samples, got {len(samples)}")
    channels = {s.channel for s in samples}
    if len(channels) != 1:
        raise ValueError("train expects samples from exactly one channel")
    if not 0.0 < hyper.val_fraction <= 0.5:
        raise ValueError("val_fraction must be in (0, 0.5]")

    channel = samples[0].channel
    rng = np.random.default_rng(hyper.seed)
    raws = np.array([s.raw for s in samples])
    t_ambs = np.array([s.t_amb for s in samples])
    target = raws / np.array([s.truth for s in samples]) - 1.0

    order = rng.permutation(len(samples))
    n_val = max(1, int(round(len(samples) * hyper.val_fraction)))
    val_idx, train_idx = order[:n_val], order[n_val:]

    model = _init_model(channel, raws[train_idx], t_ambs[train_idx], rng)
    x_all = _normalize(model, raws, t_ambs)
    x_train, y_train = x_all[train_idx], target[train_idx]
    x_val, y_val = x_all[val_idx], target[val_idx]

    arrays = _to_arrays(model)
    best = [(w.copy(), b.copy(), act) for w, b, act in arrays]
    best_val = _mse(arrays, x_val, y_val)
    best_epoch = 0
    train_curve: list[float] = []
    val_curve: list[float] = []
    monotone = True

    n_train = len(train_idx)
    for epoch in range(hyper.epochs):
        perm = rng.permutation(n_train)
        for start in range(0, n_train, hyper.batch_size):
            sel = perm[start : start + hyper.batch_size]
            grads, loss = _gradient_arrays(arrays, x_train[sel], y_train[sel])
            if not math.isfinite(loss):
                report = _report(train_curve, val_curve, best_val, best_epoch, monotone)
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", report)
            arrays = [
                (w - hyper.lr * dw, b - hyper.lr * db, act)
                for (w, b, act), (dw, db) in zip(arrays, grads)
            ]
        train_mse = _mse(arrays, x_train, y_train)
        val_mse = _mse(arrays, x_val, y_val)
        if not (math.isfinite(train_mse) and math.isfinite(val_mse)):
            report = _report(train_curve, val_curve, best_val, best_epoch, monotone)
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}", report)
        if train_curve and train_mse > train_curve[-1]:
            monotone = False
        train_curve.append(train_mse)
        val_curve.append(val_mse)
        if val_mse < best_val:
            best_val = val_mse
            best_epoch = epoch + 1
            best = [(w.copy(), b.copy(), act) for w, b, act in arrays]

    report = _report(train_curve, val_curve, best_val, best_epoch, monotone)
    return _from_arrays(model, best), report


def _report(train_curve, val_curve, best_val, best_epoch, monotone) -> TrainReport:
    return TrainReport(
        epochs_run=len(train_curve),
        final_train_mse=train_curve[-1] if train_curve else float("inf"),
        final_val_mse=val_curve[-1] if val_curve else float("inf"),
        best_val_mse=best_val,
        best_epoch=best_epoch,
        train_curve=train_curve,
        val_curve=val_curve,
        monotone_descent=monotone,
    )


# ---------------------------------------------------------------------------
# Calibration data generation (sweeps the simulator's transducer).

# Truth ranges for calibration sweeps: the operating band of each channel.
DEFAULT_TRUTH_RANGES: dict[Channel, tuple[float, float]] = {
    Channel.CO2: (300.0, 1500.0),
    Channel.AIR_TEMP: (12.0, 35.0),
    Channel.AIR_HUMIDITY: (35.0, 95.0),
    Channel.SOIL_TEMP: (12.0, 35.0),
    Channel.SOIL_MOISTURE: (25.0, 90.0),
    Channel.PH: (5.0, 8.0),
    Channel.ILLUMINATION: (4000.0, 20000.0),
    Channel.SOLAR_RADIATION: (35.0, 170.0),
}

T_AMB_RANGE = (10.0, 40.0)


def _grid(lo: float, hi: float, n: int) -> list[float]:
    if n == 1:
        return [(lo + hi) / 2.0]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


@dataclass
class CalibrationSweep:
    """t_amb grid x truth grid, per channel."""

    t_amb_grid: list[float]
    truth_grids: dict[Channel, list[float]]
    sensor_params: SensorParams = field(default_factory=default_sensor_params)

    @staticmethod
    def default(samples_per_channel: int = 10000, sensor_params: SensorParams | None = None,
                t_amb_lo: float = T_AMB_RANGE[0], t_amb_hi: float = T_AMB_RANGE[1]) -> "CalibrationSweep":
        n_t = max(2, int(round(math.sqrt(samples_per_channel))))
        n_truth = max(1, samples_per_channel // n_t)
        return CalibrationSweep(
            t_amb_grid=_grid(t_amb_lo, t_amb_hi, n_t),
            truth_grids={ch: _grid(*DEFAULT_TRUTH_RANGES[ch], n_truth) for ch in Channel},
            sensor_params=sensor_params or default_sensor_params(),
        )


def generate_calibration(sweep: CalibrationSweep, seed: int = 0) -> dict[Channel, list[CalibSample]]:
    """Run the sensor transducer at every grid point; deterministic per seed.

    Sampling order is channel-major then t_amb-major, which pins the rng
    stream.
    """
    if not sweep.t_amb_grid or not all(sweep.truth_grids.get(ch) for ch in sweep.truth_grids):
        raise ValueError("grids must be non-empty")
    rng = random.Random(seed)
    out: dict[Channel, list[CalibSample]] = {}
    for ch in Channel:
        if ch not in sweep.truth_grids:
            continue
        sensor = sweep.sensor_params[ch]
        samples = []
        for t_amb in sweep.t_amb_grid:
            for truth in sweep.truth_grids[ch]:
                raw = transduce(truth, sensor, t_amb, rng)
                samples.append(CalibSample(ch, raw, t_amb, truth))
        out[ch] = samples
    return out


def compensation_errors(model: CompModel, samples: list[CalibSample]) -> dict:
    """Raw vs corrected relative-error summary over an evaluation set."""
    raw_errs, corr_errs = [], []
    for s in samples:
        raw_errs.append(abs(s.raw - s.truth) / abs(s.truth))
        corrected = forward(model, s.raw, s.t_amb)
        corr_errs.append(abs(corrected.value - s.truth) / abs(s.truth))
    return {
        "raw_mean": sum(raw_errs) / len(raw_errs),
        "raw_worst": max(raw_errs),
        "corrected_mean": sum(corr_errs) / len(corr_errs),
        "corrected_worst": max(corr_errs),
    }


# ---------------------------------------------------------------------------
# Model suite (all 8 channels) persistence.

ModelSuite = dict[Channel, CompModel]


def dump_models(models: ModelSuite, path) -> None:
    objs = [models[ch].to_json() for ch in Channel if ch in models]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(objs, separators=(",", ":")))
        fh.write("\n")


def load_models(path) -> ModelSuite:
    with open(path, "r", encoding="utf-8") as fh:
        objs = json.load(fh)
    models = [CompModel.from_json(o) for o in objs]
    return {m.channel: m for m in models}


# ---------------------------------------------------------------------------
# Yield / availability forecast.

@dataclass
class StageHistory:
    """Per-stage, per-channel in-band bookkeeping for the 7 controlled
    channels. Totals and out-of-band counts; fractions drive the forecast,
    so duplicating every sample changes nothing."""

    counts: dict[PlantStage, dict[Channel, list[int]]] = field(default_factory=dict)

    def record(self, stage: PlantStage, channel: Channel, in_band: bool) -> None:
        if channel not in CONTROLLED_CHANNELS:
            return
        per_stage = self.counts.setdefault(stage, {ch: [0, 0] for ch in CONTROLLED_CHANNELS})
        per_stage[channel][0] += 1
        if not in_band:
            per_stage[channel][1] += 1

    def is_empty(self) -> bool:
        return not any(
            counts[ch][0] for counts in self.counts.values() for ch in CONTROLLED_CHANNELS
        )

    def stage_stress(self, stage: PlantStage) -> float:
        """Mean out-of-band fraction over the 7 controlled channels."""
        per_stage = self.counts.get(stage)
        if not per_stage:
            return 0.0
        fracs = []
        for ch in CONTROLLED_CHANNELS:
            total, out = per_stage[ch]
            fracs.append(out / total if total else 0.0)
        return sum(fracs) / len(fracs)


@dataclass
class ForecastReport:
    stage: PlantStage
    days_to_harvest: float
    yield_factor: float
    stress_by_stage: dict[PlantStage, float]
    low_confidence: bool = False

    def __post_init__(self):
        if not 0.0 <= self.yield_factor <= 1.0:
            raise ValueError("yield factor out of [0,1]")
        for stress in self.stress_by_stage.values():
            if not 0.0 <= stress <= 1.0:
                raise ValueError("stress out of [0,1]")

    def to_json(self) -> dict:
        return {
            "stage": self.stage.name.lower(),
            "days_to_harvest": self.days_to_harvest,
            "yield_factor": self.yield_factor,
            "stress_by_stage": {s.name.lower(): v for s, v in self.stress_by_stage.items()},
            "low_confidence": self.low_confidence,
        }


def forecast_yield(history: StageHistory, stage: PlantStage, elapsed_days: float) -> ForecastReport:
    """Stress per stage -> relative yield factor and days to harvest.

    elapsed_days counts time spent in the current stage. Yield multiplies
    (1 - stress) over completed and current stages; remaining time stretches
    by the current stage's stress.
    """
    stresses = {s: history.stage_stress(s) for s in PlantStage if s.order <= stage.order}
    yield_factor = 1.0
    for s, stress in stresses.items():
        yield_factor *= 1.0 - stress
    current_stress = stresses[stage]
    remaining = max(0.0, stage.days - elapsed_days)
    for s in PlantStage:
        if s.order > stage.order:
            remaining += s.days
    return ForecastReport(
        stage=stage,
        days_to_harvest=remaining * (1.0 + current_stress),
        yield_factor=yield_factor,
        stress_by_stage=stresses,
        low_confidence=history.is_empty(),
    )
