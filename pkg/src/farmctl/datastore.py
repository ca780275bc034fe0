"""Append-only telemetry/event log with time-range queries and downsampling.

One JSONL file per sim-day (`telemetry-<day>.jsonl`), records in the
canonical serialized forms: readings {"t","ch","v","q"}, commands
{"t","cmd":{...}}, alarms {"t","alarm":...}, forecasts {"t","forecast":{...}}.
Sequence numbers are the record ordinal and are recovered from the files on
restart. A per-channel ring buffer answers recent-window queries without
touching disk.

Desk-scale by design: a day of 1 Hz readings is well under a million lines,
so there is no database, and replaying the files *is* the recovery story.
"""

from __future__ import annotations

import collections
import json
import logging
import os
import threading
from dataclasses import dataclass

from .telemetry import DAY_SECONDS

log = logging.getLogger(__name__)

KINDS = ("reading", "command", "alarm", "forecast")


class StoreError(Exception):
    pass


def record_kind(obj: dict) -> str:
    if "ch" in obj:
        return "reading"
    if "cmd" in obj:
        return "command"
    if "alarm" in obj:
        return "alarm"
    if "forecast" in obj:
        return "forecast"
    raise StoreError(f"unrecognizable record: {sorted(obj)}")


def replay_file(path):
    """Yield records from one JSONL file; a torn final line is skipped with a
    warning, anything torn mid-file is an error."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        try:
            yield json.loads(line)
        except json.JSONDecodeError:
            if i == len(lines) - 1:
                log.warning("skipping torn final line in %s", path)
                return
            raise StoreError(f"corrupt record at {path}:{i + 1}")


@dataclass(frozen=True)
class SeriesPoint:
    t: int
    value: float


def downsample(series: list[tuple[int, float]], bucket_seconds: int) -> list[tuple[int, float]]:
    """One point per non-empty bucket: (bucket start, mean of values).

    Buckets align to absolute time (t // bucket * bucket), so bucket=1 is the
    identity on integer-second series and the operation is idempotent for
    bucket-aligned input.
    """
    if bucket_seconds < 1:
        raise ValueError("bucket_seconds must be >= 1")
    out: list[tuple[int, float]] = []
    cur_bucket = None
    total = 0.0
    count = 0
    for t, v in series:
        b = (int(t) // bucket_seconds) * bucket_seconds
        if b != cur_bucket:
            if count:
                out.append((cur_bucket, total / count))
            cur_bucket, total, count = b, 0.0, 0
        total += v
        count += 1
    if count:
        out.append((cur_bucket, total / count))
    return out


class DataStore:
    """Single writer, many readers. All public methods are lock-guarded."""

    def __init__(self, data_dir, ring_size: int = 3600):
        self.data_dir = str(data_dir)
        self.ring_size = ring_size
        os.makedirs(self.data_dir, exist_ok=True)
        self._lock = threading.RLock()
        self._fh = None
        self._fh_day = None
        self._last_t: dict[tuple, int] = {}
        self._rings: dict[tuple, collections.deque] = {}
        self._seq = 0
        self._recover()

    # -- startup -----------------------------------------------------------

    def _day_files(self) -> list[tuple[int, str]]:
        out = []
        for name in os.listdir(self.data_dir):
            if name.startswith("telemetry-") and name.endswith(".jsonl"):
                try:
                    day = int(name[len("telemetry-") : -len(".jsonl")])
                except ValueError:
                    continue
                out.append((day, os.path.join(self.data_dir, name)))
        return sorted(out)

    def _recover(self) -> None:
        files = self._day_files()
        for day, path in files:
            for obj in replay_file(path):
                self._seq += 1
                self._note(obj)

    def _note(self, obj: dict) -> None:
        """Track per-source monotonicity state and feed the ring buffer."""
        kind = record_kind(obj)
        t = int(obj["t"])
        if kind == "reading":
            key = (kind, obj["ch"], obj["q"])
            if obj["v"] is not None:
                ring = self._rings.setdefault(key, collections.deque(maxlen=self.ring_size))
                ring.append((t, float(obj["v"])))
        elif kind == "command":
            key = (kind,)
        else:
            key = (kind,)
        self._last_t[key] = t

    # -- writing -----------------------------------------------------------

    def append(self, obj: dict) -> int:
        """Append one canonical-form record; returns its sequence number.

        Flushes on every append so a reader (or a crash) never sees more
        than the current line missing.
        """
        with self._lock:
            kind = record_kind(obj)
            t = int(obj["t"])
            key = (kind, obj["ch"], obj["q"]) if kind == "reading" else (kind,)
            last = self._last_t.get(key)
            if last is not None and t < last:
                raise StoreError(f"timestamp regression for {key}: {t} < {last}")
            day = t // DAY_SECONDS
            if self._fh is None or day != self._fh_day:
                if self._fh:
                    self._fh.close()
                path = os.path.join(self.data_dir, f"telemetry-{day}.jsonl")
                self._fh = open(path, "a", encoding="utf-8")
                self._fh_day = day
            self._fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
            self._fh.flush()
            self._note(obj)
            seq = self._seq
            self._seq += 1
            return seq

    def flush(self) -> None:
        with self._lock:
            if self._fh:
                self._fh.flush()
                os.fsync(self._fh.fileno())

    def close(self) -> None:
        with self._lock:
            if self._fh:
                self._fh.flush()
                self._fh.close()
                self._fh = None

    @property
    def next_seq(self) -> int:
        with self._lock:
            return self._seq

    # -- reading -----------------------------------------------------------

    def query(self, kind: str, key: str | None, from_t: int, to_t: int, quality: str = "corrected"):
        """Matching records with from_t <= t < to_t, in timestamp order.

        For readings, key is the channel name and quality filters raw vs
        corrected; null values (untrusted faults) are skipped. For commands,
        key is the actuator name. Unknown keys give an empty series.
        """
        if kind not in KINDS:
            raise ValueError(f"unknown kind: {kind}")
        if from_t > to_t:
            raise ValueError("from_t must be <= to_t")
        with self._lock:
            if kind == "reading":
                ring = self._rings.get((kind, key, quality))
                if ring and ring[0][0] <= from_t:
                    return [(t, v) for t, v in ring if from_t <= t < to_t]
            out = []
            for day, path in self._day_files():
                if (day + 1) * DAY_SECONDS <= from_t or day * DAY_SECONDS >= to_t:
                    continue
                for obj in replay_file(path):
                    t = int(obj["t"])
                    if not from_t <= t < to_t:
                        continue
                    if record_kind(obj) != kind:
                        continue
                    if kind == "reading":
                        if obj["ch"] != key or obj["q"] != quality or obj["v"] is None:
                            continue
                        out.append((t, float(obj["v"])))
                    elif kind == "command":
                        if key not in obj["cmd"]:
                            continue
                        out.append((t, float(obj["cmd"][key])))
                    elif kind == "alarm":
                        out.append((t, obj["alarm"]))
                    else:
                        out.append((t, obj["forecast"]))
            return out

    def replay_all(self):
        """Every record in append order (recovery / test helper)."""
        with self._lock:
            out = []
            for day, path in self._day_files():
                out.extend(replay_file(path))
            return out
