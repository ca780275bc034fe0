"""Device bus: the hardware-abstraction boundary.

A line-oriented ASCII protocol (`READ <channel>` / `SET <actuator> <level>` /
`PING` / `INFO`) over TCP, plus an in-process client speaking the exact same
codec, so the control engine cannot tell whether it is driving the embedded
chamber simulator or a remote device box. Human-debuggable on purpose:
`nc localhost 9999` and type READ co2.

One logical device owner: command execution against the backend is
serialized no matter how many client connections are open.
"""

from __future__ import annotations

import json
import math
import random
import socket
import socketserver
import threading

from . import chamber
from .telemetry import (
    Actuator,
    ActuatorCommandSet,
    Channel,
    Quality,
    Reading,
    ReadingSet,
    actuator_by_name,
    channel_by_name,
    clamp_level,
)

MAX_LINE_BYTES = 1024
DEFAULT_TIMEOUT_S = 0.5
ERR_CODES = ("BADCMD", "BADCHAN", "BADVAL", "FAULT")


class BusTimeout(Exception):
    """No response within the per-command deadline."""


class FaultError(Exception):
    """Backend cannot produce a trusted value for a channel."""

    def __init__(self, channel: Channel):
        super().__init__(channel.value)
        self.channel = channel


class ProtocolError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


# -- commands ---------------------------------------------------------------

class ReadCommand:
    def __init__(self, channel: Channel):
        self.channel = channel

    def __eq__(self, other):
        return isinstance(other, ReadCommand) and other.channel is self.channel


class SetCommand:
    def __init__(self, actuator: Actuator, level: float):
        self.actuator = actuator
        self.level = level

    def __eq__(self, other):
        return (
            isinstance(other, SetCommand)
            and other.actuator is self.actuator
            and other.level == self.level
        )


class PingCommand:
    def __eq__(self, other):
        return isinstance(other, PingCommand)


class InfoCommand:
    def __eq__(self, other):
        return isinstance(other, InfoCommand)


def _format_decimal(value: float) -> str:
    # repr gives the shortest round-trippable form
    return repr(float(value))


def encode_command(cmd) -> str:
    """One ASCII line per command, newline terminated."""
    if isinstance(cmd, ReadCommand):
        return f"READ {cmd.channel.value}\n"
    if isinstance(cmd, SetCommand):
        level = clamp_level(cmd.actuator, cmd.level)  # raises on bad relay level
        if level != cmd.level:
            raise ValueError(f"SET level out of bounds for {cmd.actuator.value}: {cmd.level}")
        return f"SET {cmd.actuator.value} {_format_decimal(level)}\n"
    if isinstance(cmd, PingCommand):
        return "PING\n"
    if isinstance(cmd, InfoCommand):
        return "INFO\n"
    raise TypeError(f"not a bus command: {cmd!r}")


def _parse_decimal(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ProtocolError("BADVAL", f"bad decimal {text!r}") from None
    if not math.isfinite(value):
        raise ProtocolError("BADVAL", f"non-finite value {text!r}")
    return value


def parse_command(line: str):
    """Server-side parse; raises ProtocolError with the response ERR code."""
    line = line.strip("\r\n")
    if len(line.encode("utf-8", "replace")) > MAX_LINE_BYTES:
        raise ProtocolError("BADCMD", "line too long")
    parts = line.split()
    if not parts:
        raise ProtocolError("BADCMD", "empty line")
    verb = parts[0]
    if verb == "PING" and len(parts) == 1:
        return PingCommand()
    if verb == "INFO" and len(parts) == 1:
        return InfoCommand()
    if verb == "READ" and len(parts) == 2:
        try:
            return ReadCommand(channel_by_name(parts[1]))
        except KeyError:
            raise ProtocolError("BADCHAN", f"no such channel {parts[1]!r}") from None
    if verb == "SET" and len(parts) == 3:
        try:
            actuator = actuator_by_name(parts[1])
        except KeyError:
            raise ProtocolError("BADCHAN", f"no such actuator {parts[1]!r}") from None
        level = _parse_decimal(parts[2])
        try:
            clamped = clamp_level(actuator, level)
        except ValueError as exc:
            raise ProtocolError("BADVAL", str(exc)) from None
        if clamped != level:
            raise ProtocolError("BADVAL", f"level out of bounds: {parts[2]}")
        return SetCommand(actuator, level)
    raise ProtocolError("BADCMD", f"cannot parse {line[:80]!r}")


# -- responses ----------------------------------------------------------------

class BusResponse:
    """OK with an optional decimal or JSON payload, or ERR code+message.

    local=True marks errors synthesized by the local parser, as opposed to
    an ERR the device actually sent.
    """

    def __init__(self, ok: bool, value=None, payload=None, code=None, message="", local=False):
        self.ok = ok
        self.value = value
        self.payload = payload
        self.code = code
        self.message = message
        self.local = local

    def __repr__(self):
        if self.ok:
            return f"BusResponse(ok, value={self.value!r})"
        return f"BusResponse({self.code}{' local' if self.local else ''}, {self.message!r})"


def parse_response(line: str) -> BusResponse:
    """Client-side parse. Unparseable lines become a *local* BADCMD error so
    callers can tell transport garbage from a remote ERR."""
    line = line.strip("\r\n")
    if line == "OK":
        return BusResponse(True)
    if line.startswith("OK "):
        payload = line[3:]
        if payload.startswith("{"):
            return BusResponse(True, payload=payload)
        try:
            return BusResponse(True, value=_parse_decimal(payload))
        except ProtocolError as exc:
            return BusResponse(False, code="BADCMD", message=str(exc), local=True)
    if line.startswith("ERR "):
        parts = line.split(" ", 2)
        if len(parts) >= 2 and parts[1] in ERR_CODES:
            return BusResponse(False, code=parts[1], message=parts[2] if len(parts) > 2 else "")
        return BusResponse(False, code="BADCMD", message=f"unknown ERR code in {line!r}", local=True)
    return BusResponse(False, code="BADCMD", message=f"cannot parse {line[:80]!r}", local=True)


# -- shared dispatch -----------------------------------------------------------

def dispatch_line(backend, line: str, lock: threading.Lock) -> str:
    """Process one wire line against a backend; always returns a response
    line. This is the single implementation behind both transports."""
    try:
        cmd = parse_command(line)
    except ProtocolError as exc:
        return f"ERR {exc.code} {exc.message}\n"
    with lock:
        try:
            if isinstance(cmd, ReadCommand):
                value = backend.read(cmd.channel)
                return f"OK {_format_decimal(value)}\n"
            if isinstance(cmd, SetCommand):
                backend.set(cmd.actuator, cmd.level)
                return "OK\n"
            if isinstance(cmd, PingCommand):
                return "OK\n"
            info = backend.info()
            return "OK " + json.dumps(info, separators=(",", ":")) + "\n"
        except FaultError as exc:
            return f"ERR FAULT {exc.channel.value}\n"
        except ValueError as exc:
            return f"ERR BADVAL {exc}\n"


# -- server ---------------------------------------------------------------------

class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: BusServer = self.server  # type: ignore[assignment]
        buf = b""
        overflow = False
        while True:
            try:
                chunk = self.request.recv(4096)
            except OSError:
                return
            if not chunk:
                return
            buf += chunk
            while True:
                nl = buf.find(b"\n")
                if nl < 0:
                    if len(buf) > MAX_LINE_BYTES:
                        # discard until the next newline shows up
                        overflow = True
                        buf = b""
                    break
                raw, buf = buf[:nl], buf[nl + 1 :]
                if overflow:
                    overflow = False
                    self._send("ERR BADCMD line too long\n")
                    continue
                if len(raw) > MAX_LINE_BYTES:
                    self._send("ERR BADCMD line too long\n")
                    continue
                line = raw.decode("utf-8", "replace")
                self._send(dispatch_line(server.backend, line, server.device_lock))

    def _send(self, line: str):
        try:
            self.request.sendall(line.encode("utf-8"))
        except OSError:
            pass


class BusServer(socketserver.ThreadingTCPServer):
    """Serves one backend to any number of concurrent clients; device access
    is serialized so interleaved clients never observe torn state."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, backend, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.backend = backend
        self.device_lock = threading.Lock()
        self._thread = None

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "BusServer":
        self._thread = threading.Thread(target=self.serve_forever, name="bus-server", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread:
            self._thread.join(timeout=5)


def serve(backend, host: str = "127.0.0.1", port: int = 0) -> BusServer:
    """Start serving in a background thread; returns the running server."""
    return BusServer(backend, host, port).start()


# -- clients ----------------------------------------------------------------------

class _ClientOps:
    """Typed operations on top of a request_line transport."""

    def request_line(self, line: str) -> BusResponse:
        raise NotImplementedError

    def request(self, cmd) -> BusResponse:
        return self.request_line(encode_command(cmd))

    def ping(self) -> bool:
        return self.request(PingCommand()).ok

    def read(self, channel: Channel) -> float:
        resp = self.request(ReadCommand(channel))
        if not resp.ok:
            raise ProtocolError(resp.code or "BADCMD", resp.message)
        return resp.value

    def set(self, actuator: Actuator, level: float) -> None:
        resp = self.request(SetCommand(actuator, level))
        if not resp.ok:
            raise ProtocolError(resp.code or "BADCMD", resp.message)

    def info(self) -> dict:
        resp = self.request(InfoCommand())
        if not resp.ok or resp.payload is None:
            raise ProtocolError(resp.code or "BADCMD", resp.message)
        return json.loads(resp.payload)

    def poll_all(self, timestamp: int) -> ReadingSet:
        """READ all 8 channels into one raw ReadingSet; a FAULT answer on a
        channel yields a fault reading for that channel only."""
        readings = {}
        for ch in Channel:
            resp = self.request_line(f"READ {ch.value}\n")
            if resp.ok and resp.value is not None:
                readings[ch] = Reading(ch, resp.value, timestamp, Quality.RAW)
            elif not resp.ok and resp.code == "FAULT":
                readings[ch] = Reading(ch, float("nan"), timestamp, Quality.FAULT)
            else:
                raise ProtocolError(resp.code or "BADCMD", f"poll {ch.value}: {resp.message}")
        return ReadingSet(readings, timestamp)

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class BusClient(_ClientOps):
    """Socket client; one outstanding command per connection."""

    def __init__(self, endpoint: str, timeout_s: float = DEFAULT_TIMEOUT_S):
        host, port = endpoint.rsplit(":", 1)
        self.sock = socket.create_connection((host, int(port)), timeout=timeout_s)
        self._buf = b""

    def close(self) -> None:
        self.sock.close()

    def request_line(self, line: str) -> BusResponse:
        self.sock.sendall(line.encode("utf-8"))
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                raw, self._buf = self._buf[:nl], self._buf[nl + 1 :]
                return parse_response(raw.decode("utf-8", "replace"))
            try:
                chunk = self.sock.recv(4096)
            except socket.timeout:
                raise BusTimeout(f"no response to {line.strip()!r}") from None
            if not chunk:
                raise BusTimeout("connection closed")
            self._buf += chunk


class InProcessClient(_ClientOps):
    """Same interface as BusClient, no socket: lines go straight through the
    shared dispatcher, which keeps the two transports bit-identical."""

    def __init__(self, backend):
        self.backend = backend
        self._lock = threading.Lock()

    def request_line(self, line: str) -> BusResponse:
        return parse_response(dispatch_line(self.backend, line, self._lock))


# -- backends -------------------------------------------------------------------

class ChamberBackend:
    """The embedded simulator behind the bus interface.

    Reads serve the most recent sensed ReadingSet; SET updates the pending
    command levels; advance(dt) steps the physics with those levels and
    senses fresh readings. The owner of the control period calls advance,
    which keeps runs deterministic.
    """

    def __init__(
        self,
        initial_state: chamber.ChamberState | None = None,
        sensor_params: chamber.SensorParams | None = None,
        ambient: chamber.AmbientProfileSpec | None = None,
        coeffs: chamber.ChamberCoeffs | None = None,
        seed: int = 0,
    ):
        self.state = initial_state or chamber.ChamberState()
        self.params = sensor_params or chamber.default_sensor_params()
        self.ambient_spec = ambient or chamber.AmbientProfileSpec()
        self.coeffs = coeffs or chamber.ChamberCoeffs()
        self.rng = random.Random(seed)
        self.levels = {a: 0.0 for a in Actuator}
        self.forced_faults: set[Channel] = set()
        self.stage_elapsed_s = 0.0
        self.stage = chamber.PlantStage.GERMINATION
        self._sense()

    def _sense(self) -> None:
        amb = self.ambient(self.state.clock.t)
        self.readings = chamber.sense(self.state, self.params, amb, self.rng)

    def ambient(self, t: float) -> chamber.AmbientConditions:
        return chamber.ambient_profile(t, self.ambient_spec)

    def advance(self, dt: float) -> None:
        amb = self.ambient(self.state.clock.t)
        cmd = ActuatorCommandSet(dict(self.levels), self.state.clock.seconds)
        self.state = chamber.step(self.state, cmd, amb, self.stage, dt, self.coeffs, self.rng)
        self.stage_elapsed_s += dt
        while self.stage.next_stage is not self.stage and self.stage_elapsed_s >= self.stage.duration_s:
            self.stage_elapsed_s -= self.stage.duration_s
            self.stage = self.stage.next_stage
        self._sense()

    # bus backend interface ------------------------------------------------

    def read(self, channel: Channel) -> float:
        if channel in self.forced_faults:
            raise FaultError(channel)
        return self.readings.value(channel)

    def set(self, actuator: Actuator, level: float) -> None:
        self.levels[actuator] = clamp_level(actuator, level)

    def info(self) -> dict:
        return {
            "backend": "chamber_sim",
            "channels": [ch.value for ch in Channel],
            "actuators": [a.value for a in Actuator],
            "levels": {a.value: self.levels[a] for a in Actuator},
            "t": self.state.clock.seconds,
        }

    def force_fault(self, channel: Channel, faulted: bool = True) -> None:
        if faulted:
            self.forced_faults.add(channel)
        else:
            self.forced_faults.discard(channel)
