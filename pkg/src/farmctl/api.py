"""Local HTTP/JSON surface for the operator UI and the CLI.

Plain threading http.server: at 1 Hz polling and a handful of clients there
is nothing an async stack would buy. Handlers touch the daemon only through
snapshots and the message queue, so no request blocks a control tick.
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .control import recipe_from_json, validate_recipe_json
from .datastore import downsample
from .telemetry import Actuator, Channel, actuator_by_name, channel_by_name, channel_meta

API_VERSION = "v1"


def _json_bytes(obj) -> bytes:
    return json.dumps(obj).encode("utf-8")


class ApiError(Exception):
    def __init__(self, status: int, code: str, detail):
        super().__init__(code)
        self.status = status
        self.code = code
        self.detail = detail


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    # quiet by default; the daemon's logger is the interesting one
    def log_message(self, fmt, *args):
        pass

    @property
    def app(self) -> "ApiServer":
        return self.server  # type: ignore[return-value]

    def _reply(self, status: int, body: bytes, content_type: str = "application/json") -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _reply_json(self, obj, status: int = 200) -> None:
        self._reply(status, _json_bytes(obj))

    def _reply_error(self, exc: ApiError) -> None:
        self._reply_json({"error": exc.code, "detail": exc.detail}, exc.status)

    def _read_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            raise ApiError(400, "bad-request", "empty body")
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ApiError(400, "bad-json", str(exc)) from None

    def do_GET(self):  # noqa: N802 (http.server API)
        try:
            url = urlparse(self.path)
            query = {k: v[0] for k, v in parse_qs(url.query).items()}
            route = url.path.rstrip("/") or "/"
            if route == "/api/state":
                self._get_state()
            elif route == "/api/history":
                self._get_history(query)
            elif route == "/api/forecast":
                self._get_forecast()
            elif route == "/api/model":
                self._get_model(query)
            elif route == "/api/recipe":
                self._reply_json(self.app.hub.recipe_json())
            elif route == "/api/info":
                self._reply_json(self.app.info())
            else:
                self._get_static(url.path)
        except ApiError as exc:
            self._reply_error(exc)

    def do_PUT(self):  # noqa: N802
        try:
            route = urlparse(self.path).path.rstrip("/")
            if route != "/api/recipe":
                raise ApiError(404, "not-found", route)
            body = self._read_body()
            errors = validate_recipe_json(body)
            if errors:
                raise ApiError(422, "invalid-recipe", [{"field": f, "message": m} for f, m in errors])
            self.app.hub.submit_recipe_json(body)
            self._reply_json({"status": "accepted"})
        except ApiError as exc:
            self._reply_error(exc)

    def do_POST(self):  # noqa: N802
        try:
            route = urlparse(self.path).path.rstrip("/")
            if route != "/api/override":
                raise ApiError(404, "not-found", route)
            body = self._read_body()
            try:
                actuator = actuator_by_name(str(body.get("actuator")))
            except KeyError as exc:
                raise ApiError(422, "invalid-override", str(exc)) from None
            try:
                level = float(body.get("level"))
                ttl = float(body.get("ttl_s", body.get("ttl", 0)))
            except (TypeError, ValueError):
                raise ApiError(422, "invalid-override", "level and ttl must be numbers") from None
            try:
                self.app.hub.submit_override(actuator, level, ttl)
            except ValueError as exc:
                raise ApiError(422, "invalid-override", str(exc)) from None
            self._reply_json({"status": "accepted"})
        except ApiError as exc:
            self._reply_error(exc)

    # -- GET implementations -------------------------------------------------

    def _get_state(self):
        snapshot = self.app.hub.snapshot_json()
        if snapshot is None:
            raise ApiError(503, "not-ready", "controller has not ticked yet")
        self._reply_json(snapshot)

    def _get_history(self, query):
        try:
            channel = query["channel"]
            from_t = int(query["from"])
            to_t = int(query["to"])
        except (KeyError, ValueError):
            raise ApiError(400, "bad-params", "need channel, from, to (integers)") from None
        bucket = int(query.get("bucket", 1))
        quality = query.get("quality", "corrected")
        kind = query.get("kind", "reading")
        if kind == "reading":
            try:
                channel_by_name(channel)
            except KeyError as exc:
                raise ApiError(400, "bad-params", str(exc)) from None
        if from_t > to_t or bucket < 1:
            raise ApiError(400, "bad-params", "need from <= to and bucket >= 1")
        series = self.app.hub.query(kind, channel, from_t, to_t, quality)
        if kind in ("reading", "command"):
            series = downsample(series, bucket)
        self._reply_json({"channel": channel, "bucket": bucket, "points": [[t, v] for t, v in series]})

    def _get_forecast(self):
        forecast = self.app.hub.forecast_json()
        if forecast is None:
            raise ApiError(503, "not-ready", "no forecast computed yet")
        self._reply_json(forecast)

    def _get_model(self, query):
        summary = self.app.hub.model_summary(full=query.get("full") == "1")
        if summary is None:
            raise ApiError(404, "no-model", "controller is running uncompensated")
        self._reply_json(summary)

    def _get_static(self, path: str):
        root = self.app.ui_dir
        if not root:
            raise ApiError(404, "not-found", path)
        rel = path.lstrip("/") or "index.html"
        full = os.path.realpath(os.path.join(root, rel))
        if not full.startswith(os.path.realpath(root) + os.sep) and full != os.path.realpath(root):
            raise ApiError(404, "not-found", path)
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        if not os.path.isfile(full):
            raise ApiError(404, "not-found", path)
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as fh:
            self._reply(200, fh.read(), ctype)


class HubAdapter:
    """Uniform facade the handlers talk to; wraps either a live Daemon or a
    ReplaySource."""

    def __init__(self, daemon=None, replay=None, store=None):
        if (daemon is None) == (replay is None):
            raise ValueError("exactly one of daemon/replay")
        self.daemon = daemon
        self.replay = replay
        self.store = store if store is not None else (daemon.store if daemon else None)

    def snapshot_json(self):
        if self.replay:
            return self.replay.snapshot_json()
        snapshot = self.daemon.snapshot()
        return snapshot.to_json() if snapshot else None

    def forecast_json(self):
        if self.replay:
            return None
        forecast = self.daemon.forecast()
        return forecast.to_json() if forecast else None

    def recipe_json(self):
        if self.replay:
            return self.replay.recipe_json()
        return self.daemon.current_recipe_json()

    def submit_recipe_json(self, body: dict):
        if self.replay:
            self.replay.submit_recipe_json(body)
        else:
            self.daemon.submit_recipe(recipe_from_json(body))

    def submit_override(self, actuator: Actuator, level: float, ttl: float):
        if ttl <= 0:
            raise ValueError("ttl must be > 0")
        (self.replay or self.daemon).submit_override(actuator, level, ttl)

    def model_summary(self, full: bool = False):
        if self.replay:
            return None
        return self.daemon.model_summary(full=full)

    def query(self, kind, key, from_t, to_t, quality):
        if self.replay:
            return self.replay.query(kind, key, from_t, to_t, quality)
        return self.store.query(kind, key, from_t, to_t, quality)


class ApiServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, hub: HubAdapter, bind: str = "127.0.0.1:8642", ui_dir: str | None = None):
        host, port = bind.rsplit(":", 1)
        super().__init__((host, int(port)), _Handler)
        self.hub = hub
        self.ui_dir = ui_dir
        self._thread = None

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def info(self) -> dict:
        return {
            "name": "farmctl",
            "api": API_VERSION,
            "endpoints": [
                "/api/state",
                "/api/history",
                "/api/recipe",
                "/api/override",
                "/api/forecast",
                "/api/model",
                "/api/info",
            ],
            "channels": {ch.value: dict(zip(("unit", "min", "max"), channel_meta(ch))) for ch in Channel},
            "actuators": {a.value: ("binary" if a.is_binary else "duty") for a in Actuator},
            "mode": "replay" if self.hub.replay else "live",
        }

    def start(self) -> "ApiServer":
        self._thread = threading.Thread(target=self.serve_forever, name="api-server", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread:
            self._thread.join(timeout=5)
