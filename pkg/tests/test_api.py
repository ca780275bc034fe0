import json

import pytest
import requests

from farmctl import compensation as comp
from farmctl.api import ApiServer, HubAdapter
from farmctl.control import recipe_to_json, default_recipe
from farmctl.datastore import downsample
from farmctl.runtime import Daemon, DaemonConfig, ReplaySource
from farmctl.telemetry import Actuator, Channel


@pytest.fixture
def daemon(tmp_path):
    d = Daemon(DaemonConfig(data_dir=str(tmp_path / "data")))
    yield d
    d.shutdown()


@pytest.fixture
def api(daemon):
    server = ApiServer(HubAdapter(daemon=daemon), bind="127.0.0.1:0").start()
    yield server
    server.stop()


def url(api, path):
    return api.endpoint + path


class TestState:
    def test_503_before_first_tick(self, api):
        r = requests.get(url(api, "/api/state"))
        assert r.status_code == 503
        assert r.json()["error"] == "not-ready"

    def test_snapshot_shape_after_tick(self, api, daemon):
        daemon.tick_once()
        r = requests.get(url(api, "/api/state"))
        assert r.status_code == 200
        body = r.json()
        assert len(body["corrected"]) == 8
        assert len(body["raw"]) == 8
        assert len(body["cmd"]) == 6
        assert body["stage"] == "germination"
        assert body["compensation"] == "off"

    def test_all_fault_safe_state_visible(self, api, daemon):
        for ch in Channel:
            daemon.backend.force_fault(ch)
        daemon.tick_once()
        body = requests.get(url(api, "/api/state")).json()
        assert body["alarms"] == ["all-fault"]
        assert body["cmd"]["air_heater"] == 0.0
        assert body["cmd"]["fan"] == 1.0
        assert body["cmd"]["pump"] == 0.0

    def test_monotone_snapshots(self, api, daemon):
        daemon.tick_once()
        t1 = requests.get(url(api, "/api/state")).json()["t"]
        daemon.tick_once()
        t2 = requests.get(url(api, "/api/state")).json()["t"]
        assert t2 >= t1


class TestHistory:
    def test_matches_datastore_query_and_downsample(self, api, daemon):
        for _ in range(30):
            daemon.tick_once()
        r = requests.get(url(api, "/api/history"), params={"channel": "air_temp", "from": 0, "to": 30, "bucket": 5})
        assert r.status_code == 200
        points = [(int(t), v) for t, v in r.json()["points"]]
        expect = downsample(daemon.store.query("reading", "air_temp", 0, 30, "corrected"), 5)
        assert points == expect

    def test_bad_params_400(self, api):
        for params in [
            {"channel": "air_temp"},
            {"channel": "nope", "from": 0, "to": 10},
            {"channel": "ph", "from": 10, "to": 0},
            {"channel": "ph", "from": 0, "to": 10, "bucket": 0},
        ]:
            r = requests.get(url(api, "/api/history"), params=params)
            assert r.status_code == 400, params


class TestRecipe:
    def test_get_current_recipe(self, api):
        r = requests.get(url(api, "/api/recipe"))
        assert r.status_code == 200
        assert r.json() == recipe_to_json(default_recipe())

    def test_put_valid_recipe_effective_next_tick(self, api, daemon):
        daemon.tick_once()
        obj = recipe_to_json(default_recipe())
        obj["germination"]["illumination"] = 5000.0
        r = requests.put(url(api, "/api/recipe"), json=obj)
        assert r.status_code == 200
        daemon.tick_once()
        assert requests.get(url(api, "/api/recipe")).json()["germination"]["illumination"] == 5000.0

    def test_put_invalid_recipe_names_field(self, api, daemon):
        before = daemon.current_recipe_json()
        obj = recipe_to_json(default_recipe())
        obj["germination"]["deadbands"]["air_temp"] = 0
        r = requests.put(url(api, "/api/recipe"), json=obj)
        assert r.status_code == 422
        fields = [e["field"] for e in r.json()["detail"]]
        assert "germination.deadbands.air_temp" in fields
        daemon.tick_once()
        assert daemon.current_recipe_json() == before  # nothing changed

    def test_put_bad_photoperiod_422(self, api):
        obj = recipe_to_json(default_recipe())
        obj["vegetative"]["photoperiod"] = {"on_hour": 23, "off_hour": 6}
        r = requests.put(url(api, "/api/recipe"), json=obj)
        assert r.status_code == 422
        assert any(e["field"] == "vegetative.photoperiod" for e in r.json()["detail"])

    def test_put_non_json_400(self, api):
        r = requests.put(url(api, "/api/recipe"), data=b"not json")
        assert r.status_code == 400


class TestOverride:
    def test_round_trip_shows_in_snapshot(self, api, daemon):
        daemon.tick_once()
        r = requests.post(url(api, "/api/override"), json={"actuator": "fan", "level": 1, "ttl_s": 60})
        assert r.status_code == 200
        snap = daemon.tick_once()
        assert snap.cmd[Actuator.FAN] == 1.0
        body = requests.get(url(api, "/api/state")).json()
        assert "fan" in body["overrides"]

    def test_out_of_bounds_422(self, api):
        for body in [
            {"actuator": "led", "level": 1.5, "ttl_s": 60},
            {"actuator": "fan", "level": 0.5, "ttl_s": 60},
            {"actuator": "fan", "level": 1, "ttl_s": 0},
            {"actuator": "warp-drive", "level": 1, "ttl_s": 60},
        ]:
            r = requests.post(url(api, "/api/override"), json=body)
            assert r.status_code == 422, body


class TestForecast:
    def test_503_before_first_computation(self, api):
        assert requests.get(url(api, "/api/forecast")).status_code == 503

    def test_available_after_tick(self, api, daemon):
        daemon.tick_once()
        body = requests.get(url(api, "/api/forecast")).json()
        assert body["stage"] == "germination"
        assert 0.0 <= body["yield_factor"] <= 1.0


class TestModel:
    def test_404_without_model(self, api):
        r = requests.get(url(api, "/api/model"))
        assert r.status_code == 404

    def test_summary_and_full_round_trip(self, tmp_path):
        samples = {
            ch: [
                comp.CalibSample(ch, 100.0 + i, 10.0 + (i % 30), 100.0 + i)
                for i in range(150)
            ]
            for ch in Channel
        }
        models = {}
        for ch in Channel:
            model, _ = comp.train(samples[ch], comp.TrainHyper(epochs=2, seed=1))
            models[ch] = model
        model_path = tmp_path / "model.json"
        comp.dump_models(models, model_path)

        config = DaemonConfig(data_dir=str(tmp_path / "data"), model_path=str(model_path))
        daemon = Daemon(config)
        server = ApiServer(HubAdapter(daemon=daemon), bind="127.0.0.1:0").start()
        try:
            summary = requests.get(url(server, "/api/model")).json()
            assert len(summary["channels"]) == 8
            assert all(c["arch"] == [2, 8, 1] for c in summary["channels"])

            full = requests.get(url(server, "/api/model"), params={"full": 1}).json()
            on_disk = json.loads(model_path.read_text())
            assert json.dumps(full["models"], sort_keys=True) == json.dumps(on_disk, sort_keys=True)

            daemon.tick_once()
            assert requests.get(url(server, "/api/state")).json()["compensation"] == "on"
        finally:
            server.stop()
            daemon.shutdown()


class TestInfoAndStatic:
    def test_info_document(self, api):
        body = requests.get(url(api, "/api/info")).json()
        assert body["name"] == "farmctl"
        assert "/api/state" in body["endpoints"]
        assert len(body["channels"]) == 8
        assert body["mode"] == "live"

    def test_static_serving_and_traversal_guard(self, daemon, tmp_path):
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<html>farm</html>")
        server = ApiServer(HubAdapter(daemon=daemon), bind="127.0.0.1:0", ui_dir=str(ui)).start()
        try:
            r = requests.get(url(server, "/"))
            assert r.status_code == 200 and b"farm" in r.content
            r = requests.get(url(server, "/../secrets"))
            assert r.status_code == 404
        finally:
            server.stop()


class TestReplayApi:
    def make_records(self):
        records = []
        for t in range(0, 60):
            records.append({"t": t, "ch": "ph", "v": 6.5 + 0.001 * t, "q": "corrected"})
            records.append({"t": t, "ch": "ph", "v": 6.6 + 0.001 * t, "q": "raw"})
        records.append({"t": 0, "cmd": {"fan": 0.0, "led": 0.175, "pump": 0.0, "air_heater": 1.0, "soil_heater": 0.0, "humidifier": 0.0}})
        return records

    def test_replay_history_equals_source(self, tmp_path):
        records = self.make_records()
        source = ReplaySource(records, speed=60)
        server = ApiServer(HubAdapter(replay=source), bind="127.0.0.1:0").start()
        try:
            r = requests.get(url(server, "/api/history"), params={"channel": "ph", "from": 0, "to": 60})
            points = [(int(t), v) for t, v in r.json()["points"]]
            expect = [(int(rec["t"]), rec["v"]) for rec in records if rec.get("q") == "corrected"]
            assert points == expect
            body = requests.get(url(server, "/api/state")).json()
            assert body["replay"] is True
            assert requests.get(url(server, "/api/info")).json()["mode"] == "replay"
        finally:
            server.stop()

    def test_replay_accepts_overrides(self):
        source = ReplaySource(self.make_records(), speed=1000)
        server = ApiServer(HubAdapter(replay=source), bind="127.0.0.1:0").start()
        try:
            r = requests.post(url(server, "/api/override"), json={"actuator": "fan", "level": 1, "ttl_s": 9999})
            assert r.status_code == 200
            body = requests.get(url(server, "/api/state")).json()
            assert "fan" in body["overrides"]
        finally:
            server.stop()
