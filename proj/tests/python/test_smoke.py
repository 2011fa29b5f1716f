import http.client
import json
import threading

import numpy as np
import pytest

import idip


def small_config(**overrides):
    config = idip.default_config()
    config.update(iterations_per_phase=4, seed=3)
    config.update(overrides)
    return config


@pytest.fixture
def fixture():
    return idip.make_fixture("texture", size=16, damage=0.25, seed=1)


def test_default_parameter_count():
    assert idip.parameter_count() == 131731


def test_fixture_arrays(fixture):
    assert fixture["corrupted"].shape == (16, 16, 3)
    assert fixture["corrupted"].dtype == np.float32
    assert fixture["mask"].dtype == np.bool_
    assert (~fixture["mask"]).sum() == 64
    assert np.all(fixture["corrupted"][~fixture["mask"]] == 1.0)


def test_png_round_trip(tmp_path, fixture):
    path = tmp_path / "truth.png"
    idip.write_png(fixture["truth"], path)
    back = idip.read_png(path)
    assert np.array_equal(np.round(fixture["truth"] * 255), np.round(back * 255))
    idip.write_mask(fixture["mask"], tmp_path / "mask.png")
    assert np.array_equal(idip.read_mask(tmp_path / "mask.png"), fixture["mask"])


def test_metrics():
    rng = np.random.default_rng(0)
    a = rng.random((16, 16))
    assert idip.ssim(a, a) == 1.0
    assert idip.dssim(a, a) == 0.0
    b = rng.random((16, 16))
    assert idip.lmse(a, b, 1) == pytest.approx(idip.mse(a, b), abs=1e-9)
    c1 = 0.01**2
    zeros, ones = np.zeros((16, 16)), np.ones((16, 16))
    assert idip.ssim(zeros, ones) == pytest.approx(c1 / (1 + c1), abs=1e-9)


def test_session_phase_and_stroke(fixture):
    session = idip.Session(fixture["corrupted"], fixture["mask"], small_config(), id="py")
    assert session.status == "idle" and session.phase == 0
    seen = []
    snap = session.run_phase(4, callback=lambda phase, it, loss: seen.append(it))
    assert seen == [1, 2, 3, 4]
    assert len(snap["loss_trace"]) == 4
    assert snap["restored"].shape == (16, 16, 3)
    assert np.array_equal(session.presented(), snap["restored"])

    ys, xs = np.nonzero(~session.mask())
    stroke = {"mode": "guidance", "color": [0.2, 0.4, 0.6], "radius": 1, "points": [[int(xs[0]), int(ys[0])]]}
    summary = session.paint([stroke])
    assert summary["known_after"] == summary["known_before"] + 1
    assert session.mask()[ys[0], xs[0]]
    assert np.allclose(session.target()[ys[0], xs[0]], [0.2, 0.4, 0.6])


def test_bad_stroke_rejected(fixture):
    session = idip.Session(fixture["corrupted"], fixture["mask"], small_config())
    with pytest.raises(ValueError, match="color"):
        session.paint([{"mode": "guidance", "color": [2, 0, 0], "radius": 1, "points": [[0, 0]]}])


def test_stop_from_thread(fixture):
    session = idip.Session(fixture["corrupted"], fixture["mask"], small_config())
    stopper = []

    def callback(phase, it, loss):
        if it == 3:
            stopper.append(threading.Thread(target=session.stop))
            stopper[-1].start()
            stopper[-1].join()

    snap = session.run_phase(50, callback=callback)
    assert len(snap["loss_trace"]) == 3
    assert snap["stopped_early"]
    assert session.status == "stopped"


def test_replay_equivalence(fixture):
    two = idip.replay(fixture, small_config(), phases=2, iterations=3)
    one = idip.replay(fixture, small_config(), phases=1, iterations=6)
    assert np.array_equal(two[-1]["restored"], one[-1]["restored"])
    assert np.array_equal(two[0]["restored"], two[1]["presented"])


def test_truth_script(fixture):
    script = idip.truth_guidance_script(fixture, 0.5)
    assert len(script) == 32
    assert all(s["phase"] == 1 for s in script)
    painted = idip.replay(fixture, small_config(), phases=2, iterations=2, script=script)
    assert painted[1]["mask"].sum() == fixture["mask"].sum() + 32


def test_session_persistence(tmp_path, fixture):
    session = idip.Session(fixture["corrupted"], fixture["mask"], small_config())
    session.run_phase(2)
    session.save(tmp_path / "s.json")
    loaded = idip.Session.load(tmp_path / "s.json")
    assert loaded.parameter_checksum == session.parameter_checksum
    assert np.array_equal(loaded.run_phase(2)["restored"], session.run_phase(2)["restored"])


def test_service_http_api(fixture, tmp_path):
    import base64

    idip.write_png(fixture["corrupted"], tmp_path / "c.png")
    idip.write_mask(fixture["mask"], tmp_path / "m.png")
    body = {
        "id": "py-http",
        "image": base64.b64encode((tmp_path / "c.png").read_bytes()).decode(),
        "mask": base64.b64encode((tmp_path / "m.png").read_bytes()).decode(),
        "config": small_config(),
    }
    service = idip.Service({"workers": 1})
    port = service.start("127.0.0.1", 0)
    conn = http.client.HTTPConnection("127.0.0.1", port, timeout=30)
    try:

        def call(method, path, payload=None):
            conn.request(method, path, body=None if payload is None else json.dumps(payload),
                         headers={"Content-Type": "application/json"})
            res = conn.getresponse()
            return res.status, res.read()

        status, raw = call("POST", "/v1/sessions", body)
        assert status == 201, raw
        assert json.loads(raw)["id"] == "py-http"

        status, raw = call("POST", "/v1/sessions/py-http/phases", {"iterations": 4})
        assert status == 202, raw
        status, raw = call("GET", "/v1/sessions/py-http/events?after=0&until=snapshot")
        assert status == 200
        assert b"event: snapshot" in raw

        status, raw = call("GET", "/v1/sessions/py-http")
        view = json.loads(raw)
        assert view["phase"] == 1 and view["status"] == "idle"

        status, raw = call("GET", "/v1/sessions/py-http/result")
        assert status == 200 and raw[:8] == b"\x89PNG\r\n\x1a\n"

        status, raw = call("POST", "/v1/sessions/missing/stop")
        assert status == 404
        assert json.loads(raw)["error"]["code"]
    finally:
        conn.close()
        service.stop()
