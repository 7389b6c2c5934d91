"""HTTP service: upload, review, jobs, persistence, restart recovery."""

import json
import time
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from blueprint3d.field import EncoderConfig, FieldConfig, init_weights, save_weights
from blueprint3d.geometry import is_watertight, load_mesh, normalize_mesh
from blueprint3d.geometry.shapes import car_proxy_mesh
from blueprint3d.images import GrayImage
from blueprint3d.png import write_png
from blueprint3d.service import create_app
from blueprint3d.views import render_sheet, synth_blueprint

PNG_HEADERS = {"Content-Type": "image/png"}


@pytest.fixture(scope="module")
def assets(tmp_path_factory):
    """A checkpoint whose field is constant-inside (fast solid meshes) plus a
    matching synthetic blueprint sheet."""
    root = tmp_path_factory.mktemp("svc_assets")
    ckpts = root / "ckpts"
    ckpts.mkdir()
    fc = FieldConfig(
        encoder=EncoderConfig(
            stacks=1,
            initial_downsample_steps=1,
            internal_downsample_steps=3,
            feature_depth=8,
            max_input_dim=64,
        ),
        mlp_hidden=(16, 8),
    )
    params = init_weights(fc, seed=0)
    params["mlp.value.w"].data[:] = 0.0
    params["mlp.value.b"].data[:] = 0.7  # sigmoid(0.7) > 0.5 everywhere: solid box
    save_weights(ckpts / "solid.pafw", fc, params)
    (ckpts / "junk.pafw").write_bytes(b"not a checkpoint at all")

    car, _ = normalize_mesh(car_proxy_mesh())
    views = synth_blueprint(car, 64)
    png = write_png(render_sheet(views))
    return ckpts, png, views.to_json()


@pytest.fixture()
def env(assets, tmp_path):
    """Fresh app on a fresh store; jobs run only when the test invokes
    app.state.run_job, which makes state transitions deterministic."""
    ckpts, png, descriptor = assets
    app = create_app(tmp_path / "store", ckpts, start_worker=False)
    return TestClient(app), app, png, descriptor


def _upload(client, png):
    r = client.post("/blueprints", content=png, headers=PNG_HEADERS)
    assert r.status_code == 201, r.text
    return r.json()


def _finalize(client, bid, descriptor):
    r = client.put(f"/blueprints/{bid}/views", json={"views": descriptor["views"]})
    assert r.status_code == 200, r.text
    return r.json()


# ----------------------------------------------------------------- upload


def test_upload_gives_auto_boxes_and_needs_review(env):
    client, _, png, descriptor = env
    rec = _upload(client, png)
    assert rec["status"] == "needs_review"
    assert rec["revision"] == 0 and rec["views"] is None
    assert len(rec["auto_views"]["views"]) == 4
    assert rec["auto_views"]["source_size"] == descriptor["source_size"]
    # auto boxes sit within a pixel of where the sheet was assembled
    want = {(v["box"]["x"], v["box"]["y"], v["box"]["w"], v["box"]["h"]) for v in descriptor["views"]}
    for v in rec["auto_views"]["views"]:
        b = (v["box"]["x"], v["box"]["y"], v["box"]["w"], v["box"]["h"])
        assert any(max(abs(b[i] - w[i]) for i in range(4)) <= 1 for w in want)


def test_upload_non_png_content_type_415(env):
    client, _, png, _ = env
    r = client.post("/blueprints", content=png, headers={"Content-Type": "application/json"})
    assert r.status_code == 415


def test_upload_truncated_png_400(env):
    client, _, png, _ = env
    r = client.post("/blueprints", content=png[:120], headers=PNG_HEADERS)
    assert r.status_code == 400


def test_upload_oversize_413(assets, tmp_path):
    ckpts, png, _ = assets
    app = create_app(tmp_path / "store", ckpts, start_worker=False, max_upload_bytes=100)
    client = TestClient(app)
    r = client.post("/blueprints", content=png, headers=PNG_HEADERS)
    assert r.status_code == 413


def test_upload_blank_png_needs_review_with_no_boxes(env):
    client, _, _, _ = env
    blank = write_png(GrayImage(np.ones((64, 64), dtype=np.float32)))
    rec = _upload(client, blank)
    assert rec["status"] == "needs_review"
    assert rec["auto_views"]["views"] == []


def test_blueprint_image_round_trips(env):
    client, _, png, _ = env
    rec = _upload(client, png)
    r = client.get(f"/blueprints/{rec['id']}/image")
    assert r.status_code == 200
    assert r.headers["content-type"].startswith("image/png")
    assert r.content == png


def test_unknown_ids_404(env):
    client, _, _, _ = env
    assert client.get("/blueprints/zzz").status_code == 404
    assert client.get("/blueprints/zzz/image").status_code == 404
    assert client.put("/blueprints/zzz/views", json={"views": []}).status_code == 404
    assert client.post("/blueprints/zzz/reconstruct", json={}).status_code == 404
    assert client.get("/jobs/zzz").status_code == 404
    assert client.get("/jobs/zzz/mesh.obj").status_code == 404


# ----------------------------------------------------------------- review


def test_put_views_finalizes_and_round_trips(env):
    client, _, png, descriptor = env
    bid = _upload(client, png)["id"]
    rec = _finalize(client, bid, descriptor)
    assert rec["status"] == "finalized" and rec["revision"] == 1
    fetched = client.get(f"/blueprints/{bid}").json()
    assert fetched["views"]["views"] == descriptor["views"]

    # identical payload is a no-op; a real edit bumps the revision
    assert _finalize(client, bid, descriptor)["revision"] == 1
    edited = json.loads(json.dumps(descriptor))
    edited["views"][0]["box"]["x"] += 1
    rec = _finalize(client, bid, edited)
    assert rec["revision"] == 2
    assert client.get(f"/blueprints/{bid}").json()["views"]["views"] == edited["views"]


def test_put_views_normalizes_front_back_facing(env):
    client, _, png, descriptor = env
    bid = _upload(client, png)["id"]
    payload = json.loads(json.dumps(descriptor))
    for v in payload["views"]:
        if v["kind"] in ("front", "back"):
            del v["facing"]
    rec = _finalize(client, bid, payload)
    stored = {v["kind"]: v["facing"] for v in rec["views"]["views"]}
    assert stored["front"] == "positive_axis" and stored["back"] == "positive_axis"


def _entries(descriptor):
    return json.loads(json.dumps(descriptor))["views"]


def test_put_views_duplicate_kind_422(env):
    client, _, png, descriptor = env
    bid = _upload(client, png)["id"]
    views = _entries(descriptor)
    views[1]["kind"] = views[0]["kind"]
    r = client.put(f"/blueprints/{bid}/views", json={"views": views})
    assert r.status_code == 422
    fields = [e["field"] for e in r.json()["errors"]]
    assert "views[1].kind" in fields
    assert any(f == "views" for f in fields)  # the now-missing kind is named too


def test_put_views_box_outside_image_422(env):
    client, _, png, descriptor = env
    bid = _upload(client, png)["id"]
    views = _entries(descriptor)
    views[2]["box"]["w"] = 10_000
    r = client.put(f"/blueprints/{bid}/views", json={"views": views})
    assert r.status_code == 422
    assert any(e["field"] == "views[2].box" for e in r.json()["errors"])


def test_put_views_missing_side_facing_422(env):
    client, _, png, descriptor = env
    bid = _upload(client, png)["id"]
    views = _entries(descriptor)
    for v in views:
        if v["kind"] == "side":
            v["facing"] = "unknown"
    r = client.put(f"/blueprints/{bid}/views", json={"views": views})
    assert r.status_code == 422
    assert any("facing" in e["field"] for e in r.json()["errors"])


def test_put_views_wrong_count_and_bad_types_422(env):
    client, _, png, descriptor = env
    bid = _upload(client, png)["id"]
    r = client.put(f"/blueprints/{bid}/views", json={"views": _entries(descriptor)[:3]})
    assert r.status_code == 422
    views = _entries(descriptor)
    views[0]["box"]["x"] = "12"
    r = client.put(f"/blueprints/{bid}/views", json={"views": views})
    assert r.status_code == 422
    assert any(e["field"] == "views[0].box.x" for e in r.json()["errors"])
    assert client.put(f"/blueprints/{bid}/views", content=b"{bad").status_code == 400


# ------------------------------------------------------------------- jobs


def test_reconstruct_requires_finalized_views(env):
    client, _, png, _ = env
    bid = _upload(client, png)["id"]
    r = client.post(f"/blueprints/{bid}/reconstruct", json={"checkpoint": "solid"})
    assert r.status_code == 409


def test_reconstruct_validation(env):
    client, _, png, descriptor = env
    bid = _upload(client, png)["id"]
    _finalize(client, bid, descriptor)
    url = f"/blueprints/{bid}/reconstruct"
    assert client.post(url, json={"checkpoint": "missing"}).status_code == 404
    assert client.post(url, json={"checkpoint": "../solid"}).status_code == 422
    assert client.post(url, json={"checkpoint": "solid", "iso": 0.0}).status_code == 422
    assert client.post(url, json={"checkpoint": "solid", "iso": 1.0}).status_code == 422
    assert client.post(url, json={"checkpoint": "solid", "resolution": 1}).status_code == 422
    assert client.post(url, json={"checkpoint": "solid", "keep_largest": "yes"}).status_code == 422
    assert client.post(url, content=b"nope").status_code == 400


def test_job_lifecycle_to_mesh(env):
    client, app, png, descriptor = env
    bid = _upload(client, png)["id"]
    _finalize(client, bid, descriptor)
    r = client.post(
        f"/blueprints/{bid}/reconstruct",
        json={"checkpoint": "solid", "resolution": 16, "iso": 0.5},
    )
    assert r.status_code == 202
    job = r.json()
    assert job["state"] == "queued"
    assert client.get(f"/jobs/{job['id']}/mesh.obj").status_code == 409

    app.state.run_job(job["id"])
    done = client.get(f"/jobs/{job['id']}").json()
    assert done["state"] == "done" and done["error"] is None
    obj = client.get(f"/jobs/{job['id']}/mesh.obj")
    assert obj.status_code == 200
    mesh = load_mesh(obj.content, "obj")
    assert mesh.n_triangles > 0 and is_watertight(mesh)


def test_job_failure_is_recorded_not_raised(env, assets):
    client, app, png, descriptor = env
    ckpts, _, _ = assets
    bid = _upload(client, png)["id"]
    _finalize(client, bid, descriptor)
    # junk.pafw exists on disk, so validation passes and the worker fails
    r = client.post(f"/blueprints/{bid}/reconstruct", json={"checkpoint": "junk"})
    assert r.status_code == 202
    jid = r.json()["id"]
    app.state.run_job(jid)
    job = client.get(f"/jobs/{jid}").json()
    assert job["state"] == "failed"
    assert "magic" in job["error"]
    assert client.get(f"/jobs/{jid}/mesh.obj").status_code == 409


def test_job_listing_keeps_creation_order(env):
    client, _, png, descriptor = env
    bid = _upload(client, png)["id"]
    _finalize(client, bid, descriptor)
    ids = []
    for _ in range(3):
        r = client.post(f"/blueprints/{bid}/reconstruct", json={"checkpoint": "solid"})
        ids.append(r.json()["id"])
    listed = [j["id"] for j in client.get("/jobs").json()]
    assert listed == ids


def test_queue_depth_503(assets, tmp_path):
    ckpts, png, descriptor = assets
    app = create_app(tmp_path / "store", ckpts, start_worker=False, queue_depth=1)
    client = TestClient(app)
    bid = _upload(client, png)["id"]
    _finalize(client, bid, descriptor)
    assert client.post(f"/blueprints/{bid}/reconstruct", json={"checkpoint": "solid"}).status_code == 202
    assert client.post(f"/blueprints/{bid}/reconstruct", json={"checkpoint": "solid"}).status_code == 503


def test_worker_thread_runs_jobs(assets, tmp_path):
    ckpts, png, descriptor = assets
    app = create_app(tmp_path / "store", ckpts)  # real background worker
    client = TestClient(app)
    bid = _upload(client, png)["id"]
    _finalize(client, bid, descriptor)
    r = client.post(
        f"/blueprints/{bid}/reconstruct", json={"checkpoint": "solid", "resolution": 16}
    )
    jid = r.json()["id"]
    deadline = time.time() + 30
    while time.time() < deadline:
        state = client.get(f"/jobs/{jid}").json()["state"]
        if state in ("done", "failed"):
            break
        time.sleep(0.05)
    assert state == "done"
    assert client.get(f"/jobs/{jid}/mesh.obj").status_code == 200


# ------------------------------------------------------------- persistence


def test_state_survives_restart(assets, tmp_path):
    ckpts, png, descriptor = assets
    store = tmp_path / "store"
    app1 = create_app(store, ckpts, start_worker=False)
    c1 = TestClient(app1)
    bid = _upload(c1, png)["id"]
    _finalize(c1, bid, descriptor)
    done = c1.post(f"/blueprints/{bid}/reconstruct", json={"checkpoint": "solid", "resolution": 16}).json()
    app1.state.run_job(done["id"])
    queued = c1.post(f"/blueprints/{bid}/reconstruct", json={"checkpoint": "solid"}).json()
    interrupted = c1.post(f"/blueprints/{bid}/reconstruct", json={"checkpoint": "solid"}).json()
    app1.state.store.set_job_state(interrupted["id"], "running")  # crash mid-run

    app2 = create_app(store, ckpts, start_worker=False)
    c2 = TestClient(app2)
    rec = c2.get(f"/blueprints/{bid}").json()
    assert rec["status"] == "finalized" and rec["revision"] == 1
    jobs = {j["id"]: j for j in c2.get("/jobs").json()}
    assert jobs[done["id"]]["state"] == "done"
    assert jobs[queued["id"]]["state"] == "queued"
    assert jobs[interrupted["id"]]["state"] == "failed"
    assert "restart" in jobs[interrupted["id"]]["error"]
    # the queued job was re-enqueued for the (not started) worker
    assert app2.state.queue.qsize() == 1
    assert c2.get(f"/jobs/{done['id']}/mesh.obj").status_code == 200


def test_done_and_failed_are_terminal(env):
    client, app, png, descriptor = env
    bid = _upload(client, png)["id"]
    _finalize(client, bid, descriptor)
    jid = client.post(
        f"/blueprints/{bid}/reconstruct", json={"checkpoint": "solid", "resolution": 16}
    ).json()["id"]
    app.state.run_job(jid)
    app.state.store.set_job_state(jid, "running")  # must not regress
    assert client.get(f"/jobs/{jid}").json()["state"] == "done"
    app.state.run_job(jid)  # replaying the queue entry is a no-op
    assert client.get(f"/jobs/{jid}").json()["state"] == "done"


# ------------------------------------------------------------ checkpoints


def test_checkpoint_listing_shows_config_and_skips_junk(env):
    client, _, _, _ = env
    listing = client.get("/checkpoints").json()
    assert [c["id"] for c in listing] == ["solid"]
    assert listing[0]["encoder"]["max_input_dim"] == 64
    assert listing[0]["mlp_hidden"] == [16, 8]
