"""HTTP review and reconstruction service.

The workflow: upload a blueprint sheet, review the automatically cut view
boxes in a client (review is always required, auto-cutting only drafts),
then queue reconstruction jobs against trained checkpoints and download
the resulting meshes.

Endpoints:
  POST /blueprints                   upload a PNG sheet, get auto-cut boxes
  GET  /blueprints                   all records, oldest first
  GET  /blueprints/{id}              one record
  GET  /blueprints/{id}/image        the original PNG
  PUT  /blueprints/{id}/views        submit the reviewed, labeled boxes
  POST /blueprints/{id}/reconstruct  queue a mesh job
  GET  /jobs                         all jobs, oldest first
  GET  /jobs/{id}                    job state
  GET  /jobs/{id}/mesh.obj           the result mesh of a done job
  GET  /checkpoints                  available weights with their configs

Validation failures return 422 with {"errors": [{"field", "message"}]};
every other error uses FastAPI's standard {"detail": ...} shape.
"""

from __future__ import annotations

import queue
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, Response

from ..errors import Blueprint3dError
from ..field import load_weights, peek_weights_config
from ..geometry import save_mesh
from ..images import GrayImage, VectorImage
from ..png import read_png
from ..recon import ReconstructConfig, reconstruct
from ..views import extract_views, viewset_from_json
from .store import Store

_KINDS = ("front", "back", "side", "top")
_FACINGS = ("positive_axis", "negative_axis", "unknown")
MAX_GRID_RESOLUTION = 1024  # keeps a single queue entry from pinning the worker for hours


def _gray(img: GrayImage | VectorImage) -> GrayImage:
    if isinstance(img, VectorImage):
        # blueprint sheets are grayscale; average color scans down
        return GrayImage(img.data.mean(axis=-1))
    return img


def _validate_views_payload(payload, width: int, height: int):
    """Check a reviewed-views submission; returns (canonical payload, errors).

    Facing is mandatory for side and top (it decides the axis mirroring);
    front and back carry no mirroring freedom, so an omitted or unknown
    facing there is normalized to positive_axis.
    """
    errors = []
    views = payload.get("views") if isinstance(payload, dict) else None
    if not isinstance(views, list) or len(views) != 4:
        return None, [{"field": "views", "message": "exactly 4 view entries are required"}]
    clean = []
    seen: dict[str, int] = {}
    for i, v in enumerate(views):
        base = f"views[{i}]"
        if not isinstance(v, dict):
            errors.append({"field": base, "message": "entry must be an object"})
            continue
        kind = v.get("kind")
        if kind not in _KINDS:
            errors.append(
                {"field": f"{base}.kind", "message": f"kind must be one of {', '.join(_KINDS)}"}
            )
            kind = None
        elif kind in seen:
            errors.append(
                {"field": f"{base}.kind", "message": f"duplicate {kind} view (also views[{seen[kind]}])"}
            )
        else:
            seen[kind] = i
        facing = v.get("facing", "unknown")
        if facing not in _FACINGS:
            errors.append(
                {"field": f"{base}.facing", "message": f"facing must be one of {', '.join(_FACINGS)}"}
            )
        elif kind in ("side", "top") and facing == "unknown":
            errors.append(
                {"field": f"{base}.facing", "message": f"the {kind} view needs an explicit facing"}
            )
        elif facing == "unknown":
            facing = "positive_axis"
        box = v.get("box")
        if not isinstance(box, dict):
            errors.append({"field": f"{base}.box", "message": "box must be an object with x, y, w, h"})
            continue
        vals = {}
        for key in ("x", "y", "w", "h"):
            val = box.get(key)
            if not isinstance(val, int) or isinstance(val, bool):
                errors.append({"field": f"{base}.box.{key}", "message": "must be an integer"})
            elif val < (1 if key in ("w", "h") else 0):
                errors.append(
                    {
                        "field": f"{base}.box.{key}",
                        "message": "must be at least 1" if key in ("w", "h") else "must be >= 0",
                    }
                )
            else:
                vals[key] = val
        if len(vals) == 4:
            if vals["x"] + vals["w"] > width or vals["y"] + vals["h"] > height:
                errors.append(
                    {"field": f"{base}.box", "message": f"box leaves the {width}x{height} image"}
                )
            elif kind is not None:
                clean.append({"box": vals, "kind": kind, "facing": facing})
    missing = [k for k in _KINDS if k not in seen]
    if missing:
        errors.append({"field": "views", "message": f"missing views: {', '.join(missing)}"})
    if errors:
        return None, errors
    return {"source_size": [width, height], "views": clean}, []


def create_app(
    store_dir: str | Path,
    checkpoints_dir: str | Path,
    recon_defaults: ReconstructConfig | None = None,
    max_upload_bytes: int = 16 << 20,
    queue_depth: int = 16,
    cors_origins: tuple[str, ...] = ("*",),
    start_worker: bool = True,
) -> FastAPI:
    store = Store(store_dir)
    checkpoints_dir = Path(checkpoints_dir)
    defaults = recon_defaults or ReconstructConfig()

    app = FastAPI(title="blueprint3d service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    work_q: queue.Queue = queue.Queue(maxsize=queue_depth)

    def run_job(jid: str) -> None:
        doc = store.job_record(jid)
        if doc is None or doc["state"] != "queued":
            return
        store.set_job_state(jid, "running")
        try:
            rec = store.blueprint_record(doc["blueprint_id"])
            if rec is None or rec["views"] is None:
                raise Blueprint3dError("blueprint record vanished or lost its reviewed views")
            img = _gray(read_png(store.blueprint_png(doc["blueprint_id"])))
            views = viewset_from_json(rec["views"], img)
            weights = load_weights(checkpoints_dir / f"{doc['checkpoint']}.pafw")
            cfg = ReconstructConfig(
                grid_resolution=doc["resolution"],
                iso=doc["iso"],
                keep_largest=doc["keep_largest"],
            )
            mesh = reconstruct(views, weights, cfg)
            store.write_job_mesh(jid, save_mesh(mesh, "obj"))
            store.set_job_state(jid, "done")
        except Exception as e:  # any failure belongs on the job record, not the log
            store.set_job_state(jid, "failed", f"{type(e).__name__}: {e}")

    def worker_loop() -> None:
        while True:
            jid = work_q.get()
            if jid is None:
                return
            try:
                run_job(jid)
            finally:
                work_q.task_done()

    for jid in store.recover_interrupted():
        work_q.put(jid)
    if start_worker:
        threading.Thread(target=worker_loop, daemon=True, name="recon-worker").start()

    app.state.store = store
    app.state.queue = work_q
    app.state.run_job = run_job  # direct hook for worker-less test setups

    # ------------------------------------------------------------ blueprints

    @app.post("/blueprints", status_code=201)
    async def upload_blueprint(request: Request):
        ctype = request.headers.get("content-type", "")
        if not ctype.startswith("image/png"):
            raise HTTPException(415, "blueprint uploads must be Content-Type: image/png")
        body = await request.body()
        if len(body) > max_upload_bytes:
            raise HTTPException(413, f"upload exceeds the {max_upload_bytes} byte limit")
        try:
            img = _gray(read_png(body))
        except Blueprint3dError as e:
            raise HTTPException(400, f"body is not a decodable PNG: {e}")
        try:
            auto = extract_views(img).to_json()
        except Blueprint3dError:
            # manual review path: the client draws all four boxes itself
            auto = {"source_size": [img.width, img.height], "views": []}
        bid = store.new_blueprint(body, img.width, img.height, auto)
        return store.blueprint_record(bid)

    @app.get("/blueprints")
    def list_blueprints():
        return store.list_blueprints()

    @app.get("/blueprints/{bid}")
    def get_blueprint(bid: str):
        rec = store.blueprint_record(bid)
        if rec is None:
            raise HTTPException(404, f"no blueprint {bid}")
        return rec

    @app.get("/blueprints/{bid}/image")
    def get_blueprint_image(bid: str):
        png = store.blueprint_png(bid)
        if png is None:
            raise HTTPException(404, f"no blueprint {bid}")
        return Response(content=png, media_type="image/png")

    @app.put("/blueprints/{bid}/views")
    async def put_views(bid: str, request: Request):
        rec = store.blueprint_record(bid)
        if rec is None:
            raise HTTPException(404, f"no blueprint {bid}")
        try:
            payload = await request.json()
        except Exception:
            raise HTTPException(400, "body must be JSON")
        width, height = rec["source_size"]
        canonical, errors = _validate_views_payload(payload, width, height)
        if errors:
            return JSONResponse(status_code=422, content={"errors": errors})
        try:
            # construct the real ViewSet once as a final guard: anything the
            # field validation above missed still fails atomically here
            viewset_from_json(canonical, _gray(read_png(store.blueprint_png(bid))))
        except (Blueprint3dError, ValueError, KeyError) as e:
            return JSONResponse(
                status_code=422, content={"errors": [{"field": "views", "message": str(e)}]}
            )
        store.put_views(bid, canonical)
        return store.blueprint_record(bid)

    # ------------------------------------------------------------------ jobs

    @app.post("/blueprints/{bid}/reconstruct", status_code=202)
    async def queue_reconstruct(bid: str, request: Request):
        rec = store.blueprint_record(bid)
        if rec is None:
            raise HTTPException(404, f"no blueprint {bid}")
        if rec["status"] != "finalized":
            raise HTTPException(409, "blueprint views are not finalized; review them first")
        try:
            payload = await request.json()
        except Exception:
            raise HTTPException(400, "body must be JSON")
        if not isinstance(payload, dict):
            raise HTTPException(400, "body must be a JSON object")

        errors = []
        name = payload.get("checkpoint")
        if not isinstance(name, str) or not name:
            errors.append({"field": "checkpoint", "message": "checkpoint name is required"})
        elif "/" in name or "\\" in name or ".." in name:
            errors.append({"field": "checkpoint", "message": "checkpoint must be a plain name"})
        iso = payload.get("iso", defaults.iso)
        if not isinstance(iso, (int, float)) or isinstance(iso, bool) or not 0.0 < float(iso) < 1.0:
            errors.append({"field": "iso", "message": "iso must lie strictly between 0 and 1"})
        resolution = payload.get("resolution", defaults.grid_resolution)
        if (
            not isinstance(resolution, int)
            or isinstance(resolution, bool)
            or not 2 <= resolution <= MAX_GRID_RESOLUTION
        ):
            errors.append(
                {
                    "field": "resolution",
                    "message": f"resolution must be an integer in [2, {MAX_GRID_RESOLUTION}]",
                }
            )
        keep_largest = payload.get("keep_largest", defaults.keep_largest)
        if not isinstance(keep_largest, bool):
            errors.append({"field": "keep_largest", "message": "keep_largest must be a boolean"})
        if errors:
            return JSONResponse(status_code=422, content={"errors": errors})
        if not (checkpoints_dir / f"{name}.pafw").exists():
            raise HTTPException(404, f"no checkpoint {name!r}")
        if work_q.full():
            raise HTTPException(503, "job queue is full, retry later")
        doc = store.new_job(bid, name, float(iso), resolution, keep_largest)
        try:
            work_q.put_nowait(doc["id"])
        except queue.Full:
            store.set_job_state(doc["id"], "failed", "job queue overflowed")
            raise HTTPException(503, "job queue is full, retry later")
        return doc

    @app.get("/jobs")
    def list_jobs():
        return store.list_jobs()

    @app.get("/jobs/{jid}")
    def get_job(jid: str):
        doc = store.job_record(jid)
        if doc is None:
            raise HTTPException(404, f"no job {jid}")
        return doc

    @app.get("/jobs/{jid}/mesh.obj")
    def get_job_mesh(jid: str):
        doc = store.job_record(jid)
        if doc is None:
            raise HTTPException(404, f"no job {jid}")
        if doc["state"] != "done":
            raise HTTPException(409, f"job is {doc['state']}, mesh exists only once done")
        return FileResponse(store.job_mesh_path(jid), media_type="model/obj", filename="mesh.obj")

    # ------------------------------------------------------------ checkpoints

    @app.get("/checkpoints")
    def list_checkpoints():
        out = []
        for path in sorted(checkpoints_dir.glob("*.pafw")):
            try:
                cfg = peek_weights_config(path)
            except Blueprint3dError:
                continue  # unreadable checkpoint, not listable
            enc = cfg.encoder
            out.append(
                {
                    "id": path.stem,
                    "encoder": {
                        "stacks": enc.stacks,
                        "initial_downsample_steps": enc.initial_downsample_steps,
                        "internal_downsample_steps": enc.internal_downsample_steps,
                        "feature_depth": enc.feature_depth,
                        "max_input_dim": enc.max_input_dim,
                    },
                    "mlp_hidden": list(cfg.mlp_hidden),
                }
            )
        return out

    return app
