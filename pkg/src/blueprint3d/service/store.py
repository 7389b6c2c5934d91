"""Filesystem persistence for blueprint records and reconstruction jobs.

Layout under the store root, one directory per record:

  blueprints/{id}/original.png   uploaded sheet bytes
  blueprints/{id}/meta.json      id, creation time, sheet size, auto-cut views
  blueprints/{id}/views.json     reviewed descriptor plus its revision number
  jobs/{id}/job.json             request parameters, state, error
  jobs/{id}/mesh.obj             result mesh once the job is done

Everything a client can observe is on disk, so records and finished jobs
survive a service restart. JSON writes go through a temp file and an
atomic rename; a crash mid-write never leaves a half-written record behind.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from pathlib import Path

# forward-only job lifecycle: queued -> running -> done | failed
_STATE_RANK = {"queued": 0, "running": 1, "done": 2, "failed": 2}


def _write_json_atomic(path: Path, doc: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2))
    os.replace(tmp, path)


class Store:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.blueprints = self.root / "blueprints"
        self.jobs = self.root / "jobs"
        self.blueprints.mkdir(parents=True, exist_ok=True)
        self.jobs.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._next_seq = max((j["seq"] for j in self._iter_jobs()), default=-1) + 1

    def _fresh_id(self, parent: Path) -> str:
        while True:
            rid = uuid.uuid4().hex[:12]
            if not (parent / rid).exists():
                return rid

    # ------------------------------------------------------------ blueprints

    def new_blueprint(self, png: bytes, width: int, height: int, auto_views: dict) -> str:
        with self._lock:
            bid = self._fresh_id(self.blueprints)
            d = self.blueprints / bid
            d.mkdir()
            (d / "original.png").write_bytes(png)
            _write_json_atomic(
                d / "meta.json",
                {
                    "id": bid,
                    "created": time.time(),
                    "width": width,
                    "height": height,
                    "auto_views": auto_views,
                },
            )
            return bid

    def blueprint_record(self, bid: str) -> dict | None:
        meta_path = self.blueprints / bid / "meta.json"
        if not meta_path.exists():
            return None
        meta = json.loads(meta_path.read_text())
        views_path = self.blueprints / bid / "views.json"
        reviewed = json.loads(views_path.read_text()) if views_path.exists() else None
        return {
            "id": meta["id"],
            "created": meta["created"],
            "source_size": [meta["width"], meta["height"]],
            "status": "finalized" if reviewed else "needs_review",
            "auto_views": meta["auto_views"],
            "views": reviewed["views"] if reviewed else None,
            "revision": reviewed["revision"] if reviewed else 0,
        }

    def blueprint_png(self, bid: str) -> bytes | None:
        path = self.blueprints / bid / "original.png"
        return path.read_bytes() if path.exists() else None

    def put_views(self, bid: str, payload: dict) -> int:
        """Persist the reviewed descriptor; returns the new revision.

        Last writer wins under the store lock; an identical payload keeps
        the current revision so replays are true no-ops.
        """
        with self._lock:
            views_path = self.blueprints / bid / "views.json"
            current = json.loads(views_path.read_text()) if views_path.exists() else None
            if current is not None and current["views"] == payload:
                return current["revision"]
            rev = current["revision"] + 1 if current is not None else 1
            _write_json_atomic(views_path, {"revision": rev, "views": payload})
            return rev

    def list_blueprints(self) -> list[dict]:
        recs = []
        for p in self.blueprints.iterdir():
            if p.is_dir():
                rec = self.blueprint_record(p.name)
                if rec is not None:
                    recs.append(rec)
        return sorted(recs, key=lambda r: (r["created"], r["id"]))

    # ------------------------------------------------------------------ jobs

    def _iter_jobs(self):
        for p in self.jobs.iterdir():
            doc_path = p / "job.json"
            if doc_path.exists():
                yield json.loads(doc_path.read_text())

    def new_job(
        self, blueprint_id: str, checkpoint: str, iso: float, resolution: int, keep_largest: bool
    ) -> dict:
        with self._lock:
            jid = self._fresh_id(self.jobs)
            doc = {
                "id": jid,
                "seq": self._next_seq,
                "blueprint_id": blueprint_id,
                "checkpoint": checkpoint,
                "iso": iso,
                "resolution": resolution,
                "keep_largest": keep_largest,
                "state": "queued",
                "error": None,
                "created": time.time(),
                "finished": None,
            }
            self._next_seq += 1
            (self.jobs / jid).mkdir()
            _write_json_atomic(self.jobs / jid / "job.json", doc)
            return doc

    def job_record(self, jid: str) -> dict | None:
        path = self.jobs / jid / "job.json"
        return json.loads(path.read_text()) if path.exists() else None

    def set_job_state(self, jid: str, state: str, error: str | None = None) -> None:
        """Advance a job; transitions never move backwards."""
        with self._lock:
            doc = self.job_record(jid)
            if doc is None:
                return
            if _STATE_RANK[state] <= _STATE_RANK[doc["state"]]:
                return
            doc["state"] = state
            doc["error"] = error
            if state in ("done", "failed"):
                doc["finished"] = time.time()
            _write_json_atomic(self.jobs / jid / "job.json", doc)

    def job_mesh_path(self, jid: str) -> Path:
        return self.jobs / jid / "mesh.obj"

    def write_job_mesh(self, jid: str, data: bytes) -> None:
        self.job_mesh_path(jid).write_bytes(data)

    def list_jobs(self) -> list[dict]:
        return sorted(self._iter_jobs(), key=lambda j: j["seq"])

    def recover_interrupted(self) -> list[str]:
        """Restart bookkeeping: queued jobs are returned for re-enqueueing,
        jobs caught mid-run are failed because their worker is gone."""
        pending = []
        for doc in self.list_jobs():
            if doc["state"] == "queued":
                pending.append(doc["id"])
            elif doc["state"] == "running":
                self.set_job_state(doc["id"], "failed", "interrupted by service restart")
        return pending
