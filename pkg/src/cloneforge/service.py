"""HTTP/JSON backend for the curator review workflow.

One background worker trains per-anchor models FIFO; request handlers
are read-mostly. Trained models are persisted under the models
directory and reloaded (and rescored) on demand after a restart.
Curator decisions are appended to a JSON-lines log, one record per
action, each carrying the exact score, threshold, and offset in effect;
the log is replayed on boot and never rewritten.

Candidate rankings cover the whole corpus except the anchor itself,
sorted by score descending with ties broken by candidate index. The
threshold offset (delta) is clamped to [-0.5, 0.5] everywhere.
"""

from __future__ import annotations

import io
import json
import queue
import threading
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from .augment import make_clones
from .corpus import Corpus
from .metrics import LabeledScores, calibration_sweep
from .seeding import derive_seed
from .trainer import AnchorModel, TrainConfig, load_anchor_model, save_anchor_model, score_batch_norms, train_anchor

HISTOGRAM_BINS = 32
DELTA_LIMIT = 0.5

JOB_QUEUED = "queued"
JOB_RUNNING = "running"
JOB_DONE = "done"
JOB_FAILED = "failed"

_ACTIONS = ("accept", "reject", "unsure")


class TrainRequest(BaseModel):
    seed: int | None = None
    epochs: int | None = None


class DecisionRequest(BaseModel):
    candidate_id: int
    action: str
    delta: float = 0.0
    note: str = ""


@dataclass
class TrainJob:
    job_id: str
    anchor_id: int
    seed: int
    overrides: dict
    state: str = JOB_QUEUED
    step: int = 0
    total: int = 0
    error: str = ""


@dataclass
class AnchorArtifacts:
    model: AnchorModel
    corpus_norms: np.ndarray
    pos_norms: np.ndarray
    calibration: list[tuple[float, float, float, float]] = field(default_factory=list)


class ReviewService:
    def __init__(
        self,
        corpus: Corpus,
        models_dir: Path,
        decisions_path: Path,
        train_config: TrainConfig,
        n_stats_pos: int = 1000,
    ):
        self.corpus = corpus
        self.models_dir = models_dir
        self.decisions_path = decisions_path
        self.train_config = train_config
        self.n_stats_pos = n_stats_pos
        self.jobs: dict[tuple[int, int], TrainJob] = {}
        self.jobs_by_id: dict[str, TrainJob] = {}
        self.artifacts: dict[int, AnchorArtifacts] = {}
        self.decisions: list[dict] = []
        self._queue: queue.Queue[TrainJob | None] = queue.Queue()
        self._lock = threading.Lock()
        self._log_lock = threading.Lock()
        self._worker: threading.Thread | None = None
        self.models_dir.mkdir(parents=True, exist_ok=True)
        self._replay_decisions()

    # -- lifecycle --------------------------------------------------------

    def start(self) -> None:
        if self._worker is None:
            self._worker = threading.Thread(target=self._run_worker, daemon=True)
            self._worker.start()

    def stop(self) -> None:
        if self._worker is not None:
            self._queue.put(None)
            self._worker.join(timeout=30)
            self._worker = None

    def _run_worker(self) -> None:
        while True:
            job = self._queue.get()
            if job is None:
                return
            self._execute(job)

    # -- training jobs ----------------------------------------------------

    def submit(self, anchor_id: int, request: TrainRequest) -> tuple[TrainJob, bool]:
        seed = request.seed if request.seed is not None else self.train_config.seed
        overrides = {k: v for k, v in request.model_dump().items() if k != "seed" and v is not None}
        key = (anchor_id, seed)
        with self._lock:
            existing = self.jobs.get(key)
            if existing is not None:
                if existing.overrides != overrides:
                    raise HTTPException(409, detail="a job for this anchor and seed exists with a different config")
                return existing, False
            job = TrainJob(
                job_id=uuid.uuid4().hex,
                anchor_id=anchor_id,
                seed=seed,
                overrides=overrides,
                total=self._config_for(seed, overrides).epochs * self.train_config.steps_per_epoch(),
            )
            self.jobs[key] = job
            self.jobs_by_id[job.job_id] = job
        self._queue.put(job)
        return job, True

    def _config_for(self, seed: int, overrides: dict) -> TrainConfig:
        cfg = replace(self.train_config, seed=seed)
        if "epochs" in overrides:
            cfg = replace(cfg, epochs=overrides["epochs"])
        return cfg

    def _model_path(self, anchor_id: int, seed: int) -> Path:
        return self.models_dir / f"anchor_{anchor_id}_seed_{seed}.cfe"

    def _execute(self, job: TrainJob) -> None:
        job.state = JOB_RUNNING
        try:
            cfg = self._config_for(job.seed, job.overrides)
            path = self._model_path(job.anchor_id, job.seed)
            if path.exists():
                model = load_anchor_model(path, anchor_id=job.anchor_id)
            else:

                def on_step(step: int, total: int) -> None:
                    job.step, job.total = step, total

                model = train_anchor(self.corpus, job.anchor_id, cfg, on_step=on_step)
                save_anchor_model(model, path)
            self._build_artifacts(job.anchor_id, model, cfg)
            job.step = job.total
            job.state = JOB_DONE
        except Exception as exc:
            job.error = str(exc)
            job.state = JOB_FAILED

    def _build_artifacts(self, anchor_id: int, model: AnchorModel, cfg: TrainConfig) -> None:
        corpus_norms = score_batch_norms(model, self.corpus.images)
        clones = make_clones(
            self.corpus.images[anchor_id],
            self.n_stats_pos,
            replace(cfg.augment, seed=derive_seed(cfg.seed, "test-pos", anchor_id)),
        )
        pos_norms = score_batch_norms(model, clones)
        neg_mask = np.arange(len(self.corpus)) != anchor_id
        scores = LabeledScores(
            pos_scores=-pos_norms.astype(np.float64),
            neg_scores=-corpus_norms[neg_mask].astype(np.float64),
        )
        calibration = calibration_sweep(scores, model.tau)
        with self._lock:
            self.artifacts[anchor_id] = AnchorArtifacts(
                model=model,
                corpus_norms=corpus_norms,
                pos_norms=pos_norms,
                calibration=calibration,
            )

    def artifacts_for(self, anchor_id: int) -> AnchorArtifacts:
        with self._lock:
            art = self.artifacts.get(anchor_id)
        if art is not None:
            return art
        # a persisted model from an earlier session can be revived
        for path in sorted(self.models_dir.glob(f"anchor_{anchor_id}_seed_*.cfe")):
            seed = int(path.stem.rsplit("_", 1)[1])
            model = load_anchor_model(path, anchor_id=anchor_id)
            self._build_artifacts(anchor_id, model, self._config_for(seed, {}))
            return self.artifacts[anchor_id]
        raise HTTPException(409, detail=f"anchor {anchor_id} is not trained yet")

    # -- decisions --------------------------------------------------------

    def _replay_decisions(self) -> None:
        if not self.decisions_path.exists():
            return
        for line in self.decisions_path.read_text().splitlines():
            line = line.strip()
            if line:
                self.decisions.append(json.loads(line))

    def record_decision(self, anchor_id: int, req: DecisionRequest) -> dict:
        art = self.artifacts_for(anchor_id)
        if not 0 <= req.candidate_id < len(self.corpus):
            raise HTTPException(404, detail=f"unknown candidate {req.candidate_id}")
        if req.action not in _ACTIONS:
            raise HTTPException(400, detail=f"action must be one of {_ACTIONS}")
        delta = float(np.clip(req.delta, -DELTA_LIMIT, DELTA_LIMIT))
        record = {
            "anchor_id": anchor_id,
            "candidate_id": req.candidate_id,
            "action": req.action,
            "score": float(-art.corpus_norms[req.candidate_id]),
            "tau": float(art.model.tau),
            "delta": delta,
            "note": req.note,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        with self._log_lock:
            with self.decisions_path.open("a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
            self.decisions.append(record)
        return record


def _job_payload(service: ReviewService, job: TrainJob) -> dict:
    payload = {
        "job_id": job.job_id,
        "anchor_id": job.anchor_id,
        "seed": job.seed,
        "state": job.state,
        "progress": {"step": job.step, "total": job.total},
    }
    if job.state == JOB_FAILED:
        payload["error"] = job.error
    if job.state == JOB_DONE:
        art = service.artifacts.get(job.anchor_id)
        if art is not None:
            payload["mu"] = art.model.mu
            payload["m"] = art.model.m
            payload["tau"] = art.model.tau
    return payload


def create_app(
    corpus: Corpus,
    models_dir: Path,
    decisions_path: Path,
    train_config: TrainConfig | None = None,
    n_stats_pos: int = 1000,
    ui_dir: Path | None = None,
) -> FastAPI:
    service = ReviewService(
        corpus,
        models_dir=models_dir,
        decisions_path=decisions_path,
        train_config=train_config or TrainConfig(),
        n_stats_pos=n_stats_pos,
    )

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        service.start()
        yield
        service.stop()

    app = FastAPI(title="cloneforge review service", lifespan=lifespan)
    app.state.service = service

    def check_anchor(anchor_id: int) -> None:
        if not 0 <= anchor_id < len(corpus):
            raise HTTPException(404, detail=f"unknown anchor {anchor_id}")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "corpus_size": len(corpus)}

    @app.get("/corpus")
    def corpus_page(page: int = 0, page_size: int = 50) -> dict:
        page_size = max(1, min(page_size, 500))
        start = page * page_size
        items = [
            {"index": i, "id": corpus.ids[i], "thumbnail_url": f"/images/{i}"}
            for i in range(start, min(start + page_size, len(corpus)))
        ]
        return {"total": len(corpus), "page": page, "page_size": page_size, "items": items}

    @app.get("/images/{index}")
    def image(index: int) -> Response:
        if not 0 <= index < len(corpus):
            raise HTTPException(404, detail=f"unknown image {index}")
        from PIL import Image

        pixels = (corpus.images[index].transpose(1, 2, 0) * 255.0).round().astype(np.uint8)
        thumb = Image.fromarray(pixels).resize((128, 128), Image.NEAREST)
        buf = io.BytesIO()
        thumb.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/anchors/{anchor_id}/train", status_code=202)
    def train(anchor_id: int, request: TrainRequest, response: Response) -> dict:
        check_anchor(anchor_id)
        job, created = service.submit(anchor_id, request)
        if not created:
            response.status_code = 200
        return _job_payload(service, job)

    @app.get("/jobs/{job_id}")
    def job_state(job_id: str) -> dict:
        job = service.jobs_by_id.get(job_id)
        if job is None:
            raise HTTPException(404, detail=f"unknown job {job_id}")
        return _job_payload(service, job)

    @app.get("/anchors/{anchor_id}/candidates")
    def candidates(anchor_id: int, k: int = 20, delta: float = 0.0) -> dict:
        check_anchor(anchor_id)
        art = service.artifacts_for(anchor_id)
        delta = float(np.clip(delta, -DELTA_LIMIT, DELTA_LIMIT))
        cut = art.model.tau + delta
        norms = art.corpus_norms
        others = np.arange(len(corpus)) != anchor_id
        # score descending, candidate index ascending on ties
        order = np.lexsort((np.arange(len(corpus)), norms))
        order = order[others[order]]

        def card(i: int) -> dict:
            return {
                "candidate_id": int(i),
                "id": corpus.ids[i],
                "score": float(-norms[i]),
                "norm": float(norms[i]),
                "is_clone": bool(norms[i] <= cut),
                "thumbnail_url": f"/images/{i}",
            }

        return {
            "anchor_id": anchor_id,
            "tau": float(art.model.tau),
            "delta": delta,
            "candidates": [card(int(i)) for i in order[:k]],
            "least_similar": card(int(order[-1])),
        }

    @app.get("/anchors/{anchor_id}/stats")
    def stats(anchor_id: int) -> dict:
        check_anchor(anchor_id)
        art = service.artifacts_for(anchor_id)
        high = max(float(max(art.pos_norms.max(), art.corpus_norms.max())), 1e-6)
        edges = np.linspace(0.0, high, HISTOGRAM_BINS + 1)
        pos_counts, _ = np.histogram(art.pos_norms, bins=edges)
        corpus_counts, _ = np.histogram(art.corpus_norms, bins=edges)
        return {
            "anchor_id": anchor_id,
            "mu": art.model.mu,
            "m": art.model.m,
            "tau": art.model.tau,
            "histogram": {
                "edges": [float(e) for e in edges],
                "pos_counts": [int(c) for c in pos_counts],
                "corpus_counts": [int(c) for c in corpus_counts],
            },
            "calibration": [[d, p, r, f1] for d, p, r, f1 in art.calibration],
        }

    @app.post("/anchors/{anchor_id}/decisions", status_code=201)
    def decide(anchor_id: int, request: DecisionRequest) -> dict:
        check_anchor(anchor_id)
        return service.record_decision(anchor_id, request)

    @app.get("/anchors/{anchor_id}/decisions")
    def decisions(anchor_id: int) -> dict:
        check_anchor(anchor_id)
        rows = [d for d in service.decisions if d["anchor_id"] == anchor_id]
        return {"anchor_id": anchor_id, "decisions": rows}

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
