"""HTTP inference service with an asynchronous job pipeline.

Flow: a client POSTs content (+ style) images and a model choice; the job
is queued and executed by a bounded worker pool; the client polls the job
until DONE and fetches the PNG result. Model weights are loaded once at
startup and shared read-only, so identical jobs produce byte-identical
results.

Endpoints (all under ``/api/v1``):

    POST /jobs              multipart: content, style?, model, params(JSON)
                            -> 202 {job_id}   (or 200 image when ?sync=true)
    GET  /jobs/{id}         -> {status, submitted_at, finished_at?, error?, result_url?}
    GET  /jobs/{id}/result  -> image/png bytes
    GET  /models            -> [{name, kind, description, default_params}]
    GET  /health            -> {status, queue_depth, workers_busy}

Configuration comes from LIVESTYLE_WORKERS, LIVESTYLE_MAX_UPLOAD_BYTES,
LIVESTYLE_MAX_IMAGE_SIDE, LIVESTYLE_PORT and LIVESTYLE_JOB_RETENTION.
"""

from __future__ import annotations

import enum
import json
import os
import queue
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.responses import JSONResponse, Response

from . import checkpoints
from .archive import WeightArchive
from .ast_transfer import StylePredictor, TransferNetwork, predict_style, strength_blend, stylize
from .backbone import (
    BackboneModel,
    TINY_CONTENT_LAYERS,
    TINY_STYLE_LAYERS,
    random_backbone,
    tiny_backbone_spec,
)
from .cyclegan import Generator, translate
from .errors import (
    CorruptImage,
    DivergedLoss,
    InvalidParams,
    JobGone,
    LiveStyleError,
    PayloadTooLarge,
    UnknownJob,
    UnknownModel,
    UnsupportedFormat,
)
from .gatys import GatysConfig, InitMode, run_gatys
from .images import (
    ImageFormat,
    ImageTensor,
    decode_image,
    encode_image,
    normalize,
    resize,
    to_unit_tensor,
)

MODEL_GATYS = "gatys"
MODEL_AST = "ast"
MODEL_CYCLEGAN = "cyclegan"


class JobStatus(enum.Enum):
    QUEUED = "QUEUED"
    RUNNING = "RUNNING"
    DONE = "DONE"
    FAILED = "FAILED"


_VALID_TRANSITIONS = {
    (JobStatus.QUEUED, JobStatus.RUNNING),
    (JobStatus.RUNNING, JobStatus.DONE),
    (JobStatus.RUNNING, JobStatus.FAILED),
}


@dataclass
class StyleJob:
    id: str
    model: str
    params: dict
    status: JobStatus
    submitted_at: float
    finished_at: float | None = None
    result: bytes | None = None
    error: str | None = None
    content_bytes: bytes = b""
    style_bytes: bytes | None = None

    def status_doc(self) -> dict:
        doc = {"status": self.status.value, "submitted_at": self.submitted_at}
        if self.finished_at is not None:
            doc["finished_at"] = self.finished_at
        if self.status is JobStatus.FAILED:
            doc["error"] = self.error
        if self.status is JobStatus.DONE:
            doc["result_url"] = f"/api/v1/jobs/{self.id}/result"
        return doc


@dataclass
class ServiceConfig:
    max_upload_bytes: int = 10 * 1024 * 1024
    worker_count: int = 2
    max_image_side: int = 128
    job_retention: float = 3600.0
    checkpoint_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.max_upload_bytes <= 0 or self.worker_count <= 0:
            raise ValueError("max_upload_bytes and worker_count must be positive")
        if self.max_image_side <= 0 or self.job_retention <= 0:
            raise ValueError("max_image_side and job_retention must be positive")

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        return cls(
            max_upload_bytes=int(os.environ.get("LIVESTYLE_MAX_UPLOAD_BYTES", 10 * 1024 * 1024)),
            worker_count=int(os.environ.get("LIVESTYLE_WORKERS", 2)),
            max_image_side=int(os.environ.get("LIVESTYLE_MAX_IMAGE_SIDE", 128)),
            job_retention=float(os.environ.get("LIVESTYLE_JOB_RETENTION", 3600.0)),
            checkpoint_dir=os.environ.get("LIVESTYLE_CHECKPOINT_DIR"),
        )


@dataclass
class ModelEntry:
    name: str
    kind: str
    description: str
    default_params: dict
    checkpoint: str | None = None

    def doc(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "description": self.description,
            "default_params": dict(self.default_params),
        }


class ModelRegistry:
    def __init__(self, entries: list[ModelEntry]):
        names = [e.name for e in entries]
        if len(set(names)) != len(names):
            raise ValueError("registry names must be unique")
        self.entries = sorted(entries, key=lambda e: e.name)

    def get(self, name: str) -> ModelEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise UnknownModel(f"unknown model {name!r}")

    def list_docs(self) -> list[dict]:
        return [e.doc() for e in self.entries]


# ---------------------------------------------------------------------------
# parameter schemas

_PARAM_SCHEMAS: dict[str, dict[str, dict]] = {
    MODEL_GATYS: {
        "iterations": {"type": int, "min": 1, "max": 1000, "default": 20},
        "content_weight": {"type": float, "min_exclusive": 0.0, "default": 1.0},
        "style_weight": {"type": float, "min": 0.0, "default": 1e3},
        "step_size": {"type": float, "min_exclusive": 0.0, "default": 0.02},
        "init": {"type": str, "choices": ("content_copy", "noise"), "default": "content_copy"},
        "seed": {"type": int, "default": 0},
        "checkpoint": {"type": str, "default": None},
    },
    MODEL_AST: {
        "strength": {"type": float, "min": 0.0, "max": 1.0, "default": 1.0},
        "seed": {"type": int, "default": 0},
        "checkpoint": {"type": str, "default": None},
    },
    MODEL_CYCLEGAN: {
        "seed": {"type": int, "default": 0},
        "checkpoint": {"type": str, "default": None},
    },
}


def default_params(kind: str) -> dict:
    return {
        name: rule["default"]
        for name, rule in _PARAM_SCHEMAS[kind].items()
        if rule["default"] is not None
    }


def validate_params(kind: str, params: dict) -> dict:
    """Validate + coerce a raw parameter map against the model schema."""
    schema = _PARAM_SCHEMAS[kind]
    unknown = set(params) - set(schema)
    if unknown:
        raise InvalidParams(f"unknown parameter(s) for {kind}: {sorted(unknown)}")
    out = default_params(kind)
    for name, value in params.items():
        rule = schema[name]
        t = rule["type"]
        if t is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, t) or isinstance(value, bool):
            raise InvalidParams(f"parameter {name!r} must be {t.__name__}")
        if "choices" in rule and value not in rule["choices"]:
            raise InvalidParams(f"parameter {name!r} must be one of {rule['choices']}")
        if "min" in rule and value < rule["min"]:
            raise InvalidParams(f"parameter {name!r} must be >= {rule['min']}")
        if "min_exclusive" in rule and value <= rule["min_exclusive"]:
            raise InvalidParams(f"parameter {name!r} must be > {rule['min_exclusive']}")
        if "max" in rule and value > rule["max"]:
            raise InvalidParams(f"parameter {name!r} must be <= {rule['max']}")
        out[name] = value
    return out


# ---------------------------------------------------------------------------
# job store


class JobStore:
    """Thread-safe job map with status-transition enforcement and
    retention-based eviction of terminal jobs."""

    def __init__(self, retention: float):
        self._jobs: dict[str, StyleJob] = {}
        self._gone: set[str] = set()
        self._lock = threading.Lock()
        self.retention = retention

    def create(self, job: StyleJob) -> None:
        with self._lock:
            self._jobs[job.id] = job

    def get(self, job_id: str) -> StyleJob:
        with self._lock:
            self._sweep_locked()
            if job_id in self._gone:
                raise JobGone(f"job {job_id} expired")
            job = self._jobs.get(job_id)
            if job is None:
                raise UnknownJob(f"unknown job {job_id}")
            return job

    def _transition(self, job_id: str, new: JobStatus) -> StyleJob:
        with self._lock:
            job = self._jobs[job_id]
            if (job.status, new) not in _VALID_TRANSITIONS:
                raise RuntimeError(f"illegal transition {job.status} -> {new}")
            job.status = new
            return job

    def set_running(self, job_id: str) -> StyleJob:
        return self._transition(job_id, JobStatus.RUNNING)

    def set_done(self, job_id: str, result: bytes) -> None:
        with self._lock:
            job = self._jobs[job_id]
            if (job.status, JobStatus.DONE) not in _VALID_TRANSITIONS:
                raise RuntimeError(f"illegal transition {job.status} -> DONE")
            # payload fields first: unlocked readers must never see a
            # terminal status without its result/error
            job.result = result
            job.finished_at = time.time()
            job.content_bytes = b""
            job.style_bytes = None
            job.status = JobStatus.DONE

    def set_failed(self, job_id: str, message: str) -> None:
        with self._lock:
            job = self._jobs[job_id]
            if (job.status, JobStatus.FAILED) not in _VALID_TRANSITIONS:
                raise RuntimeError(f"illegal transition {job.status} -> FAILED")
            job.error = message
            job.finished_at = time.time()
            job.content_bytes = b""
            job.style_bytes = None
            job.status = JobStatus.FAILED

    def counts(self) -> tuple[int, int]:
        with self._lock:
            queued = sum(1 for j in self._jobs.values() if j.status is JobStatus.QUEUED)
            running = sum(1 for j in self._jobs.values() if j.status is JobStatus.RUNNING)
            return queued, running

    def statuses(self) -> dict[str, str]:
        with self._lock:
            return {jid: j.status.value for jid, j in self._jobs.items()}

    def _sweep_locked(self) -> None:
        now = time.time()
        expired = [
            jid
            for jid, j in self._jobs.items()
            if j.status in (JobStatus.DONE, JobStatus.FAILED)
            and j.finished_at is not None
            and now - j.finished_at > self.retention
        ]
        for jid in expired:
            del self._jobs[jid]
            self._gone.add(jid)


# ---------------------------------------------------------------------------
# runtime models


@dataclass
class RuntimeModels:
    """Weights shared read-only by all workers."""

    backbone: BackboneModel
    gatys_content_layers: tuple[str, ...] = TINY_CONTENT_LAYERS
    gatys_style_layers: tuple[str, ...] = TINY_STYLE_LAYERS
    predictor: StylePredictor | None = None
    transfer: TransferNetwork | None = None
    generator: Generator | None = None


def build_default_models(seed: int = 0) -> RuntimeModels:
    """Seeded desk-scale models used when no checkpoints are configured."""
    backbone = random_backbone(tiny_backbone_spec(), seed=seed)
    net = TransferNetwork.random(seed=seed + 1)
    predictor = StylePredictor.random(net.embedding_dimension, seed=seed + 2)
    generator = Generator.near_identity(seed=seed + 3)
    return RuntimeModels(
        backbone=backbone, predictor=predictor, transfer=net, generator=generator
    )


def build_default_registry() -> ModelRegistry:
    return ModelRegistry(
        [
            ModelEntry(
                name=MODEL_GATYS,
                kind="GATYS",
                description=(
                    "Iterative optimization of the generated image against "
                    "content features and style Gram statistics of a frozen "
                    "convolutional backbone."
                ),
                default_params=default_params(MODEL_GATYS),
            ),
            ModelEntry(
                name=MODEL_AST,
                kind="AST",
                description=(
                    "Feed-forward arbitrary style transfer: a predictor maps the "
                    "style image to normalization parameters that condition the "
                    "transfer network; supports strength interpolation."
                ),
                default_params=default_params(MODEL_AST),
            ),
            ModelEntry(
                name=MODEL_CYCLEGAN,
                kind="CYCLEGAN",
                description=(
                    "Unpaired domain translation through a trained generator; "
                    "single content image in, translated image out."
                ),
                default_params=default_params(MODEL_CYCLEGAN),
            ),
        ]
    )


# ---------------------------------------------------------------------------
# the service


class TransferService:
    """Bounded worker pool consuming a FIFO job queue."""

    def __init__(
        self,
        config: ServiceConfig,
        registry: ModelRegistry | None = None,
        models: RuntimeModels | None = None,
    ):
        self.config = config
        self.registry = registry if registry is not None else build_default_registry()
        self.models = models if models is not None else build_default_models(config.seed)
        self.store = JobStore(retention=config.job_retention)
        self._queue: queue.Queue[str | None] = queue.Queue()
        self._workers: list[threading.Thread] = []
        self._started = False
        self._stopping = False
        self._checkpoint_cache: dict[str, WeightArchive] = {}
        self._cache_lock = threading.Lock()

    # -- lifecycle

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for i in range(self.config.worker_count):
            t = threading.Thread(target=self._worker_loop, name=f"livestyle-worker-{i}", daemon=True)
            t.start()
            self._workers.append(t)

    def shutdown(self) -> None:
        """Stop accepting work and drain: queued and running jobs finish."""
        if not self._started or self._stopping:
            return
        self._stopping = True
        for _ in self._workers:
            self._queue.put(None)
        for t in self._workers:
            t.join()
        self._workers.clear()
        self._started = False
        self._stopping = False

    # -- submission and queries

    def submit_job(
        self, content: bytes, style: bytes | None, model_name: str, params: dict
    ) -> str:
        entry = self.registry.get(model_name)
        kind = entry.name
        if len(content) > self.config.max_upload_bytes:
            raise PayloadTooLarge(f"content upload exceeds {self.config.max_upload_bytes} bytes")
        if style is not None and len(style) > self.config.max_upload_bytes:
            raise PayloadTooLarge(f"style upload exceeds {self.config.max_upload_bytes} bytes")
        clean = validate_params(kind, params)
        if kind in (MODEL_GATYS, MODEL_AST):
            if style is None:
                raise InvalidParams(f"model {kind!r} requires a style image")
        elif style is not None:
            raise InvalidParams(f"model {kind!r} does not take a style image")
        decode_image(content)  # validate early; raises UnsupportedFormat/CorruptImage
        if style is not None:
            decode_image(style)
        job = StyleJob(
            id=uuid.uuid4().hex,
            model=kind,
            params=clean,
            status=JobStatus.QUEUED,
            submitted_at=time.time(),
            content_bytes=content,
            style_bytes=style,
        )
        self.store.create(job)
        self._queue.put(job.id)
        return job.id

    def run_sync(self, content: bytes, style: bytes | None, model_name: str, params: dict) -> bytes:
        """Blocking execution path for small jobs (?sync=true)."""
        entry = self.registry.get(model_name)
        if len(content) > self.config.max_upload_bytes or (
            style is not None and len(style) > self.config.max_upload_bytes
        ):
            raise PayloadTooLarge(f"upload exceeds {self.config.max_upload_bytes} bytes")
        clean = validate_params(entry.name, params)
        if entry.name in (MODEL_GATYS, MODEL_AST) and style is None:
            raise InvalidParams(f"model {entry.name!r} requires a style image")
        if entry.name == MODEL_CYCLEGAN and style is not None:
            raise InvalidParams("model 'cyclegan' does not take a style image")
        return self._execute(entry.name, content, style, clean)

    def get_job(self, job_id: str) -> StyleJob:
        return self.store.get(job_id)

    def health(self) -> dict:
        queued, running = self.store.counts()
        return {"status": "ok", "queue_depth": queued, "workers_busy": running}

    # -- execution

    def _worker_loop(self) -> None:
        while True:
            job_id = self._queue.get()
            if job_id is None:
                return
            try:
                job = self.store.set_running(job_id)
            except (KeyError, RuntimeError):
                continue
            try:
                result = self._execute(job.model, job.content_bytes, job.style_bytes, job.params)
                self.store.set_done(job_id, result)
            except LiveStyleError as exc:
                self.store.set_failed(job_id, str(exc))
            except Exception as exc:  # noqa: BLE001 - worker must never die
                self.store.set_failed(job_id, f"internal error: {exc}")

    def _prepare(self, data: bytes) -> ImageTensor:
        raw = decode_image(data)
        tensor = to_unit_tensor(raw)
        side = min(self.config.max_image_side, raw.height, raw.width)
        side = max(side, 8)
        return resize(tensor, side)

    def _load_checkpoint(self, name: str) -> WeightArchive:
        if self.config.checkpoint_dir is None:
            raise InvalidParams("service has no checkpoint directory configured")
        path = Path(self.config.checkpoint_dir) / name
        if not path.is_file():
            raise InvalidParams(f"unknown checkpoint {name!r}")
        with self._cache_lock:
            if name not in self._checkpoint_cache:
                self._checkpoint_cache[name] = WeightArchive.load(path)
            return self._checkpoint_cache[name]

    def _execute(self, kind: str, content: bytes, style: bytes | None, params: dict) -> bytes:
        content_t = self._prepare(content)
        style_t = self._prepare(style) if style is not None else None
        checkpoint = params.get("checkpoint")

        if kind == MODEL_GATYS:
            backbone = self.models.backbone
            if checkpoint:
                backbone = checkpoints.load_backbone_checkpoint(self._load_checkpoint(checkpoint))
            spec = backbone.input_spec
            cfg = GatysConfig(
                content_layers=self.models.gatys_content_layers,
                style_layers=self.models.gatys_style_layers,
                layer_weights=tuple(
                    1.0 / len(self.models.gatys_style_layers)
                    for _ in self.models.gatys_style_layers
                ),
                content_weight=params["content_weight"],
                style_weight=params["style_weight"],
                iterations=params["iterations"],
                step_size=params["step_size"],
                init=InitMode(params["init"]),
                seed=params["seed"],
            )
            out, _ = run_gatys(
                normalize(content_t, spec), normalize(style_t, spec), backbone, cfg
            )
            return encode_image(out, ImageFormat.PNG)

        if kind == MODEL_AST:
            predictor, net = self.models.predictor, self.models.transfer
            if checkpoint:
                predictor, net = checkpoints.load_ast_checkpoint(self._load_checkpoint(checkpoint))
            style_emb = predict_style(predictor, style_t)
            alpha = params["strength"]
            if alpha < 1.0:
                content_emb = predict_style(predictor, content_t)
                emb = strength_blend(content_emb, style_emb, alpha)
            else:
                emb = style_emb
            out = stylize(net, content_t, emb)
            return encode_image(out, ImageFormat.PNG)

        if kind == MODEL_CYCLEGAN:
            generator = self.models.generator
            if checkpoint:
                generator = checkpoints.load_cyclegan_generator(self._load_checkpoint(checkpoint))
            out = translate(generator, content_t)
            return encode_image(out, ImageFormat.PNG)

        raise UnknownModel(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# HTTP layer


def create_app(service: TransferService, static_dir: str | None = None) -> FastAPI:
    """Wrap a TransferService in the FastAPI application."""

    @asynccontextmanager
    async def lifespan(app):
        service.start()
        yield
        service.shutdown()

    app = FastAPI(title="livestyle", lifespan=lifespan)

    def _error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": message})

    @app.exception_handler(LiveStyleError)
    async def livestyle_error_handler(request: Request, exc: LiveStyleError):
        status = 500
        if isinstance(exc, UnknownModel):
            status = 404
        elif isinstance(exc, UnknownJob):
            status = 404
        elif isinstance(exc, JobGone):
            status = 410
        elif isinstance(exc, PayloadTooLarge):
            status = 413
        elif isinstance(exc, (InvalidParams, UnsupportedFormat, CorruptImage, DivergedLoss)):
            status = 400
        return _error(status, str(exc))

    @app.post("/api/v1/jobs", status_code=202)
    def submit(
        content: UploadFile = File(...),
        style: UploadFile | None = File(None),
        model: str = Form(...),
        params: str = Form("{}"),
        sync: bool = False,
    ):
        content_bytes = content.file.read()
        style_bytes = style.file.read() if style is not None else None
        try:
            params_map = json.loads(params)
        except json.JSONDecodeError as exc:
            raise InvalidParams(f"params is not valid JSON: {exc}") from exc
        if not isinstance(params_map, dict):
            raise InvalidParams("params must be a JSON object")
        if sync:
            image = service.run_sync(content_bytes, style_bytes, model, params_map)
            return Response(content=image, media_type="image/png")
        job_id = service.submit_job(content_bytes, style_bytes, model, params_map)
        return {"job_id": job_id}

    @app.get("/api/v1/jobs/{job_id}")
    def job_status(job_id: str):
        return service.get_job(job_id).status_doc()

    @app.get("/api/v1/jobs/{job_id}/result")
    def job_result(job_id: str):
        job = service.get_job(job_id)
        if job.status is not JobStatus.DONE:
            raise UnknownJob(f"job {job_id} has no result (status {job.status.value})")
        return Response(content=job.result, media_type="image/png")

    @app.get("/api/v1/models")
    def list_models():
        return service.registry.list_docs()

    @app.get("/api/v1/health")
    def health():
        return service.health()

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
