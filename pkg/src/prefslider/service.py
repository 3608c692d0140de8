"""HTTP inference service over a frozen checkpoint.

The preference slider UI drives this: POST /sample draws a point cloud under a
requested preference vector, POST /front serves the evaluation sweep, GET
/info describes the loaded model. Handlers only read an immutable snapshot;
hot-swapping a checkpoint is a single atomic reference replacement.
"""

from __future__ import annotations

import itertools
import logging
import threading
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, ConfigDict

from . import seeds
from .checkpoint import Checkpoint, load_checkpoint
from .flowpolicy import euler_sample_batch
from .rewards import evaluate_batch
from .runs import eval_grid
from .simplex import SimplexError, project_to_simplex

logger = logging.getLogger("prefslider.service")

MAX_SAMPLES = 2048
MAX_SOLVER_STEPS = 4096
DEFAULT_PORT = 8787


class SampleRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    omega: list[float]
    n: int
    seed: int | None = None
    steps: int | None = None


class SampleResponse(BaseModel):
    points: list[list[float]]
    mean_reward: list[float]
    omega: list[float]
    checkpoint_id: str


class FrontRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    grid_k: int
    n_per_point: int = 256


class InfoResponse(BaseModel):
    checkpoint_id: str
    m: int
    reward_names: list[str]
    data_dim: int
    conditioning_mode: str


@dataclass(frozen=True)
class _Snapshot:
    ckpt: Checkpoint

    @property
    def net(self):
        return self.ckpt.triple.current


class InferenceEngine:
    """Read-only model snapshot plus a front-report cache keyed by checkpoint."""

    def __init__(self, checkpoint_path: str | Path | None = None):
        self._snapshot: _Snapshot | None = None
        self._counter = itertools.count()
        self._front_cache: dict[tuple[str, int, int], dict] = {}
        self._swap_lock = threading.Lock()
        if checkpoint_path is not None:
            self.load(checkpoint_path)

    def load(self, checkpoint_path: str | Path) -> str:
        ckpt = load_checkpoint(checkpoint_path)
        with self._swap_lock:
            self._snapshot = _Snapshot(ckpt)
        logger.info("loaded checkpoint %s from %s", ckpt.checkpoint_id, checkpoint_path)
        return ckpt.checkpoint_id

    def _require(self) -> _Snapshot:
        snap = self._snapshot
        if snap is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded")
        return snap

    def info(self) -> InfoResponse:
        snap = self._require()
        cfg = snap.ckpt.config
        return InfoResponse(
            checkpoint_id=snap.ckpt.checkpoint_id,
            m=cfg.omega_dim,
            reward_names=[c.name for c in cfg.rewards.channels],
            data_dim=cfg.model.data_dim,
            conditioning_mode=cfg.model.conditioning,
        )

    def sample(self, req: SampleRequest) -> SampleResponse:
        snap = self._require()
        cfg = snap.ckpt.config
        if not 1 <= req.n <= MAX_SAMPLES:
            raise HTTPException(status_code=400, detail=f"n must lie in [1, {MAX_SAMPLES}]")
        if len(req.omega) != cfg.omega_dim:
            raise HTTPException(
                status_code=400, detail=f"omega must have {cfg.omega_dim} components"
            )
        try:
            omega = project_to_simplex(req.omega)
        except SimplexError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        steps = req.steps if req.steps is not None else cfg.morl.eval_solver_steps
        if not 1 <= steps <= MAX_SOLVER_STEPS:
            raise HTTPException(status_code=400, detail="steps out of range")

        seed = req.seed
        if seed is None:
            seed = seeds.derive_seed(cfg.run.seed, "service", next(self._counter))
            logger.info("unseeded sample request; derived seed=%d", seed)
        pts = euler_sample_batch(snap.net, omega, req.n, steps, seed)
        r = evaluate_batch(snap.ckpt.config.registry(), pts)
        return SampleResponse(
            points=[[float(v) for v in p] for p in pts],
            mean_reward=[float(v) for v in r.mean(axis=0)],
            omega=[float(w) for w in omega.weights],
            checkpoint_id=snap.ckpt.checkpoint_id,
        )

    def front(self, req: FrontRequest) -> dict:
        snap = self._require()
        if req.grid_k < 2:
            raise HTTPException(status_code=400, detail="grid_k must be >= 2")
        if not 1 <= req.n_per_point <= MAX_SAMPLES:
            raise HTTPException(
                status_code=400, detail=f"n_per_point must lie in [1, {MAX_SAMPLES}]"
            )
        key = (snap.ckpt.checkpoint_id, req.grid_k, req.n_per_point)
        cached = self._front_cache.get(key)
        if cached is not None:
            return cached
        result = eval_grid(snap.ckpt.config, snap.net, req.grid_k, req.n_per_point)
        doc = result.report.to_json_dict()
        self._front_cache[key] = doc
        return doc


def create_app(checkpoint_path: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="prefslider", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    engine = InferenceEngine(checkpoint_path)
    app.state.engine = engine

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "loaded": engine._snapshot is not None}

    @app.get("/info", response_model=InfoResponse)
    def info() -> InfoResponse:
        return engine.info()

    @app.post("/sample", response_model=SampleResponse)
    def sample(req: SampleRequest) -> SampleResponse:
        return engine.sample(req)

    @app.post("/front")
    def front(req: FrontRequest) -> dict:
        return engine.front(req)

    return app


def serve(checkpoint_path: str | Path, port: int = DEFAULT_PORT) -> None:
    import uvicorn

    uvicorn.run(create_app(checkpoint_path), host="127.0.0.1", port=port, log_level="info")
