"""Stateless HTTP generation service backing the browser UI.

One checkpoint is loaded at startup and shared read-only; every request
carries its own grid, locks, temperature, and (optional) seed, so
concurrent requests never interact. Validation failures return 400 with a
message naming the offending field or cell; 503 means no checkpoint yet.
"""
from __future__ import annotations

from contextlib import asynccontextmanager
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .decode import GenerationRequest, decode
from .network import DrumTransformer, load_checkpoint, manifest_fingerprint
from .patterns import (
    DrumPattern,
    INSTRUMENT_NAMES,
    MaskedPattern,
    N_INSTRUMENTS,
    N_STEPS,
    compute_metrics,
)

MAX_ITERATIONS = 64  # bounds worst-case request latency


class BadRequest(ValueError):
    """Request body problem; message names the field or cell."""


@dataclass
class LoadedModel:
    model: DrumTransformer
    fingerprint: str


def _expect_matrix(body: dict, name: str, allow_null: bool):
    rows = body.get(name)
    if not isinstance(rows, list) or len(rows) != N_INSTRUMENTS:
        raise BadRequest(f"field '{name}' must hold {N_INSTRUMENTS} rows")
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != N_STEPS:
            raise BadRequest(f"field '{name}' row {i} must hold {N_STEPS} cells")
        for t, cell in enumerate(row):
            if cell in (0, 1) and not isinstance(cell, bool):
                continue
            if cell is None and allow_null:
                continue
            allowed = "0, 1, or null" if allow_null else "0 or 1"
            raise BadRequest(f"field '{name}' cell ({i},{t}) must be {allowed}")
    return rows


def _parse_locks(body: dict) -> np.ndarray:
    locks = np.zeros((N_INSTRUMENTS, N_STEPS), dtype=bool)
    has_cell_locks = body.get("locks") is not None
    has_row_locks = body.get("row_locks") is not None
    if has_cell_locks and has_row_locks:
        raise BadRequest("provide either 'locks' or 'row_locks', not both")
    if has_cell_locks:
        rows = body["locks"]
        if not isinstance(rows, list) or len(rows) != N_INSTRUMENTS:
            raise BadRequest(f"field 'locks' must hold {N_INSTRUMENTS} rows")
        for i, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != N_STEPS:
                raise BadRequest(f"field 'locks' row {i} must hold {N_STEPS} cells")
            for t, cell in enumerate(row):
                if not isinstance(cell, bool):
                    raise BadRequest(
                        f"field 'locks' cell ({i},{t}) must be a boolean")
                locks[i, t] = cell
    elif has_row_locks:
        row_locks = body["row_locks"]
        if not isinstance(row_locks, list) or len(row_locks) != N_INSTRUMENTS:
            raise BadRequest(f"field 'row_locks' must hold {N_INSTRUMENTS} booleans")
        for i, flag in enumerate(row_locks):
            if not isinstance(flag, bool):
                raise BadRequest(f"field 'row_locks' entry {i} must be a boolean")
            locks[i, :] = flag
    return locks


def parse_generate_body(body: dict) -> tuple[GenerationRequest, bool]:
    """Validate and convert the wire body; returns (request, seeded)."""
    if not isinstance(body, dict):
        raise BadRequest("request body must be a JSON object")
    grid = _expect_matrix(body, "grid", allow_null=True)
    locks = _parse_locks(body)

    values = np.zeros((N_INSTRUMENTS, N_STEPS), dtype=np.uint8)
    mask = np.zeros((N_INSTRUMENTS, N_STEPS), dtype=bool)
    for i, row in enumerate(grid):
        for t, cell in enumerate(row):
            if cell is None:
                if locks[i, t]:
                    raise BadRequest(
                        f"cell ({i},{t}) is locked but has no value (null)")
                mask[i, t] = True
            else:
                values[i, t] = int(cell)

    temperature = body.get("temperature", 1.0)
    if not isinstance(temperature, (int, float)) or isinstance(temperature, bool) \
            or temperature <= 0:
        raise BadRequest("field 'temperature' must be a number > 0")
    iterations = body.get("iterations", 10)
    if not isinstance(iterations, int) or isinstance(iterations, bool) \
            or not 1 <= iterations <= MAX_ITERATIONS:
        raise BadRequest(f"field 'iterations' must be an integer in 1..{MAX_ITERATIONS}")
    seed = body.get("seed")
    seeded = seed is not None
    if seeded and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        raise BadRequest("field 'seed' must be a nonnegative integer")
    if not seeded:
        seed = int(np.random.default_rng().integers(1 << 62))

    request = GenerationRequest(
        initial=MaskedPattern(values, mask, locks),
        temperature=float(temperature), iterations=iterations, seed=seed)
    return request, seeded


def create_app(checkpoint_path=None, model: DrumTransformer | None = None,
               fingerprint: str | None = None, static_dir=None) -> FastAPI:
    """Build the service; the checkpoint loads once at startup.

    Tests may inject an in-memory ``model`` (plus optional fingerprint)
    instead of a checkpoint path. With neither, endpoints answer 503.
    """
    @asynccontextmanager
    async def _lifespan(app: FastAPI):
        if checkpoint_path is not None and app.state.loaded is None:
            loaded_model, _, manifest = load_checkpoint(checkpoint_path)
            app.state.loaded = LoadedModel(loaded_model,
                                           manifest_fingerprint(manifest))
        yield

    app = FastAPI(title="drumgen service", lifespan=_lifespan)
    app.state.loaded = None
    if model is not None:
        app.state.loaded = LoadedModel(model, fingerprint or "in-memory")

    @app.exception_handler(BadRequest)
    def _bad_request(_request: Request, exc: BadRequest):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(RequestValidationError)
    def _unparsable(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    class _NotLoaded(Exception):
        pass

    @app.exception_handler(_NotLoaded)
    def _not_loaded(_request: Request, _exc: _NotLoaded):
        return JSONResponse(status_code=503,
                            content={"error": "checkpoint not loaded"})

    def _require_model() -> LoadedModel:
        if app.state.loaded is None:
            raise _NotLoaded()
        return app.state.loaded

    @app.get("/api/v1/health")
    def health():
        loaded = _require_model()
        return {"status": "ok", "model_fingerprint": loaded.fingerprint,
                "instruments": list(INSTRUMENT_NAMES)}

    @app.post("/api/v1/generate")
    def generate(body: dict):
        loaded = _require_model()
        request, _ = parse_generate_body(body)
        result = decode(request, loaded.model)
        return {
            "grid": result.pattern.grid.tolist(),
            "confidence": [[round(float(c), 6) for c in row]
                           for row in result.confidence],
            "trace_summary": {
                "initial_masked": result.trace.initial_masked,
                "iterations": len(result.trace.steps),
                "masked_counts": result.trace.masked_counts(),
            },
        }

    @app.post("/api/v1/metrics")
    def metrics(body: dict):
        if not isinstance(body, dict):
            raise BadRequest("request body must be a JSON object")
        grid = _expect_matrix(body, "grid", allow_null=False)
        pattern = DrumPattern(np.array(grid, dtype=np.uint8))
        m = compute_metrics(pattern)
        return {
            "beat_strength": m.beat_strength,
            "pattern_repetition": m.pattern_repetition,
            "instrument_balance": m.instrument_balance,
            "density": pattern.density,
        }

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
