"""HTTP protocol server.

Worker endpoints (token in the request path): POST /api/ask/{token},
/api/tell/{token}, /api/should_prune/{token}. Read and token-management
endpoints for the dashboard run under an admin credential or a session
cookie obtained from /api/login.

Bodies are parsed by hand rather than through a schema framework so the
error responses (and the golden-file byte exchanges) stay fully under our
control: unknown fields are rejected with 422.
"""

from __future__ import annotations

import logging
import math
import secrets
import threading
import time
from collections import defaultdict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import core, pruner, sampler, storage

log = logging.getLogger("hopaas.api")

SESSION_TTL = 3600.0

# The three token-rejection causes must be indistinguishable to callers.
_AUTH_FAILURE = {"detail": "invalid token"}
_UNAUTHORIZED = {"detail": "unauthorized"}


class ApiError(Exception):
    def __init__(self, status: int, detail):
        self.status = status
        self.detail = detail


def _err(status, detail):
    return ApiError(status, detail)


def _get(body, key, typ, what, required=True, default=None):
    if key not in body:
        if required:
            raise _err(422, f"missing field '{key}'")
        return default
    v = body[key]
    if typ is float:
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise _err(422, f"field '{key}' must be a number")
        return float(v)
    if typ is int:
        if not isinstance(v, int) or isinstance(v, bool):
            raise _err(422, f"field '{key}' must be an integer")
        return v
    if not isinstance(v, typ):
        raise _err(422, f"field '{key}' must be {typ.__name__}")
    return v


def create_app(store: storage.Storage, admin_key: str, static_dir=None) -> FastAPI:
    app = FastAPI(docs_url=None, redoc_url=None, openapi_url=None)
    app.state.store = store
    app.state.admin_key = admin_key
    app.state.sessions = {}  # session id -> expiry
    study_locks = defaultdict(threading.Lock)
    locks_guard = threading.Lock()

    def study_lock(study_id):
        with locks_guard:
            return study_locks[study_id]

    @app.exception_handler(ApiError)
    async def api_error_handler(request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"detail": exc.detail})

    async def parse_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise _err(422, "body must be a JSON object")
        if not isinstance(body, dict):
            raise _err(422, "body must be a JSON object")
        return body

    def authenticate(token: str) -> str:
        try:
            return store.authenticate(token)
        except storage.AuthRejectedError as exc:
            log.info("auth rejected (%s)", exc.reason)
            raise _err(401, _AUTH_FAILURE["detail"])

    # -- worker protocol ---------------------------------------------------

    @app.post("/api/ask/{token}")
    async def ask(token: str, request: Request):
        owner = authenticate(token)
        body = await parse_body(request)
        unknown = set(body) - {"study_name", "properties", "space"}
        if unknown:
            raise _err(422, f"unknown fields {sorted(unknown)}")
        study_name = _get(body, "study_name", str, "ask")
        try:
            space = core.parse_space(_get(body, "space", dict, "ask"))
            properties = core.parse_properties(_get(body, "properties", dict, "ask"))
            core.validate_space(space)
            core.validate_properties(properties)
        except core.SpaceValidationError as exc:
            raise _err(422, exc.violations)
        except (core.WireError, core.ConfigValidationError) as exc:
            raise _err(422, str(exc))

        try:
            study_id, created = store.create_or_attach_study(
                study_name, space, properties, owner=owner
            )
        except storage.StorageUnavailableError as exc:
            raise _err(503, str(exc))

        with study_lock(study_id):
            study = store.get_study(study_id)
            history = store.observation_history(study_id)
            rng = np.random.default_rng([properties.sampler.seed & 0xFFFFFFFF,
                                         study.trial_counter])
            try:
                params = sampler.suggest(space, history, properties.sampler, rng,
                                         n_taken=study.trial_counter)
            except sampler.GridExhaustedError as exc:
                raise _err(409, str(exc))
            trial = store.open_trial(study_id, params)
        log.info("ask study=%s trial=%s created=%s", study_id, trial.trial_id, created)
        return JSONResponse({
            "study_id": study_id,
            "trial_id": trial.trial_id,
            "trial_index": trial.index,
            "params": {name: trial.params[name] for name in sorted(trial.params)},
        })

    @app.post("/api/tell/{token}")
    async def tell(token: str, request: Request):
        authenticate(token)
        body = await parse_body(request)
        unknown = set(body) - {"trial_id", "objective", "state"}
        if unknown:
            raise _err(422, f"unknown fields {sorted(unknown)}")
        trial_id = _get(body, "trial_id", str, "tell")
        has_objective = "objective" in body
        has_state = "state" in body
        if has_objective == has_state:
            raise _err(422, "exactly one of 'objective' and 'state' is required")
        if has_state and body["state"] != "failed":
            raise _err(422, "state must be 'failed'")
        if has_objective:
            objective = _get(body, "objective", float, "tell")
            if not math.isfinite(objective):
                raise _err(422, "objective must be finite")

        with study_lock(_study_of(trial_id)):
            try:
                if has_state:
                    trial = store.finalize_trial(trial_id, failed=True)
                else:
                    trial = store.finalize_trial(trial_id, objective=objective)
            except storage.UnknownTrialError:
                raise _err(404, "unknown trial")
            except storage.IllegalTransitionError as exc:
                raise _err(409, str(exc))
            best = store.best_trial(trial.study_id)
        log.info("tell study=%s trial=%s state=%s", trial.study_id, trial_id, trial.state)
        out = {"ok": True}
        if best is not None:
            out["best_objective"] = best.objective
        return JSONResponse(out)

    @app.post("/api/should_prune/{token}")
    async def should_prune(token: str, request: Request):
        authenticate(token)
        body = await parse_body(request)
        unknown = set(body) - {"trial_id", "step", "value"}
        if unknown:
            raise _err(422, f"unknown fields {sorted(unknown)}")
        trial_id = _get(body, "trial_id", str, "should_prune")
        step = _get(body, "step", int, "should_prune")
        value = _get(body, "value", float, "should_prune")
        if step < 0:
            raise _err(422, "step must be >= 0")
        if not math.isfinite(value):
            raise _err(422, "value must be finite")

        with study_lock(_study_of(trial_id)):
            try:
                store.record_intermediate(trial_id, step, value)
            except storage.UnknownTrialError:
                raise _err(404, "unknown trial")
            except storage.TrialNotRunningError as exc:
                raise _err(409, str(exc))
            except storage.NonMonotonicStepError as exc:
                raise _err(422, str(exc))
            trial = store.get_trial(trial_id)
            study = store.get_study(trial.study_id)
            peers = store.list_trials(trial.study_id)
            snapshot = pruner.collect_snapshot(peers, trial_id, step)
            verdict = pruner.should_prune(
                value, snapshot, study.properties.direction, study.properties.pruner
            )
            if verdict:
                store.mark_pruned(trial_id)
        if verdict:
            log.info("prune study=%s trial=%s step=%d", trial.study_id, trial_id, step)
        return JSONResponse({"prune": verdict})

    # -- admin/session auth ------------------------------------------------

    @app.post("/api/login")
    async def login(request: Request):
        body = await parse_body(request)
        if body.get("password") != admin_key:
            raise _err(401, _UNAUTHORIZED["detail"])
        sid = secrets.token_urlsafe(24)
        app.state.sessions[sid] = time.time() + SESSION_TTL
        resp = JSONResponse({"ok": True})
        resp.set_cookie("session", sid, httponly=True, samesite="lax")
        return resp

    def require_admin(request: Request):
        if request.headers.get("x-admin-key") == admin_key:
            return
        sid = request.cookies.get("session")
        if sid and app.state.sessions.get(sid, 0) > time.time():
            return
        raise _err(401, _UNAUTHORIZED["detail"])

    # -- read APIs ---------------------------------------------------------

    def _study_summary(study):
        counts = store.study_counts(study.study_id)
        best = store.best_trial(study.study_id)
        return {
            "study_id": study.study_id,
            "name": study.name,
            "fingerprint": study.fingerprint,
            "direction": study.properties.direction,
            "created_at": study.created_at,
            "trial_counter": study.trial_counter,
            "counts": counts,
            "best_objective": None if best is None else best.objective,
            "best_trial_index": None if best is None else best.index,
        }

    @app.get("/api/studies")
    async def list_studies(request: Request):
        require_admin(request)
        return JSONResponse({"studies": [_study_summary(s) for s in store.list_studies()]})

    @app.get("/api/studies/{study_id}")
    async def get_study(study_id: str, request: Request):
        require_admin(request)
        try:
            study = store.get_study(study_id)
        except storage.UnknownStudyError:
            raise _err(404, "unknown study")
        out = _study_summary(study)
        out["space"] = core.space_wire(study.space)
        out["properties"] = core.properties_wire(study.properties)
        return JSONResponse(out)

    def _trial_view(t):
        return {
            "trial_id": t.trial_id,
            "trial_index": t.index,
            "state": t.state,
            "params": t.params,
            "objective": t.objective,
            "opened_at": t.opened_at,
            "closed_at": t.closed_at,
            "n_steps": len(t.intermediates),
        }

    @app.get("/api/studies/{study_id}/trials")
    async def list_trials(study_id: str, request: Request, state: str | None = None):
        require_admin(request)
        if state is not None and state not in core.TRIAL_STATES:
            raise _err(422, f"unknown state '{state}'")
        try:
            trials = store.list_trials(study_id, state=state)
        except storage.UnknownStudyError:
            raise _err(404, "unknown study")
        return JSONResponse({"trials": [_trial_view(t) for t in trials]})

    @app.get("/api/studies/{study_id}/curves")
    async def curves(study_id: str, request: Request):
        require_admin(request)
        try:
            trials = store.list_trials(study_id)
        except storage.UnknownStudyError:
            raise _err(404, "unknown study")
        return JSONResponse({
            "study_id": study_id,
            "trials": [
                {
                    "trial_id": t.trial_id,
                    "trial_index": t.index,
                    "state": t.state,
                    "objective": t.objective,
                    "points": [[s, v] for s, v in t.intermediates],
                }
                for t in trials
            ],
        })

    # -- token management --------------------------------------------------

    def _token_view(t):
        return {
            "token_id": t.token_id,
            "owner": t.owner,
            "issued_at": t.issued_at,
            "validity": t.validity,
            "revoked": t.revoked,
            "expires_at": t.issued_at + t.validity,
        }

    @app.get("/api/tokens")
    async def list_tokens(request: Request):
        require_admin(request)
        return JSONResponse({"tokens": [_token_view(t) for t in store.list_tokens()]})

    @app.post("/api/tokens")
    async def create_token(request: Request):
        require_admin(request)
        body = await parse_body(request)
        unknown = set(body) - {"validity_seconds", "owner"}
        if unknown:
            raise _err(422, f"unknown fields {sorted(unknown)}")
        validity = _get(body, "validity_seconds", float, "tokens")
        if validity <= 0:
            raise _err(422, "validity_seconds must be positive")
        owner = _get(body, "owner", str, "tokens", required=False, default="admin")
        token_id, secret = store.issue_token(owner, validity)
        return JSONResponse({"token_id": token_id, "token": secret,
                             "validity": validity, "owner": owner})

    @app.delete("/api/tokens/{token_id}")
    async def revoke_token(token_id: str, request: Request):
        require_admin(request)
        try:
            store.revoke_token(token_id)
        except storage.UnknownTokenError:
            raise _err(404, "unknown token")
        return JSONResponse({"ok": True})

    @app.get("/health")
    async def health():
        return JSONResponse({"status": "ok"})

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="static")

    return app


def _study_of(trial_id: str) -> str:
    # trial ids are "<study_id>-<index>"
    return trial_id.rsplit("-", 1)[0]
