"""Thin client for the optimization service's wire protocol.

A Study handle wraps ask / tell / should_prune for training scripts:

    import hopaas_client as hpc

    study = hpc.Study(
        name="my-study",
        space={"lr": hpc.log_uniform(1e-5, 1e-1), "layers": hpc.integer(1, 8)},
        direction="minimize",
        server="http://localhost:8021",
        token="...",
    )
    with study.trial() as trial:
        for step, loss in enumerate(train(trial.params)):
            if trial.should_prune(step, loss):
                break
        else:
            trial.tell(final_loss)

Server URL and token default to the HOPAAS_SERVER and HOPAAS_TOKEN
environment variables.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

import httpx

__all__ = [
    "Study", "Trial",
    "uniform", "log_uniform", "integer", "categorical",
    "HopaasError", "AuthError", "UnknownTrialError", "ConflictError",
    "ValidationError", "ConnectionError", "UsageError",
]


class HopaasError(Exception):
    pass


class AuthError(HopaasError):
    """401: bad, expired or revoked token."""


class UnknownTrialError(HopaasError):
    """404: the trial id is not known to the server."""


class ConflictError(HopaasError):
    """409: illegal trial transition (e.g. tell after tell or prune)."""


class ValidationError(HopaasError):
    """422: malformed request or invalid search space."""


class ConnectionError(HopaasError):  # noqa: A001 - mirrors the transport failure
    """The server could not be reached."""


class UsageError(HopaasError):
    """Client-side protocol misuse (e.g. tell without an open trial)."""


def uniform(low, high):
    return {"kind": "uniform", "low": float(low), "high": float(high)}


def log_uniform(low, high):
    return {"kind": "log-uniform", "low": float(low), "high": float(high)}


def integer(low, high):
    return {"kind": "integer", "low": int(low), "high": int(high)}


def categorical(choices):
    return {"kind": "categorical", "choices": [str(c) for c in choices]}


_STATUS_ERRORS = {
    401: AuthError,
    404: UnknownTrialError,
    409: ConflictError,
    422: ValidationError,
}


class Trial:
    """One open trial: parameter assignment plus tell / should_prune.

    Closed exactly once; a server-side prune verdict closes it locally too,
    so a later tell raises before any HTTP call.
    """

    def __init__(self, study: "Study", trial_id: str, index: int, params: dict):
        self._study = study
        self.trial_id = trial_id
        self.index = index
        self.params = dict(params)
        self.closed = False

    def tell(self, objective: float):
        self._ensure_open()
        body = {"trial_id": self.trial_id, "objective": float(objective)}
        resp = self._study._post("tell", body)
        self._close()
        return resp.get("best_objective")

    def fail(self):
        self._ensure_open()
        self._study._post("tell", {"trial_id": self.trial_id, "state": "failed"})
        self._close()

    def should_prune(self, step: int, value: float) -> bool:
        self._ensure_open()
        resp = self._study._post("should_prune", {
            "trial_id": self.trial_id, "step": int(step), "value": float(value)})
        if resp["prune"]:
            self._close()
            return True
        return False

    def _ensure_open(self):
        if self.closed:
            raise UsageError(f"trial {self.trial_id} is already closed")

    def _close(self):
        self.closed = True
        if self._study._open_trial is self:
            self._study._open_trial = None


class Study:
    """Handle on one optimization study; holds at most one open trial."""

    def __init__(self, name, space, direction="minimize", sampler=None,
                 pruner=None, server=None, token=None, timeout=30.0):
        self.name = name
        self.space = space
        self.properties = {"direction": direction}
        if sampler is not None:
            self.properties["sampler"] = sampler
        if pruner is not None:
            self.properties["pruner"] = pruner
        server = server or os.environ.get("HOPAAS_SERVER")
        token = token or os.environ.get("HOPAAS_TOKEN")
        if not server or not token:
            raise UsageError("server and token are required "
                             "(or set HOPAAS_SERVER / HOPAAS_TOKEN)")
        self._token = token
        self._http = httpx.Client(base_url=server.rstrip("/"), timeout=timeout)
        self._open_trial: Trial | None = None
        self.study_id = None
        self.best_objective = None

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def _post(self, endpoint, body) -> dict:
        try:
            resp = self._http.post(f"/api/{endpoint}/{self._token}", json=body)
        except httpx.HTTPError as exc:
            raise ConnectionError(str(exc)) from exc
        if resp.status_code in _STATUS_ERRORS:
            raise _STATUS_ERRORS[resp.status_code](_detail(resp))
        if resp.status_code >= 400:
            raise HopaasError(f"{endpoint} failed with {resp.status_code}: {resp.text}")
        out = resp.json()
        if "best_objective" in out:
            self.best_objective = out["best_objective"]
        return out

    def suggest(self) -> Trial:
        """Ask the server for a new trial; only one may be open per handle."""
        if self._open_trial is not None:
            raise UsageError("a trial is already open on this handle")
        resp = self._post("ask", {
            "study_name": self.name,
            "properties": self.properties,
            "space": self.space,
        })
        self.study_id = resp["study_id"]
        trial = Trial(self, resp["trial_id"], resp["trial_index"], resp["params"])
        self._open_trial = trial
        return trial

    @contextmanager
    def trial(self):
        """Open a trial; an unhandled exception inside the block reports the
        trial as failed instead of leaving it running forever."""
        t = self.suggest()
        try:
            yield t
        except BaseException:
            if not t.closed:
                try:
                    t.fail()
                except HopaasError:
                    pass
            raise
        finally:
            if t is self._open_trial:
                self._open_trial = None


def _detail(resp):
    try:
        return resp.json().get("detail", resp.text)
    except ValueError:
        return resp.text
