"""Durable system of record: studies, trials, intermediate values, tokens.

Backed by a single SQLite database (WAL, synchronous=FULL) in the data
directory, so acknowledged writes survive kill -9. All mutating operations
run as atomic transactions under one process-wide lock, which also gives
the per-study total order the protocol relies on.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import math
import secrets
import sqlite3
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import core
from .sampler import ObservationHistory

SCHEMA_VERSION = 1

_SCHEMA = """
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS studies (
    study_id TEXT PRIMARY KEY,
    fingerprint TEXT NOT NULL UNIQUE,
    name TEXT NOT NULL,
    owner TEXT NOT NULL DEFAULT '',
    definition TEXT NOT NULL,
    created_at TEXT NOT NULL,
    trial_counter INTEGER NOT NULL DEFAULT 0,
    revision INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS trials (
    trial_id TEXT PRIMARY KEY,
    study_id TEXT NOT NULL REFERENCES studies(study_id),
    idx INTEGER NOT NULL,
    params TEXT NOT NULL,
    state TEXT NOT NULL,
    objective REAL,
    opened_at TEXT NOT NULL,
    closed_at TEXT,
    closed_seq INTEGER,
    revision INTEGER NOT NULL DEFAULT 0,
    UNIQUE (study_id, idx)
);
CREATE TABLE IF NOT EXISTS intermediates (
    trial_id TEXT NOT NULL REFERENCES trials(trial_id),
    step INTEGER NOT NULL,
    value REAL NOT NULL,
    PRIMARY KEY (trial_id, step)
);
CREATE TABLE IF NOT EXISTS tokens (
    token_id TEXT PRIMARY KEY,
    salt TEXT NOT NULL,
    secret_hash TEXT NOT NULL,
    owner TEXT NOT NULL,
    issued_at REAL NOT NULL,
    validity REAL NOT NULL,
    revoked INTEGER NOT NULL DEFAULT 0
);
"""


class StorageError(Exception):
    pass


class StorageUnavailableError(StorageError):
    pass


class UnknownStudyError(StorageError):
    pass


class UnknownTrialError(StorageError):
    pass


class UnknownTokenError(StorageError):
    pass


class ParamsMismatchError(StorageError):
    pass


class IllegalTransitionError(StorageError):
    """Finalize/prune on a trial that is not running."""


class TrialNotRunningError(StorageError):
    pass


class NonMonotonicStepError(StorageError):
    pass


class AuthRejectedError(StorageError):
    """Authentication failure. ``reason`` is one of unknown/expired/revoked
    and must never leak to external callers."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__("authentication rejected")


@dataclass(frozen=True)
class StudyRecord:
    study_id: str
    name: str
    fingerprint: str
    owner: str
    space: core.SearchSpace
    properties: core.StudyProperties
    created_at: str
    trial_counter: int
    revision: int


@dataclass(frozen=True)
class TrialRecord:
    trial_id: str
    study_id: str
    index: int
    params: dict
    state: str
    intermediates: tuple
    objective: float | None
    opened_at: str
    closed_at: str | None
    revision: int


@dataclass(frozen=True)
class TokenRecord:
    token_id: str
    owner: str
    issued_at: float
    validity: float
    revoked: bool


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def _hash_secret(salt: str, secret: str) -> str:
    return hashlib.sha256((salt + secret).encode("utf-8")).hexdigest()


class Storage:
    """Transactional store. One instance per process; thread-safe."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        try:
            self._db = sqlite3.connect(
                self.data_dir / "state.db",
                check_same_thread=False,
                isolation_level=None,
                timeout=30.0,
            )
        except sqlite3.Error as exc:
            raise StorageUnavailableError(str(exc)) from exc
        self._db.execute("PRAGMA journal_mode=WAL")
        self._db.execute("PRAGMA synchronous=FULL")
        self._db.execute("PRAGMA foreign_keys=ON")
        self._db.executescript(_SCHEMA)
        with self._txn():
            row = self._db.execute(
                "SELECT value FROM meta WHERE key='schema_version'"
            ).fetchone()
            if row is None:
                self._db.execute(
                    "INSERT INTO meta (key, value) VALUES ('schema_version', ?)",
                    (str(SCHEMA_VERSION),),
                )
            elif int(row[0]) != SCHEMA_VERSION:
                raise StorageError(f"unsupported schema version {row[0]}")

    def close(self):
        with self._lock:
            self._db.close()

    # -- transaction helper ------------------------------------------------

    def _txn(self):
        return _Txn(self)

    # -- studies -----------------------------------------------------------

    def create_or_attach_study(self, name, space, properties, owner=""):
        """Idempotent by canonical fingerprint: attach if a study with the
        same definition exists, create otherwise."""
        core.validate_space(space)
        core.validate_properties(properties)
        fingerprint = core.canonical_fingerprint(name, space, properties)
        study_id = fingerprint[:32]
        definition = core.canonical_json(name, space, properties)
        with self._txn():
            row = self._db.execute(
                "SELECT study_id FROM studies WHERE fingerprint=?", (fingerprint,)
            ).fetchone()
            if row is not None:
                return row[0], False
            self._db.execute(
                "INSERT INTO studies (study_id, fingerprint, name, owner, definition,"
                " created_at) VALUES (?,?,?,?,?,?)",
                (study_id, fingerprint, name, owner, definition, _now_iso()),
            )
            return study_id, True

    def get_study(self, study_id) -> StudyRecord:
        with self._lock:
            row = self._db.execute(
                "SELECT study_id, fingerprint, name, owner, definition, created_at,"
                " trial_counter, revision FROM studies WHERE study_id=?",
                (study_id,),
            ).fetchone()
        if row is None:
            raise UnknownStudyError(study_id)
        return self._study_record(row)

    def _study_record(self, row) -> StudyRecord:
        doc = json.loads(row[4])
        return StudyRecord(
            study_id=row[0],
            fingerprint=row[1],
            name=row[2],
            owner=row[3],
            space=core.parse_space(doc["space"]),
            properties=core.parse_properties(doc["properties"]),
            created_at=row[5],
            trial_counter=row[6],
            revision=row[7],
        )

    def list_studies(self, owner=None):
        q = ("SELECT study_id, fingerprint, name, owner, definition, created_at,"
             " trial_counter, revision FROM studies")
        args = ()
        if owner is not None:
            q += " WHERE owner=?"
            args = (owner,)
        with self._lock:
            rows = self._db.execute(q + " ORDER BY created_at, study_id", args).fetchall()
        return [self._study_record(r) for r in rows]

    # -- trials ------------------------------------------------------------

    def open_trial(self, study_id, params) -> TrialRecord:
        with self._txn():
            row = self._db.execute(
                "SELECT definition, trial_counter FROM studies WHERE study_id=?",
                (study_id,),
            ).fetchone()
            if row is None:
                raise UnknownStudyError(study_id)
            space = core.parse_space(json.loads(row[0])["space"])
            if not core.params_conform(space, params):
                raise ParamsMismatchError(f"params do not conform to study {study_id}")
            index = row[1]
            trial_id = f"{study_id}-{index:06d}"
            opened_at = _now_iso()
            self._db.execute(
                "INSERT INTO trials (trial_id, study_id, idx, params, state, opened_at)"
                " VALUES (?,?,?,?,?,?)",
                (trial_id, study_id, index,
                 json.dumps(params, sort_keys=True, separators=(",", ":")),
                 core.RUNNING, opened_at),
            )
            self._db.execute(
                "UPDATE studies SET trial_counter=trial_counter+1,"
                " revision=revision+1 WHERE study_id=?",
                (study_id,),
            )
        return self.get_trial(trial_id)

    def get_trial(self, trial_id) -> TrialRecord:
        with self._lock:
            row = self._db.execute(
                "SELECT trial_id, study_id, idx, params, state, objective, opened_at,"
                " closed_at, revision FROM trials WHERE trial_id=?",
                (trial_id,),
            ).fetchone()
            if row is None:
                raise UnknownTrialError(trial_id)
            steps = self._db.execute(
                "SELECT step, value FROM intermediates WHERE trial_id=? ORDER BY step",
                (trial_id,),
            ).fetchall()
        return TrialRecord(
            trial_id=row[0], study_id=row[1], index=row[2],
            params=json.loads(row[3]), state=row[4],
            intermediates=tuple((s, v) for s, v in steps),
            objective=row[5], opened_at=row[6], closed_at=row[7], revision=row[8],
        )

    def list_trials(self, study_id, state=None):
        with self._lock:
            exists = self._db.execute(
                "SELECT 1 FROM studies WHERE study_id=?", (study_id,)
            ).fetchone()
            if exists is None:
                raise UnknownStudyError(study_id)
            q = "SELECT trial_id FROM trials WHERE study_id=?"
            args = [study_id]
            if state is not None:
                q += " AND state=?"
                args.append(state)
            ids = [r[0] for r in self._db.execute(q + " ORDER BY idx", args).fetchall()]
        return [self.get_trial(tid) for tid in ids]

    def _close_trial(self, trial_id, new_state, objective=None):
        with self._txn():
            row = self._db.execute(
                "SELECT state FROM trials WHERE trial_id=?", (trial_id,)
            ).fetchone()
            if row is None:
                raise UnknownTrialError(trial_id)
            if not core.legal_transition(row[0], new_state):
                raise IllegalTransitionError(f"{row[0]} -> {new_state}")
            seq = self._db.execute(
                "SELECT COALESCE(MAX(closed_seq), 0) + 1 FROM trials"
            ).fetchone()[0]
            self._db.execute(
                "UPDATE trials SET state=?, objective=?, closed_at=?, closed_seq=?,"
                " revision=revision+1 WHERE trial_id=?",
                (new_state, objective, _now_iso(), seq, trial_id),
            )
        return self.get_trial(trial_id)

    def finalize_trial(self, trial_id, objective=None, failed=False) -> TrialRecord:
        if failed:
            return self._close_trial(trial_id, core.FAILED)
        if objective is None or not isinstance(objective, (int, float)) \
                or not math.isfinite(objective):
            raise ValueError("completed trials require a finite numeric objective")
        return self._close_trial(trial_id, core.COMPLETED, float(objective))

    def mark_pruned(self, trial_id) -> TrialRecord:
        return self._close_trial(trial_id, core.PRUNED)

    def record_intermediate(self, trial_id, step, value):
        with self._txn():
            row = self._db.execute(
                "SELECT state FROM trials WHERE trial_id=?", (trial_id,)
            ).fetchone()
            if row is None:
                raise UnknownTrialError(trial_id)
            if row[0] != core.RUNNING:
                raise TrialNotRunningError(f"trial is {row[0]}")
            last = self._db.execute(
                "SELECT MAX(step) FROM intermediates WHERE trial_id=?", (trial_id,)
            ).fetchone()[0]
            if last is not None and step <= last:
                raise NonMonotonicStepError(f"step {step} after step {last}")
            self._db.execute(
                "INSERT INTO intermediates (trial_id, step, value) VALUES (?,?,?)",
                (trial_id, step, float(value)),
            )

    # -- queries -----------------------------------------------------------

    def best_trial(self, study_id):
        study = self.get_study(study_id)
        completed = self.list_trials(study_id, state=core.COMPLETED)
        if not completed:
            return None
        sign = 1.0 if study.properties.direction == core.MINIMIZE else -1.0
        return min(completed, key=lambda t: (sign * t.objective, t.index))

    def observation_history(self, study_id) -> ObservationHistory:
        study = self.get_study(study_id)
        with self._lock:
            rows = self._db.execute(
                "SELECT params, objective FROM trials WHERE study_id=? AND state=?"
                " ORDER BY closed_seq",
                (study_id, core.COMPLETED),
            ).fetchall()
        entries = tuple((json.loads(p), o) for p, o in rows)
        return ObservationHistory(entries=entries, direction=study.properties.direction)

    def study_counts(self, study_id) -> dict:
        self.get_study(study_id)
        with self._lock:
            rows = self._db.execute(
                "SELECT state, COUNT(*) FROM trials WHERE study_id=? GROUP BY state",
                (study_id,),
            ).fetchall()
        counts = {s: 0 for s in core.TRIAL_STATES}
        counts.update(dict(rows))
        return counts

    # -- tokens ------------------------------------------------------------

    def issue_token(self, owner, validity_seconds) -> tuple[str, str]:
        """Returns (token_id, secret). The secret is shown exactly once."""
        if validity_seconds <= 0:
            raise ValueError("validity must be positive")
        token_id = secrets.token_hex(8)
        secret = secrets.token_urlsafe(32)
        salt = secrets.token_hex(16)
        with self._txn():
            self._db.execute(
                "INSERT INTO tokens (token_id, salt, secret_hash, owner, issued_at,"
                " validity) VALUES (?,?,?,?,?,?)",
                (token_id, salt, _hash_secret(salt, secret), owner,
                 time.time(), float(validity_seconds)),
            )
        return token_id, secret

    def revoke_token(self, token_id):
        with self._txn():
            cur = self._db.execute(
                "UPDATE tokens SET revoked=1 WHERE token_id=?", (token_id,)
            )
            if cur.rowcount == 0:
                raise UnknownTokenError(token_id)

    def authenticate(self, secret: str) -> str:
        with self._lock:
            rows = self._db.execute(
                "SELECT salt, secret_hash, owner, issued_at, validity, revoked"
                " FROM tokens"
            ).fetchall()
        for salt, secret_hash, owner, issued_at, validity, revoked in rows:
            if hmac.compare_digest(secret_hash, _hash_secret(salt, secret)):
                if revoked:
                    raise AuthRejectedError("revoked")
                if time.time() >= issued_at + validity:
                    raise AuthRejectedError("expired")
                return owner
        raise AuthRejectedError("unknown")

    def list_tokens(self):
        with self._lock:
            rows = self._db.execute(
                "SELECT token_id, owner, issued_at, validity, revoked FROM tokens"
                " ORDER BY issued_at"
            ).fetchall()
        return [
            TokenRecord(token_id=r[0], owner=r[1], issued_at=r[2],
                        validity=r[3], revoked=bool(r[4]))
            for r in rows
        ]

    # for tests that need a known secret (e.g. golden-file replay)
    def _insert_token(self, token_id, secret, owner, validity_seconds, issued_at=None):
        salt = secrets.token_hex(16)
        with self._txn():
            self._db.execute(
                "INSERT INTO tokens (token_id, salt, secret_hash, owner, issued_at,"
                " validity) VALUES (?,?,?,?,?,?)",
                (token_id, salt, _hash_secret(salt, secret), owner,
                 issued_at if issued_at is not None else time.time(),
                 float(validity_seconds)),
            )


class _Txn:
    """BEGIN IMMEDIATE transaction scope under the storage lock."""

    def __init__(self, storage: Storage):
        self._s = storage

    def __enter__(self):
        self._s._lock.acquire()
        try:
            self._s._db.execute("BEGIN IMMEDIATE")
        except sqlite3.Error as exc:
            self._s._lock.release()
            raise StorageUnavailableError(str(exc)) from exc
        return self

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self._s._db.execute("COMMIT")
            else:
                self._s._db.execute("ROLLBACK")
        finally:
            self._s._lock.release()
        return False
