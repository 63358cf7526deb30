"""Domain types shared by every other module.

Search spaces, study identity (canonical fingerprint), sampler/pruner
configuration and the trial lifecycle. Everything here is an immutable
value; all operations are pure functions, safe to share across threads.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

# Parameter kinds
UNIFORM = "uniform"
LOG_UNIFORM = "log-uniform"
INTEGER = "integer"
CATEGORICAL = "categorical"
PARAM_KINDS = (UNIFORM, LOG_UNIFORM, INTEGER, CATEGORICAL)

# Trial states
RUNNING = "running"
COMPLETED = "completed"
PRUNED = "pruned"
FAILED = "failed"
TRIAL_STATES = (RUNNING, COMPLETED, PRUNED, FAILED)

MINIMIZE = "minimize"
MAXIMIZE = "maximize"


class SpaceValidationError(ValueError):
    """Raised when a search space violates its invariants.

    ``violations`` lists every problem found, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ConfigValidationError(ValueError):
    """Raised for malformed sampler/pruner/direction configuration."""


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    low: float | None = None
    high: float | None = None
    choices: tuple[str, ...] | None = None

    def violations(self):
        problems = []
        if not self.name:
            problems.append("EmptyName")
        if self.kind not in PARAM_KINDS:
            problems.append(f"UnknownKind({self.name})")
            return problems
        if self.kind == CATEGORICAL:
            if self.low is not None or self.high is not None:
                problems.append(f"BadBounds({self.name})")
            if not self.choices or len(set(self.choices)) != len(self.choices):
                problems.append(f"EmptyChoices({self.name})")
        else:
            if self.choices is not None:
                problems.append(f"EmptyChoices({self.name})")
            lo, hi = self.low, self.high
            if lo is None or hi is None or not (math.isfinite(lo) and math.isfinite(hi)):
                problems.append(f"BadBounds({self.name})")
            elif not lo < hi:
                problems.append(f"BadBounds({self.name})")
            elif self.kind == LOG_UNIFORM and lo <= 0:
                problems.append(f"BadBounds({self.name})")
            elif self.kind == INTEGER and (lo != int(lo) or hi != int(hi)):
                problems.append(f"BadBounds({self.name})")
        return problems

    def contains(self, value) -> bool:
        """True iff ``value`` is an in-range assignment for this parameter."""
        if self.kind == CATEGORICAL:
            return isinstance(value, str) and value in self.choices
        if self.kind == INTEGER:
            return (
                isinstance(value, (int, np.integer))
                and not isinstance(value, bool)
                and self.low <= value <= self.high
            )
        return (
            isinstance(value, (int, float, np.floating))
            and not isinstance(value, bool)
            and math.isfinite(value)
            and self.low <= value <= self.high
        )


@dataclass(frozen=True)
class SearchSpace:
    params: tuple[ParamSpec, ...]

    def __post_init__(self):
        # Canonical order: sorted by name. Declaration order never matters.
        object.__setattr__(self, "params", tuple(sorted(self.params, key=lambda p: p.name)))

    def names(self):
        return [p.name for p in self.params]

    def spec(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "tpe"
    seed: int = 42
    n_startup_trials: int = 10
    gamma: float = 0.25
    n_candidates: int = 24
    grid_points: int = 5

    def violations(self):
        problems = []
        if self.kind not in ("random", "tpe", "grid"):
            problems.append(f"UnknownSamplerKind({self.kind})")
        if self.kind == "tpe":
            if self.n_startup_trials < 1:
                problems.append("BadStartupTrials")
            if not 0.0 < self.gamma < 1.0:
                problems.append("BadGamma")
            if self.n_candidates < 1:
                problems.append("BadCandidates")
        if self.kind == "grid" and self.grid_points < 1:
            problems.append("BadGridPoints")
        return problems


@dataclass(frozen=True)
class PrunerConfig:
    kind: str = "none"
    n_warmup_steps: int = 0
    n_min_trials: int = 1

    def violations(self):
        problems = []
        if self.kind not in ("none", "median"):
            problems.append(f"UnknownPrunerKind({self.kind})")
        if self.kind == "median":
            if self.n_warmup_steps < 0:
                problems.append("BadWarmup")
            if self.n_min_trials < 1:
                problems.append("BadMinTrials")
        return problems


@dataclass(frozen=True)
class StudyProperties:
    direction: str
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    pruner: PrunerConfig = field(default_factory=PrunerConfig)

    def violations(self):
        problems = []
        if self.direction not in (MINIMIZE, MAXIMIZE):
            problems.append(f"UnknownDirection({self.direction})")
        problems.extend(self.sampler.violations())
        problems.extend(self.pruner.violations())
        return problems


def validate_space(space: SearchSpace) -> None:
    """Raise SpaceValidationError listing every invariant violation."""
    problems = []
    if not space.params:
        problems.append("EmptySpace")
    names = [p.name for p in space.params]
    for name in sorted(set(n for n in names if names.count(n) > 1)):
        problems.append(f"DuplicateName({name})")
    for p in space.params:
        problems.extend(p.violations())
    if problems:
        raise SpaceValidationError(problems)


def validate_properties(properties: StudyProperties) -> None:
    problems = properties.violations()
    if problems:
        raise ConfigValidationError("; ".join(problems))


def params_conform(space: SearchSpace, params: dict) -> bool:
    """True iff ``params`` assigns exactly one in-range value to every spec."""
    if set(params) != set(space.names()):
        return False
    return all(space.spec(name).contains(value) for name, value in params.items())


# ---------------------------------------------------------------------------
# Canonical serialization and fingerprint

def _num(x, kind):
    # Integer bounds render as ints, everything else via shortest
    # round-trip float repr (json.dumps uses repr for floats).
    if kind == INTEGER:
        return int(x)
    return float(x)


def space_wire(space: SearchSpace) -> dict:
    """Canonical wire form of a search space: params sorted by name."""
    out = {}
    for p in space.params:
        if p.kind == CATEGORICAL:
            out[p.name] = {"kind": p.kind, "choices": list(p.choices)}
        else:
            out[p.name] = {
                "kind": p.kind,
                "low": _num(p.low, p.kind),
                "high": _num(p.high, p.kind),
            }
    return out


def properties_wire(properties: StudyProperties) -> dict:
    s, p = properties.sampler, properties.pruner
    sampler = {"kind": s.kind, "seed": int(s.seed)}
    if s.kind == "tpe":
        sampler.update(
            n_startup_trials=int(s.n_startup_trials),
            gamma=float(s.gamma),
            n_candidates=int(s.n_candidates),
        )
    if s.kind == "grid":
        sampler["grid_points"] = int(s.grid_points)
    pruner = {"kind": p.kind}
    if p.kind == "median":
        pruner.update(n_warmup_steps=int(p.n_warmup_steps), n_min_trials=int(p.n_min_trials))
    return {"direction": properties.direction, "sampler": sampler, "pruner": pruner}


def canonical_document(name: str, space: SearchSpace, properties: StudyProperties) -> dict:
    return {"name": name, "space": space_wire(space), "properties": properties_wire(properties)}


def canonical_json(name: str, space: SearchSpace, properties: StudyProperties) -> str:
    return json.dumps(
        canonical_document(name, space, properties),
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    )


def canonical_fingerprint(name: str, space: SearchSpace, properties: StudyProperties) -> str:
    """SHA-256 hex digest of the canonical study definition.

    Equal definitions hash equal regardless of parameter declaration order;
    any semantic difference (name, bounds, choices, direction, sampler or
    pruner settings) changes the digest.
    """
    return hashlib.sha256(canonical_json(name, space, properties).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Wire parsing (the ask-request schema; also used by storage round-trips)

_PARAM_KEYS = {"kind", "low", "high", "choices"}
_SAMPLER_KEYS = {"kind", "seed", "n_startup_trials", "gamma", "n_candidates", "grid_points"}
_PRUNER_KEYS = {"kind", "n_warmup_steps", "n_min_trials"}
_PROPS_KEYS = {"direction", "sampler", "pruner"}


class WireError(ValueError):
    """Malformed wire payload (unknown field, wrong type)."""


def _require_mapping(obj, what):
    if not isinstance(obj, dict):
        raise WireError(f"{what} must be an object")
    return obj


def parse_space(wire: dict) -> SearchSpace:
    _require_mapping(wire, "space")
    specs = []
    for name, body in wire.items():
        _require_mapping(body, f"space.{name}")
        unknown = set(body) - _PARAM_KEYS
        if unknown:
            raise WireError(f"space.{name}: unknown fields {sorted(unknown)}")
        kind = body.get("kind")
        if kind == CATEGORICAL:
            choices = body.get("choices")
            if not isinstance(choices, list) or not all(isinstance(c, str) for c in choices):
                raise WireError(f"space.{name}.choices must be a list of strings")
            specs.append(ParamSpec(name=name, kind=kind, choices=tuple(choices)))
        else:
            low, high = body.get("low"), body.get("high")
            if not isinstance(low, (int, float)) or not isinstance(high, (int, float)) \
                    or isinstance(low, bool) or isinstance(high, bool):
                raise WireError(f"space.{name}: low/high must be numbers")
            specs.append(ParamSpec(name=name, kind=str(kind), low=float(low), high=float(high)))
    return SearchSpace(params=tuple(specs))


def _parse_int(body, key, default, what):
    v = body.get(key, default)
    if not isinstance(v, int) or isinstance(v, bool):
        raise WireError(f"{what}.{key} must be an integer")
    return v


def parse_properties(wire: dict) -> StudyProperties:
    _require_mapping(wire, "properties")
    unknown = set(wire) - _PROPS_KEYS
    if unknown:
        raise WireError(f"properties: unknown fields {sorted(unknown)}")
    direction = wire.get("direction")
    if direction not in (MINIMIZE, MAXIMIZE):
        raise WireError("properties.direction must be 'minimize' or 'maximize'")

    s = _require_mapping(wire.get("sampler", {}), "properties.sampler")
    unknown = set(s) - _SAMPLER_KEYS
    if unknown:
        raise WireError(f"properties.sampler: unknown fields {sorted(unknown)}")
    defaults = SamplerConfig()
    gamma = s.get("gamma", defaults.gamma)
    if not isinstance(gamma, (int, float)) or isinstance(gamma, bool):
        raise WireError("properties.sampler.gamma must be a number")
    sampler = SamplerConfig(
        kind=str(s.get("kind", defaults.kind)),
        seed=_parse_int(s, "seed", defaults.seed, "properties.sampler"),
        n_startup_trials=_parse_int(s, "n_startup_trials", defaults.n_startup_trials, "properties.sampler"),
        gamma=float(gamma),
        n_candidates=_parse_int(s, "n_candidates", defaults.n_candidates, "properties.sampler"),
        grid_points=_parse_int(s, "grid_points", defaults.grid_points, "properties.sampler"),
    )

    p = _require_mapping(wire.get("pruner", {}), "properties.pruner")
    unknown = set(p) - _PRUNER_KEYS
    if unknown:
        raise WireError(f"properties.pruner: unknown fields {sorted(unknown)}")
    pdefaults = PrunerConfig()
    pruner = PrunerConfig(
        kind=str(p.get("kind", pdefaults.kind)),
        n_warmup_steps=_parse_int(p, "n_warmup_steps", pdefaults.n_warmup_steps, "properties.pruner"),
        n_min_trials=_parse_int(p, "n_min_trials", pdefaults.n_min_trials, "properties.pruner"),
    )
    return StudyProperties(direction=direction, sampler=sampler, pruner=pruner)


# ---------------------------------------------------------------------------
# Trial lifecycle

LEGAL_TRANSITIONS = {(RUNNING, COMPLETED), (RUNNING, PRUNED), (RUNNING, FAILED)}


def legal_transition(old: str, new: str) -> bool:
    return (old, new) in LEGAL_TRANSITIONS


# ---------------------------------------------------------------------------
# Uniform random sampling (startup / fallback)

def sample_uniform_random(space: SearchSpace, rng: np.random.Generator) -> dict:
    """Draw one independent uniform value per parameter.

    log-uniform draws uniformly in log space; integer bounds are inclusive.
    Parameters are drawn in canonical (sorted-name) order so the result is
    deterministic given the rng state.
    """
    out = {}
    for p in space.params:
        if p.kind == UNIFORM:
            out[p.name] = float(rng.uniform(p.low, p.high))
        elif p.kind == LOG_UNIFORM:
            out[p.name] = float(np.exp(rng.uniform(np.log(p.low), np.log(p.high))))
        elif p.kind == INTEGER:
            out[p.name] = int(rng.integers(int(p.low), int(p.high) + 1))
        else:
            out[p.name] = p.choices[int(rng.integers(len(p.choices)))]
    return out
