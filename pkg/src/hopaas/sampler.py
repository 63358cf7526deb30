"""Suggestion engine: random startup, TPE, and grid search.

TPE splits the observation history at the gamma-quantile into good and bad
sets, fits an independent one-dimensional Parzen density per parameter for
each set, draws candidates from the good density and returns the candidate
maximizing the summed log density ratio. All functions are pure and
deterministic given their explicit rng.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .core import (
    CATEGORICAL,
    INTEGER,
    LOG_UNIFORM,
    MINIMIZE,
    UNIFORM,
    ParamSpec,
    SamplerConfig,
    SearchSpace,
    params_conform,
    sample_uniform_random,
)

BANDWIDTH_FLOOR = 1e-3  # fraction of the parameter range


class EmptyHistoryError(ValueError):
    pass


class IncompatibleHistoryError(ValueError):
    """History entry params do not conform to the study space."""


class GridExhaustedError(ValueError):
    """Every lattice point of a grid study has been handed out."""


@dataclass(frozen=True)
class ObservationHistory:
    """Completed-trial record feeding the surrogate: (params, objective)
    pairs in completion order, plus the optimization direction."""

    entries: tuple  # of (params: dict, objective: float)
    direction: str

    def __len__(self):
        return len(self.entries)


def split_good_bad(history: ObservationHistory, gamma: float):
    """Partition history into the best ceil(gamma*n) entries (at least one)
    and the rest. Ties broken by earlier completion order into the good set.
    """
    n = len(history)
    if n == 0:
        raise EmptyHistoryError("history is empty")
    n_good = max(1, math.ceil(gamma * n))
    sign = 1.0 if history.direction == MINIMIZE else -1.0
    order = sorted(range(n), key=lambda i: (sign * history.entries[i][1], i))
    good_idx = set(order[:n_good])
    good = tuple(e for i, e in enumerate(history.entries) if i in good_idx)
    bad = tuple(e for i, e in enumerate(history.entries) if i not in good_idx)
    return good, bad


class ParzenDensity:
    """One-dimensional mixture over a single parameter.

    Continuous and integer kinds: one truncated-Gaussian kernel per observed
    value plus a uniform background component, each weighted 1/(n+1).
    log-uniform works in log space. Categorical: add-one smoothed category
    probabilities.
    """

    def __init__(self, values, spec: ParamSpec):
        for v in values:
            if not spec.contains(v):
                raise ValueError(f"value {v!r} out of range for {spec.name}")
        self.spec = spec
        self.kind = spec.kind
        if self.kind == CATEGORICAL:
            counts = {c: 1 for c in spec.choices}  # add-one smoothing
            for v in values:
                counts[v] += 1
            total = len(values) + len(spec.choices)
            self.probs = np.array([counts[c] / total for c in spec.choices])
            return

        if self.kind == LOG_UNIFORM:
            self.lo, self.hi = math.log(spec.low), math.log(spec.high)
            centers = np.log(np.asarray(values, dtype=float))
        elif self.kind == INTEGER:
            # Mass of integer v is the kernel integral over [v-0.5, v+0.5].
            self.lo, self.hi = spec.low - 0.5, spec.high + 0.5
            centers = np.asarray(values, dtype=float)
        else:
            self.lo, self.hi = float(spec.low), float(spec.high)
            centers = np.asarray(values, dtype=float)

        width = self.hi - self.lo
        n = len(centers)
        self.centers = centers
        self.bandwidth = max(width / max(1, n), width * BANDWIDTH_FLOOR)
        self.weight = 1.0 / (n + 1)  # per component, background included
        # Truncation renormalizers so each kernel integrates to 1 on [lo, hi].
        if n:
            a = (self.lo - centers) / self.bandwidth
            b = (self.hi - centers) / self.bandwidth
            self.cdf_lo = ndtr(a)
            self.norms = ndtr(b) - self.cdf_lo

    # -- evaluation --------------------------------------------------------

    def pdf(self, value) -> float:
        if self.kind == CATEGORICAL:
            return float(self.probs[self.spec.choices.index(value)])
        if self.kind == INTEGER:
            return self._mass(int(value))
        x = math.log(value) if self.kind == LOG_UNIFORM else float(value)
        dens = self.weight / (self.hi - self.lo)  # background
        if len(self.centers):
            z = (x - self.centers) / self.bandwidth
            kern = np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * self.bandwidth)
            dens += self.weight * float(np.sum(kern / self.norms))
        return dens

    def _mass(self, v: int) -> float:
        mass = self.weight / (self.spec.high - self.spec.low + 1)
        if len(self.centers):
            hi = ndtr((v + 0.5 - self.centers) / self.bandwidth)
            lo = ndtr((v - 0.5 - self.centers) / self.bandwidth)
            mass += self.weight * float(np.sum((hi - lo) / self.norms))
        return mass

    def logpdf(self, value) -> float:
        return math.log(self.pdf(value))

    # -- sampling ----------------------------------------------------------

    def sample(self, rng: np.random.Generator):
        if self.kind == CATEGORICAL:
            return self.spec.choices[int(rng.choice(len(self.probs), p=self.probs))]
        n = len(self.centers)
        comp = int(rng.integers(n + 1))
        if comp == n:  # background
            x = rng.uniform(self.lo, self.hi)
        else:
            # Inverse-CDF draw from the truncated Gaussian kernel.
            u = rng.uniform()
            q = self.cdf_lo[comp] + u * self.norms[comp]
            q = min(max(q, 1e-12), 1 - 1e-12)
            x = self.centers[comp] + self.bandwidth * float(ndtri(q))
            x = min(max(x, self.lo), self.hi)
        if self.kind == LOG_UNIFORM:
            return float(np.clip(math.exp(x), self.spec.low, self.spec.high))
        if self.kind == INTEGER:
            return int(np.clip(round(x), self.spec.low, self.spec.high))
        return float(x)


def fit_parzen(values, spec: ParamSpec) -> ParzenDensity:
    """Fit the per-parameter density; empty values give the pure background."""
    return ParzenDensity(values, spec)


def grid_lattice(space: SearchSpace, grid_points: int):
    """Per-parameter grids, names in lexicographic order."""
    axes = []
    for p in space.params:  # already sorted by name
        if p.kind == CATEGORICAL:
            axes.append((p.name, list(p.choices)))
        elif p.kind == INTEGER:
            pts = np.unique(np.round(np.linspace(p.low, p.high, grid_points)).astype(int))
            axes.append((p.name, [int(v) for v in pts]))
        elif p.kind == LOG_UNIFORM:
            pts = np.exp(np.linspace(math.log(p.low), math.log(p.high), grid_points))
            axes.append((p.name, [float(v) for v in pts]))
        else:
            axes.append((p.name, [float(v) for v in np.linspace(p.low, p.high, grid_points)]))
    return axes


def grid_next(space: SearchSpace, n_taken: int, grid_points: int):
    """Lattice point #n_taken in row-major order (first sorted name most
    significant), or raise GridExhaustedError past the end."""
    axes = grid_lattice(space, grid_points)
    size = math.prod(len(vals) for _, vals in axes)
    if n_taken >= size:
        raise GridExhaustedError(f"grid of {size} points exhausted")
    out = {}
    rem = n_taken
    for name, vals in reversed(axes):
        rem, i = divmod(rem, len(vals))
        out[name] = vals[i]
    return out


def suggest(
    space: SearchSpace,
    history: ObservationHistory,
    config: SamplerConfig,
    rng: np.random.Generator,
    n_taken: int | None = None,
) -> dict:
    """Produce the next parameter assignment for a study.

    random, or tpe still in its startup phase: uniform random. tpe: the
    density-ratio acquisition described in the module docstring. grid: the
    next unvisited lattice point (``n_taken`` counts points already handed
    out; defaults to the history length).
    """
    for params, _ in history.entries:
        if not params_conform(space, params):
            raise IncompatibleHistoryError(f"history entry {params!r} does not conform")

    if config.kind == "grid":
        taken = len(history) if n_taken is None else n_taken
        return grid_next(space, taken, config.grid_points)

    if config.kind == "random" or len(history) < config.n_startup_trials:
        return sample_uniform_random(space, rng)

    good, bad = split_good_bad(history, config.gamma)
    l_dens = {p.name: fit_parzen([e[0][p.name] for e in good], p) for p in space.params}
    g_dens = {p.name: fit_parzen([e[0][p.name] for e in bad], p) for p in space.params}

    best_score, best = -math.inf, None
    for _ in range(config.n_candidates):
        cand = {p.name: l_dens[p.name].sample(rng) for p in space.params}
        score = sum(
            l_dens[name].logpdf(v) - g_dens[name].logpdf(v) for name, v in cand.items()
        )
        if score > best_score:
            best_score, best = score, cand
    return best
