"""Early-stopping decisions from step-indexed intermediate values.

The median rule: past the warmup steps, and once enough peers have reported
a value at the same step, a trial is pruned iff its value is strictly worse
than the peer median. Ties survive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import median

from .core import MINIMIZE, PrunerConfig


class NonFiniteValueError(ValueError):
    pass


@dataclass(frozen=True)
class StepSnapshot:
    """Intermediate values reported at exactly ``step`` by all other trials
    of the study that reached that step."""

    step: int
    peer_values: tuple


def collect_snapshot(trials, trial_id: str, step: int) -> StepSnapshot:
    """Build the peer snapshot for one trial from study trial records.

    ``trials`` is an iterable of objects with ``trial_id`` and
    ``intermediates`` (ordered (step, value) pairs). Any state counts;
    trials that never reported this exact step are excluded.
    """
    values = []
    for t in trials:
        if t.trial_id == trial_id:
            continue
        for s, v in t.intermediates:
            if s == step:
                values.append(v)
                break
    return StepSnapshot(step=step, peer_values=tuple(values))


def should_prune(
    current_value: float,
    snapshot: StepSnapshot,
    direction: str,
    config: PrunerConfig,
) -> bool:
    if not math.isfinite(current_value):
        raise NonFiniteValueError(f"non-finite intermediate value {current_value!r}")
    if config.kind == "none":
        return False
    if snapshot.step < config.n_warmup_steps:
        return False
    if len(snapshot.peer_values) < config.n_min_trials:
        return False
    m = median(snapshot.peer_values)
    if direction == MINIMIZE:
        return current_value > m
    return current_value < m
