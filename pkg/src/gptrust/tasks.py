"""Gap triage and extrapolation horizons driven by knowledge profiles."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .gpr import GprModel, predict
from .knowledge import knowledge_values

__all__ = [
    "Decision",
    "GapReport",
    "HorizonReport",
    "find_missing_segments",
    "default_queries_per_gap",
    "assess_gaps",
    "extrapolation_horizon",
]


class Decision(str, enum.Enum):
    INTERPOLATE = "Interpolate"
    REJECT = "Reject"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Imputed:
    location: float
    mean: float
    obs_std: float
    knowledge: float


@dataclass(frozen=True)
class GapReport:
    gap_index: int
    start: float
    end: float
    min_knowledge: float
    decision: Decision
    imputed: tuple | None = None

    @property
    def span(self):
        return (self.start, self.end)

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class HorizonReport:
    last_train_time: float
    horizon: float | None
    times: np.ndarray
    knowledge: np.ndarray

    @property
    def profile(self):
        return list(zip(self.times.tolist(), self.knowledge.tolist()))


def find_missing_segments(times, missing) -> list[tuple[float, float]]:
    """Maximal runs of missing samples as half-open ``[first missing, first present after)``.

    A run reaching the end of the series is closed one sampling step past its
    last sample.
    """
    t = np.asarray(times, dtype=float).reshape(-1)
    m = np.asarray(missing, dtype=bool).reshape(-1)
    if t.shape != m.shape:
        raise InputError("times and mask must have equal lengths")
    if np.any(np.diff(t) <= 0):
        raise InputError("timestamps must be strictly increasing")
    spans = []
    edges = np.diff(np.r_[0, m.astype(np.int8), 0])
    for lo, hi in zip(np.nonzero(edges == 1)[0], np.nonzero(edges == -1)[0]):
        if hi < t.shape[0]:
            end = t[hi]
        else:
            end = t[-1] + (t[-1] - t[-2] if t.shape[0] > 1 else 1.0)
        spans.append((float(t[lo]), float(end)))
    return spans


def default_queries_per_gap(length: float, sampling_interval: float | None) -> int:
    if not sampling_interval:
        return 9
    return max(9, int(math.ceil(length / sampling_interval - 1e-9)))


def _gap_grid(start, end, count):
    return np.linspace(start, end, count + 2)[1:-1]


def assess_gaps(model: GprModel, spans, rho: float, queries_per_gap: int | None = None,
                sampling_interval: float | None = None, impute_at=None) -> list[GapReport]:
    """Score each gap by its minimum knowledge over ``queries_per_gap`` interior points.

    Gaps whose minimum reaches ``rho`` are imputed, at the ``impute_at`` locations
    that fall inside the span if given, otherwise at the interior grid.
    """
    if not 0.0 <= rho <= 1.0:
        raise InputError(f"rho must lie in [0, 1], got {rho}")
    if queries_per_gap is not None and queries_per_gap < 1:
        raise InputError("queries_per_gap must be at least 1")
    impute_at = None if impute_at is None else np.asarray(impute_at, dtype=float).reshape(-1)
    reports = []
    for i, (start, end) in enumerate(spans):
        start, end = float(start), float(end)
        if end < start:
            raise InputError(f"gap {i} has end {end} before start {start}")
        count = queries_per_gap or default_queries_per_gap(end - start, sampling_interval)
        g = knowledge_values(model, _gap_grid(start, end, count))
        g_min = float(g.min())
        if g_min >= rho:
            if impute_at is None:
                where = _gap_grid(start, end, count)
            else:
                where = impute_at[(impute_at >= start) & (impute_at < end)]
            pred = predict(model, where)
            kn = knowledge_values(model, where) if where.size else np.zeros(0)
            imputed = tuple(
                Imputed(float(a), float(b), float(c), float(d))
                for a, b, c, d in zip(where, pred.mean, pred.obs_std, kn)
            )
            reports.append(GapReport(i, start, end, g_min, Decision.INTERPOLATE, imputed))
        else:
            reports.append(GapReport(i, start, end, g_min, Decision.REJECT, None))
    return reports


def time_grid(start: float, stop: float, step: float) -> np.ndarray:
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def extrapolation_horizon(model: GprModel, start: float, stop: float, step: float, rho: float) -> HorizonReport:
    """First grid time in ``[start, stop]`` whose knowledge score falls below ``rho``.

    Later re-entries above ``rho`` (periodic kernels oscillate) are ignored.
    """
    if not start < stop:
        raise InputError(f"need start < stop, got {start} and {stop}")
    if not step > 0:
        raise InputError("step must be positive")
    if not 0.0 < rho <= 1.0:
        raise InputError(f"rho must lie in (0, 1], got {rho}")
    if model.dim != 1:
        raise InputError("extrapolation horizons need a one-dimensional (time) input")
    times = time_grid(start, stop, step)
    g = knowledge_values(model, times)
    below = np.nonzero(g < rho)[0]
    horizon = float(times[below[0]]) if below.size else None
    last = float(model.train_inputs.max()) if model.n else float("nan")
    return HorizonReport(last, horizon, times, g)
