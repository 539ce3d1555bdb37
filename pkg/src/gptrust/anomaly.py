"""Residual-threshold anomaly detection with a knowledge-score reject option.

Stage one compares the knowledge score to ``rho`` and answers ``Unknown`` below
it.  Stage two flags ``|y - mean| > multiplier * obs_std`` as an anomaly.  ROC
curves rank samples by the standardized residual ``residual / threshold`` and
can be restricted to the samples admitted by the gate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, InputError
from .gpr import GprModel, predict
from .knowledge import KnowledgeScore, knowledge_profile, knowledge_values

__all__ = [
    "Label",
    "Detection",
    "TriageVerdict",
    "RocCurve",
    "anomaly_threshold",
    "detect",
    "two_stage_detect",
    "triage",
    "standardized_residuals",
    "roc_curve",
    "sweep_rho",
]

DEFAULT_MULTIPLIER = 3.0


class Label(str, enum.Enum):
    NORMAL = "Normal"
    ANOMALY = "Anomaly"
    UNKNOWN = "Unknown"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Detection:
    label: Label
    residual: float
    threshold: float


@dataclass(frozen=True)
class TriageVerdict:
    label: Label
    knowledge: KnowledgeScore
    residual: float
    threshold: float

    def rederive(self, rho: float) -> Label:
        if self.knowledge.value < rho:
            return Label.UNKNOWN
        return Label.ANOMALY if self.residual > self.threshold else Label.NORMAL


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    n_used: int
    n_total: int

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _check_multiplier(multiplier):
    if not (multiplier > 0 and math.isfinite(multiplier)):
        raise InputError(f"multiplier must be a positive finite real, got {multiplier}")


def _check_rho(rho):
    if not 0.0 <= rho <= 1.0:
        raise InputError(f"rho must lie in [0, 1], got {rho}")


def _one(query):
    return np.atleast_1d(np.asarray(query, dtype=float))[None, :]


def anomaly_threshold(model: GprModel, query, multiplier: float = DEFAULT_MULTIPLIER) -> float:
    """``multiplier`` predictive (observation) standard deviations at ``query``."""
    _check_multiplier(multiplier)
    return float(multiplier * predict(model, _one(query)).obs_std[0])


def _label(residual, threshold):
    return Label.ANOMALY if residual > threshold else Label.NORMAL


def detect(model: GprModel, query, y: float, multiplier: float = DEFAULT_MULTIPLIER) -> Detection:
    _check_multiplier(multiplier)
    if not math.isfinite(y):
        raise InputError(f"observation must be finite, got {y}")
    pred = predict(model, _one(query))
    residual = abs(y - float(pred.mean[0]))
    threshold = float(multiplier * pred.obs_std[0])
    return Detection(_label(residual, threshold), residual, threshold)


def two_stage_detect(model: GprModel, query, y: float, rho: float,
                     multiplier: float = DEFAULT_MULTIPLIER) -> TriageVerdict:
    _check_rho(rho)
    return triage(model, _one(query), [y], rho, multiplier)[0]


def triage(model: GprModel, X, y, rho: float, multiplier: float = DEFAULT_MULTIPLIER) -> list[TriageVerdict]:
    """Two-stage verdicts for a batch of (x, y) pairs.  Residual and threshold are
    reported for Unknown verdicts too."""
    _check_rho(rho)
    _check_multiplier(multiplier)
    y = np.asarray(y, dtype=float).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise InputError(f"observation {int(np.argmax(~np.isfinite(y)))} is not finite")
    pred = predict(model, X)
    if len(pred) != y.shape[0]:
        raise InputError(f"{len(pred)} inputs but {y.shape[0]} observations")
    scores = knowledge_profile(model, X)
    residual = np.abs(y - pred.mean)
    threshold = multiplier * pred.obs_std
    out = []
    for g, r, t in zip(scores, residual.tolist(), threshold.tolist()):
        label = Label.UNKNOWN if g.value < rho else _label(r, t)
        out.append(TriageVerdict(label, g, r, t))
    return out


def standardized_residuals(model: GprModel, X, y, multiplier: float = DEFAULT_MULTIPLIER) -> np.ndarray:
    """``|y - mean| / threshold``; values above 1 are anomalies at this multiplier."""
    pred = predict(model, X)
    return np.abs(np.asarray(y, dtype=float) - pred.mean) / (multiplier * pred.obs_std)


def roc_curve(scores, labels, admit=None) -> RocCurve:
    """ROC over admitted samples; ``labels`` are truthy for anomalies.

    Tied scores move the curve in one diagonal step.
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(bool)
    admit = np.ones_like(labels) if admit is None else np.asarray(admit).reshape(-1).astype(bool)
    if not scores.shape == labels.shape == admit.shape:
        raise InputError("scores, labels and admit must have equal lengths")
    s, lab = scores[admit], labels[admit]
    n_pos, n_neg = int(lab.sum()), int((~lab).sum())
    if n_pos == 0 or n_neg == 0:
        missing = "anomaly" if n_pos == 0 else "normal"
        raise DegenerateError(f"ROC needs both classes among admitted samples; no {missing} samples")

    order = np.argsort(-s, kind="stable")
    s, lab = s[order], lab[order]
    tp = np.cumsum(lab)
    fp = np.cumsum(~lab)
    # last index of each group of tied scores
    ends = np.r_[np.nonzero(np.diff(s))[0], s.shape[0] - 1]
    tpr = np.r_[0.0, tp[ends] / n_pos]
    fpr = np.r_[0.0, fp[ends] / n_neg]
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(fpr, tpr, auc, int(admit.sum()), int(admit.shape[0]))


@dataclass(frozen=True)
class SweepRow:
    rho: float
    n_used: int
    auc: float | None


def sweep_rho(model: GprModel, X, y, labels, grid, multiplier: float = DEFAULT_MULTIPLIER) -> list[SweepRow]:
    """AUC of the standardized-residual detector restricted to ``G >= rho`` for each rho."""
    grid = [float(r) for r in grid]
    for r in grid:
        _check_rho(r)
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise InputError("rho grid must be ascending")
    g = knowledge_values(model, X)
    scores = standardized_residuals(model, X, y, multiplier)
    rows = []
    for rho in grid:
        admit = g >= rho
        try:
            auc = roc_curve(scores, labels, admit).auc
        except DegenerateError:
            auc = None
        rows.append(SweepRow(rho, int(admit.sum()), auc))
    return rows
