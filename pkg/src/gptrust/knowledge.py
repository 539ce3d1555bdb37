"""Knowledge scores: the fraction of prior latent variance removed by the training data.

For a query ``x`` the score is ``k(x)^T (K + noise_var I)^{-1} k(x) / k(x, x)``.
It never reads the training outputs, lies in [0, 1] for any valid kernel, is 0
where the posterior equals the prior and 1 where the data pin the latent value
down exactly.  The denominator is the prior variance at the query itself, so the
bound also holds for non-stationary kernels such as :class:`~gptrust.kernels.Linear`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, NumericalError
from .gpr import GprModel, _latent_moments, predict
from .linalg import quad_form

__all__ = [
    "KnowledgeScore",
    "GUARD",
    "knowledge_score",
    "knowledge_profile",
    "knowledge_values",
    "raw_knowledge",
    "definitional_knowledge",
]

GUARD = 1e-10
_MIN_PRIOR = 1e-300


@dataclass(frozen=True)
class KnowledgeScore:
    value: float
    prior_var: float
    posterior_var: float


def _clamp(raw: np.ndarray) -> np.ndarray:
    bad = (raw < -GUARD) | (raw > 1.0 + GUARD) | ~np.isfinite(raw)
    if np.any(bad):
        worst = raw[bad][0]
        raise NumericalError(f"knowledge score {worst!r} is outside [0, 1] beyond roundoff; the factorization is unreliable")
    return np.clip(raw, 0.0, 1.0)


def raw_knowledge(model: GprModel, queries):
    """Unclamped scores plus prior variances (normalized units), vectorized."""
    Xq = model.check_queries(queries)
    _, prior, reduction = _latent_moments(model, Xq)
    if np.any(prior <= _MIN_PRIOR):
        i = int(np.argmax(prior <= _MIN_PRIOR))
        raise DegenerateError(f"kernel has zero prior variance at query {Xq[i].tolist()}")
    return reduction / prior, prior


def knowledge_values(model: GprModel, queries) -> np.ndarray:
    """Clamped scores as a plain array."""
    raw, _ = raw_knowledge(model, queries)
    return _clamp(raw)


def knowledge_profile(model: GprModel, queries) -> list[KnowledgeScore]:
    raw, prior = raw_knowledge(model, queries)
    values = _clamp(raw)
    s2 = model.out_scale**2
    return [
        KnowledgeScore(float(g), float(p * s2), float(p * (1.0 - g) * s2))
        for g, p in zip(values, prior)
    ]


def knowledge_score(model: GprModel, query) -> KnowledgeScore:
    """Score at one query via a single triangular solve against the cached factor."""
    Xq = model.check_queries(np.atleast_1d(np.asarray(query, dtype=float))[None, :])
    prior = float(model.kernel.diag(Xq)[0])
    if prior <= _MIN_PRIOR:
        raise DegenerateError(f"kernel has zero prior variance at query {Xq[0].tolist()}")
    if model.n == 0:
        reduction = 0.0
    else:
        reduction = quad_form(model.chol, model.kernel(Xq, model.train_inputs)[0])
    value = float(_clamp(np.array([reduction / prior]))[0])
    s2 = model.out_scale**2
    return KnowledgeScore(value, prior * s2, prior * (1.0 - value) * s2)


def definitional_knowledge(model: GprModel, queries) -> np.ndarray:
    """(prior - posterior) / prior from predictive latent variances; a cross-check path."""
    pred = predict(model, queries)
    prior = model.kernel.diag(model.check_queries(queries)) * model.out_scale**2
    return (prior - pred.latent_var) / prior
