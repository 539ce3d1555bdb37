"""Exact Gaussian process regression.

Conditioning caches the Cholesky factor of ``K + noise_var * I`` and the weight
vector ``alpha = (K + noise_var * I)^{-1} y``; prediction, knowledge scores and
anomaly thresholds all reuse them.  Hyperparameters are learned by maximizing the
log marginal likelihood in log space with multi-start L-BFGS-B.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.optimize
from scipy.spatial.distance import pdist

from . import kernels as kern
from .errors import FitError, InputError, NumericalError
from .kernels import Kernel, as_points
from .linalg import CholFactor, chol_jittered, logdet, solve_spd

__all__ = [
    "Normalization",
    "Dataset",
    "GprModel",
    "Predictive",
    "FitOptions",
    "condition",
    "predict",
    "log_marginal_likelihood",
    "fit",
    "dumps_model",
    "loads_model",
    "save_model",
    "load_model",
    "model_digest",
]

log = logging.getLogger(__name__)

MODEL_FORMAT = "gptrust-model/1"
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Normalization:
    """z-score record: normalized = (y - mean) / scale."""

    mean: float
    scale: float


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    outputs: np.ndarray
    normalization: Normalization | None = None

    def __post_init__(self):
        X = as_points(self.inputs)
        y = np.asarray(self.outputs, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise InputError(f"{X.shape[0]} inputs but {y.shape[0]} outputs")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputError("dataset contains non-finite values")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "outputs", y)

    def __len__(self):
        return self.outputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def normalized(self) -> "Dataset":
        """Copy carrying a z-score record computed from the outputs."""
        if len(self) == 0:
            return Dataset(self.inputs, self.outputs, Normalization(0.0, 1.0))
        scale = float(np.std(self.outputs))
        return Dataset(self.inputs, self.outputs, Normalization(float(np.mean(self.outputs)), scale if scale > 0 else 1.0))

    @property
    def targets(self) -> np.ndarray:
        """Outputs in the space the GP is conditioned in."""
        if self.normalization is None:
            return self.outputs
        return (self.outputs - self.normalization.mean) / self.normalization.scale


@dataclass(frozen=True, eq=False)
class GprModel:
    kernel: Kernel
    noise_var: float
    data: Dataset
    chol: CholFactor
    alpha: np.ndarray
    info: dict = field(default_factory=dict, repr=False)

    @property
    def train_inputs(self) -> np.ndarray:
        return self.data.inputs

    @property
    def n(self) -> int:
        return len(self.data)

    @property
    def dim(self) -> int:
        return self.data.dim

    @property
    def out_scale(self) -> float:
        """Multiplier taking normalized standard deviations to output units."""
        return 1.0 if self.data.normalization is None else self.data.normalization.scale

    def check_queries(self, queries) -> np.ndarray:
        Xq = as_points(queries)
        if self.n and Xq.shape[0] and Xq.shape[1] != self.dim:
            raise InputError(f"query dimension {Xq.shape[1]} does not match training dimension {self.dim}")
        return Xq


@dataclass(frozen=True)
class Predictive:
    """Per-query predictive moments in output units (arrays of equal length)."""

    mean: np.ndarray
    latent_var: np.ndarray
    obs_var: np.ndarray

    def __len__(self):
        return self.mean.shape[0]

    @property
    def obs_std(self) -> np.ndarray:
        return np.sqrt(self.obs_var)


def condition(kernel: Kernel, noise_var: float, data: Dataset, base_jitter: float = 1e-9) -> GprModel:
    """Posterior of a zero-mean GP given ``data``; ``N = 0`` gives the prior."""
    if not (math.isfinite(noise_var) and noise_var >= 0):
        raise InputError(f"noise_var must be finite and >= 0, got {noise_var}")
    if len(data) == 0:
        return GprModel(kernel, float(noise_var), data, CholFactor(np.zeros((0, 0))), np.zeros(0))
    K = kernel(data.inputs)
    K[np.diag_indices_from(K)] += noise_var
    try:
        factor = chol_jittered(K, base_jitter)
    except NumericalError as exc:
        hint = " (duplicate inputs with zero noise variance?)" if noise_var == 0 else ""
        raise NumericalError(f"{exc}{hint}", exc.jitter_ladder) from None
    alpha = solve_spd(factor, data.targets)
    alpha.flags.writeable = False
    return GprModel(kernel, float(noise_var), data, factor, alpha)


def _latent_moments(model: GprModel, Xq: np.ndarray):
    """Normalized-space mean, prior variance and variance reduction at each query."""
    prior = model.kernel.diag(Xq)
    if model.n == 0:
        return np.zeros(Xq.shape[0]), prior, np.zeros(Xq.shape[0])
    Ks = model.kernel(Xq, model.train_inputs)
    mean = Ks @ model.alpha
    V = sla.solve_triangular(model.chol.lower, Ks.T, lower=True, check_finite=False)
    reduction = np.einsum("ij,ij->j", V, V)
    return mean, prior, reduction


def predict(model: GprModel, queries) -> Predictive:
    Xq = model.check_queries(queries)
    mean, prior, reduction = _latent_moments(model, Xq)
    latent = np.clip(prior - reduction, 0.0, prior)
    s2 = model.out_scale**2
    if model.data.normalization is not None:
        mean = mean * model.data.normalization.scale + model.data.normalization.mean
    latent = latent * s2
    return Predictive(mean, latent, latent + model.noise_var * s2)


def log_marginal_likelihood(kernel: Kernel, noise_var: float, data: Dataset, base_jitter: float = 1e-9):
    """Log evidence of the targets and its gradient over ``kernels.pack`` coordinates."""
    n = len(data)
    if n < 1:
        raise InputError("log marginal likelihood needs at least one observation")
    X, y = data.inputs, data.targets
    A = kernel(X)
    A[np.diag_indices_from(A)] += noise_var
    factor = chol_jittered(A, base_jitter)
    alpha = solve_spd(factor, y)
    value = -0.5 * float(y @ alpha) - 0.5 * logdet(factor) - 0.5 * n * _LOG_2PI

    W = np.outer(alpha, alpha) - solve_spd(factor, np.eye(n))
    grad = [0.5 * float(np.sum(W * dK)) for dK in kernel.grads(X)]
    grad.append(0.5 * noise_var * float(np.trace(W)))
    return value, np.array(grad)


@dataclass
class FitOptions:
    restarts: int = 5
    seed: int = 0
    noise_var: float | None = None
    fix_noise: bool = False
    fixed: tuple = ()
    normalize: bool = True
    max_iter: int = 500
    gtol: float = 1e-5


_LENGTH_LIKE = ("len", "plen")
_VARIANCE_LIKE = ("var",)


def _param_kind(label: str) -> str:
    return label.rsplit(".", 1)[-1]


def _bounds(layout, y_var, dist):
    out = []
    for label in layout:
        kind = _param_kind(label)
        if label == "noise_var":
            lo, hi = 1e-6 * y_var, 10.0 * y_var
        elif kind in _VARIANCE_LIKE:
            lo, hi = 1e-6 * y_var, 1e6 * y_var
        else:
            lo, hi = 1e-4 * dist, 1e4 * dist
        out.append((math.log(lo), math.log(hi)))
    return np.array(out)


def _initial_points(template, noise0, layout, opts, rng, y_var, dist, bounds):
    base = kern.pack(template, noise0)
    starts = [base]
    for _ in range(max(opts.restarts, 1) - 1):
        theta = base.copy()
        for i, label in enumerate(layout):
            kind = _param_kind(label)
            if label == "noise_var":
                if not opts.fix_noise:
                    theta[i] = math.log(y_var) + rng.uniform(math.log(1e-4), 0.0)
            elif kind in opts.fixed:
                continue
            elif kind in _VARIANCE_LIKE:
                theta[i] = math.log(y_var) + rng.uniform(math.log(0.1), math.log(10.0))
            elif kind in _LENGTH_LIKE:
                theta[i] = math.log(dist) + rng.uniform(math.log(0.1), math.log(10.0))
        starts.append(theta)
    return [np.clip(t, bounds[:, 0], bounds[:, 1]) for t in starts]


def fit(data: Dataset, kernel_template: Kernel, opts: FitOptions | None = None) -> GprModel:
    """Maximum marginal likelihood hyperparameters, best of ``opts.restarts`` starts.

    The first start is the template itself (with ``opts.noise_var`` or a tenth of
    the output variance); the rest are log-uniform draws around the data scales.
    """
    opts = opts or FitOptions()
    if len(data) < 2:
        raise InputError(f"fit needs at least 2 observations, got {len(data)}")
    if opts.normalize:
        data = data.normalized()
    y_var = float(np.var(data.targets)) or 1.0
    dist = float(np.median(pdist(data.inputs))) or 1.0
    layout = kern.param_layout(kernel_template)
    noise0 = opts.noise_var if opts.noise_var is not None else 0.1 * y_var
    if opts.normalize and opts.noise_var is not None:
        noise0 = opts.noise_var / data.normalization.scale**2

    free = np.array([
        not ((label == "noise_var" and opts.fix_noise) or (label != "noise_var" and _param_kind(label) in opts.fixed))
        for label in layout
    ])
    bounds = _bounds(layout, y_var, dist)
    if opts.fix_noise and noise0 == 0:
        bounds[-1] = (-np.inf, -np.inf)
    rng = np.random.Generator(np.random.Philox(opts.seed))
    starts = _initial_points(kernel_template, noise0, layout, opts, rng, y_var, dist, bounds)

    def objective(theta_free, theta_full):
        theta = theta_full.copy()
        theta[free] = theta_free
        k, nv = kern.unpack(kernel_template, theta)
        try:
            value, grad = log_marginal_likelihood(k, nv, data)
        except NumericalError:
            return 1e25, np.zeros(theta_free.shape)
        return -value, -grad[free]

    best_theta, best_value, diagnostics = None, -np.inf, []
    for i, theta0 in enumerate(starts):
        init_value = -objective(theta0[free], theta0)[0]
        record = {"restart": i, "init_lml": init_value}
        try:
            if free.any():
                res = scipy.optimize.minimize(
                    objective, theta0[free], args=(theta0,), jac=True, method="L-BFGS-B",
                    bounds=bounds[free], options={"maxiter": opts.max_iter, "gtol": opts.gtol},
                )
                theta = theta0.copy()
                theta[free] = res.x
                value = -float(res.fun)
                record.update(final_lml=value, iterations=int(res.nit), message=str(res.message))
            else:
                theta, value = theta0, init_value
                record.update(final_lml=value, iterations=0, message="no free parameters")
        except (ValueError, ArithmeticError) as exc:
            record.update(error=str(exc))
            diagnostics.append(record)
            continue
        diagnostics.append(record)
        log.debug("restart %d: lml %.6g -> %.6g", i, init_value, value)
        for cand, cand_value in ((theta0, init_value), (theta, value)):
            if cand_value > best_value and cand_value > -1e25:
                best_theta, best_value = cand, cand_value

    if best_theta is None:
        raise FitError("all optimizer restarts failed", diagnostics)
    kernel, noise_var = kern.unpack(kernel_template, best_theta)
    model = condition(kernel, noise_var, data)
    model.info.update(log_likelihood=best_value, restarts=diagnostics)
    return model


# -- persistence -----------------------------------------------------------------

def dumps_model(model: GprModel) -> str:
    norm = model.data.normalization
    doc = {
        "format": MODEL_FORMAT,
        "kernel": str(model.kernel),
        "noise_var": model.noise_var,
        "dim": model.dim,
        "inputs": model.data.inputs.tolist(),
        "outputs": model.data.outputs.tolist(),
        "normalization": None if norm is None else {"mean": norm.mean, "scale": norm.scale},
        "log_likelihood": model.info.get("log_likelihood"),
    }
    return json.dumps(doc, indent=1) + "\n"


def loads_model(text: str) -> GprModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"model file is not valid JSON: {exc}") from None
    if doc.get("format") != MODEL_FORMAT:
        raise InputError(f"unsupported model format {doc.get('format')!r}")
    norm = doc["normalization"]
    inputs = np.asarray(doc["inputs"], dtype=float).reshape(-1, doc["dim"])
    data = Dataset(inputs, np.asarray(doc["outputs"], dtype=float),
                   None if norm is None else Normalization(norm["mean"], norm["scale"]))
    model = condition(kern.parse_kernel(doc["kernel"]), doc["noise_var"], data)
    if doc.get("log_likelihood") is not None:
        model.info["log_likelihood"] = doc["log_likelihood"]
    return model


def save_model(model: GprModel, path) -> str:
    text = dumps_model(model)
    Path(path).write_text(text)
    return text


def load_model(path) -> GprModel:
    return loads_model(Path(path).read_text())


def model_digest(model: GprModel) -> str:
    return hashlib.sha256(dumps_model(model).encode()).hexdigest()
