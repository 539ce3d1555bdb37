"""Covariance functions, their compositions and log-space hyperparameter gradients.

Kernels are small immutable trees.  Leaves (:class:`RBF`, :class:`Periodic`,
:class:`LocallyPeriodic`, :class:`Linear`) hold positive hyperparameters;
:class:`Sum` and :class:`Product` combine two or more children.  Every kernel
can be written to and read back from a compact expression string::

    sum(rbf(var=1.0, len=0.5), linear(var=0.1, offset=2.0))

Gradients are always taken with respect to the *logarithm* of each
hyperparameter, which is the space the optimizer in :mod:`gptrust.gpr` works in.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, fields, replace
from typing import ClassVar

import numpy as np

from .errors import InputError

__all__ = [
    "Kernel",
    "RBF",
    "Periodic",
    "LocallyPeriodic",
    "Linear",
    "Sum",
    "Product",
    "as_points",
    "eval_kernel",
    "eval_cross",
    "eval_gram_grads",
    "parse_kernel",
    "pack",
    "unpack",
    "param_layout",
]


def as_points(X) -> np.ndarray:
    """Coerce ``X`` to an (N, D) float array; a 1-D array is N scalar inputs."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        return X.reshape(1, 1)
    if X.ndim == 1:
        return X[:, None]
    if X.ndim != 2:
        raise InputError(f"expected points as an (N, D) array, got shape {X.shape}")
    return X


def _diff(X, X2):
    return X[:, None, :] - X2[None, :, :]


def _sqdist(X, X2):
    d = _diff(X, X2)
    return np.einsum("ijk,ijk->ij", d, d)


def _sin2(X, X2, period):
    """Sum over dimensions of sin^2(pi d / period); the Euclidean-norm variant is not PSD for D > 1."""
    return np.sum(np.sin(np.pi * _diff(X, X2) / period) ** 2, axis=-1)


def _period_grad(X, period):
    """d/d(log period) of the summed sin^2 term, times -1."""
    d = _diff(X, X)
    return np.pi / period * np.sum(d * np.sin(2.0 * np.pi * d / period), axis=-1)


class Kernel:
    """Base class.  Subclasses implement ``_cross``, ``_grads`` and the parameter API."""

    def __call__(self, X, X2=None) -> np.ndarray:
        X = as_points(X)
        X2 = X if X2 is None else as_points(X2)
        if X.shape[1] != X2.shape[1] and X.shape[0] and X2.shape[0]:
            raise InputError(f"dimension mismatch: {X.shape[1]} vs {X2.shape[1]}")
        return self._cross(X, X2)

    def diag(self, X) -> np.ndarray:
        X = as_points(X)
        return self._diag(X)

    def grads(self, X) -> list[np.ndarray]:
        """dK/d(log theta) for every hyperparameter, in :meth:`params` order."""
        return self._grads(as_points(X))

    def params(self) -> list[tuple[str, float]]:
        raise NotImplementedError

    def with_params(self, values) -> "Kernel":
        raise NotImplementedError

    def __add__(self, other):
        return Sum((self, other))

    def __mul__(self, other):
        return Product((self, other))

    def _cross(self, X, X2):
        raise NotImplementedError

    def _diag(self, X):
        return np.array([self._cross(x[None], x[None])[0, 0] for x in X])

    def _grads(self, X):
        raise NotImplementedError


@dataclass(frozen=True)
class _Leaf(Kernel):
    name: ClassVar[str] = ""

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InputError(f"{self.name}: hyperparameter {f.name}={v!r} must be a positive finite real")
            object.__setattr__(self, f.name, float(v))

    def params(self):
        return [(f"{self.name}.{f.name}", getattr(self, f.name)) for f in fields(self)]

    def with_params(self, values):
        values = list(values)
        names = [f.name for f in fields(self)]
        if len(values) != len(names):
            raise InputError(f"{self.name} takes {len(names)} parameters, got {len(values)}")
        return replace(self, **dict(zip(names, (float(v) for v in values))))

    def __str__(self):
        args = ", ".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return f"{self.name}({args})"


@dataclass(frozen=True)
class RBF(_Leaf):
    """Squared exponential ``var * exp(-r^2 / (2 len^2))``, isotropic."""

    var: float = 1.0
    len: float = 1.0
    name: ClassVar[str] = "rbf"

    def _cross(self, X, X2):
        return self.var * np.exp(-0.5 * _sqdist(X, X2) / self.len**2)

    def _diag(self, X):
        return np.full(X.shape[0], self.var)

    def _grads(self, X):
        r2 = _sqdist(X, X)
        K = self.var * np.exp(-0.5 * r2 / self.len**2)
        return [K, K * r2 / self.len**2]


@dataclass(frozen=True)
class Periodic(_Leaf):
    """Exp-sine-squared ``var * exp(-2 sum_d sin^2(pi (x_d - x'_d) / period) / len^2)``."""

    var: float = 1.0
    period: float = 1.0
    len: float = 1.0
    name: ClassVar[str] = "periodic"

    def _cross(self, X, X2):
        return self.var * np.exp(-2.0 * _sin2(X, X2, self.period) / self.len**2)

    def _diag(self, X):
        return np.full(X.shape[0], self.var)

    def _grads(self, X):
        s2 = _sin2(X, X, self.period)
        K = self.var * np.exp(-2.0 * s2 / self.len**2)
        d_period = K * 2.0 * _period_grad(X, self.period) / self.len**2
        d_len = K * 4.0 * s2 / self.len**2
        return [K, d_period, d_len]


@dataclass(frozen=True)
class LocallyPeriodic(_Leaf):
    """Periodic factor with its own length scale ``plen`` times an RBF envelope.

    ``var * exp(-2 sum_d sin^2(pi (x_d - x'_d) / period) / plen^2) * exp(-r^2 / (2 len^2))``.
    The sine is squared; the unsquared form is not positive semidefinite.
    """

    var: float = 1.0
    period: float = 1.0
    len: float = 1.0
    plen: float | None = None
    name: ClassVar[str] = "locper"

    def __post_init__(self):
        if self.plen is None:
            object.__setattr__(self, "plen", self.len)
        super().__post_init__()

    def _cross(self, X, X2):
        s2 = _sin2(X, X2, self.period)
        return self.var * np.exp(-2.0 * s2 / self.plen**2 - 0.5 * _sqdist(X, X2) / self.len**2)

    def _diag(self, X):
        return np.full(X.shape[0], self.var)

    def _grads(self, X):
        r2 = _sqdist(X, X)
        s2 = _sin2(X, X, self.period)
        K = self.var * np.exp(-2.0 * s2 / self.plen**2 - 0.5 * r2 / self.len**2)
        d_period = K * 2.0 * _period_grad(X, self.period) / self.plen**2
        d_len = K * r2 / self.len**2
        d_plen = K * 4.0 * s2 / self.plen**2
        return [K, d_period, d_len, d_plen]


@dataclass(frozen=True)
class Linear(_Leaf):
    """Dot-product kernel ``var * (x - offset) . (x' - offset)`` (not stationary)."""

    var: float = 1.0
    offset: float = 1.0
    name: ClassVar[str] = "linear"

    def _cross(self, X, X2):
        return self.var * ((X - self.offset) @ (X2 - self.offset).T)

    def _diag(self, X):
        Z = X - self.offset
        return self.var * np.einsum("ij,ij->i", Z, Z)

    def _grads(self, X):
        Z = X - self.offset
        K = self.var * (Z @ Z.T)
        s = Z.sum(axis=1)
        d_offset = -self.var * self.offset * (s[:, None] + s[None, :])
        return [K, d_offset]


@dataclass(frozen=True)
class _Composite(Kernel):
    children: tuple
    name: ClassVar[str] = ""

    def __post_init__(self):
        children = tuple(self.children)
        if len(children) < 2:
            raise InputError(f"{self.name} needs at least two children")
        if not all(isinstance(c, Kernel) for c in children):
            raise InputError(f"{self.name} children must be kernels")
        object.__setattr__(self, "children", children)

    def params(self):
        out = []
        for i, child in enumerate(self.children):
            out.extend((f"{i}/{label}", v) for label, v in child.params())
        return out

    def with_params(self, values):
        values = list(values)
        new, pos = [], 0
        for child in self.children:
            n = len(child.params())
            new.append(child.with_params(values[pos:pos + n]))
            pos += n
        if pos != len(values):
            raise InputError(f"{self.name}: expected {pos} parameters, got {len(values)}")
        return type(self)(tuple(new))

    def __str__(self):
        return f"{self.name}({', '.join(str(c) for c in self.children)})"


@dataclass(frozen=True)
class Sum(_Composite):
    name: ClassVar[str] = "sum"

    def _cross(self, X, X2):
        return sum(c._cross(X, X2) for c in self.children)

    def _diag(self, X):
        return sum(c._diag(X) for c in self.children)

    def _grads(self, X):
        return [g for c in self.children for g in c._grads(X)]


@dataclass(frozen=True)
class Product(_Composite):
    name: ClassVar[str] = "prod"

    def _cross(self, X, X2):
        out = self.children[0]._cross(X, X2)
        for c in self.children[1:]:
            out = out * c._cross(X, X2)
        return out

    def _diag(self, X):
        out = self.children[0]._diag(X)
        for c in self.children[1:]:
            out = out * c._diag(X)
        return out

    def _grads(self, X):
        Ks = [c._cross(X, X) for c in self.children]
        out = []
        for i, c in enumerate(self.children):
            rest = np.ones_like(Ks[0])
            for j, Kj in enumerate(Ks):
                if j != i:
                    rest = rest * Kj
            out.extend(g * rest for g in c._grads(X))
        return out


def eval_kernel(kernel: Kernel, x, x2) -> float:
    """Covariance between two single points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.ndim != 1 or x2.ndim != 1 or x.shape != x2.shape:
        raise InputError(f"points must share one dimension, got shapes {x.shape} and {x2.shape}")
    return float(kernel._cross(x[None], x2[None])[0, 0])


def eval_cross(kernel: Kernel, X, X2) -> np.ndarray:
    """M x N matrix of covariances between the rows of ``X`` and ``X2``."""
    return kernel(X, X2)


def eval_gram_grads(kernel: Kernel, X) -> list[np.ndarray]:
    X = as_points(X)
    if X.shape[0] == 0:
        raise InputError("gradients need at least one point")
    return kernel.grads(X)


# -- expression grammar ------------------------------------------------------

_LEAVES = {cls.name: cls for cls in (RBF, Periodic, LocallyPeriodic, Linear)}
_COMPOSITES = {"sum": Sum, "prod": Product, "product": Product}


def parse_kernel(expr: str) -> Kernel:
    """Parse an expression such as ``locper(var=1, period=24, len=48, plen=1)``."""
    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as exc:
        raise InputError(f"cannot parse kernel expression {expr!r}: {exc.msg}") from None
    return _build(tree.body, expr)


def _build(node, expr):
    if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)):
        raise InputError(f"kernel expression {expr!r}: expected a call like rbf(...)")
    name = node.func.id.lower()
    if name in _COMPOSITES:
        if node.keywords:
            raise InputError(f"{name}() takes kernels as positional arguments only")
        return _COMPOSITES[name](tuple(_build(a, expr) for a in node.args))
    if name not in _LEAVES:
        known = ", ".join(sorted([*_LEAVES, *_COMPOSITES]))
        raise InputError(f"unknown kernel {name!r}; known: {known}")
    if node.args:
        raise InputError(f"{name}() parameters are keyword-only")
    kwargs = {}
    for kw in node.keywords:
        try:
            value = ast.literal_eval(kw.value)
        except ValueError:
            raise InputError(f"{name}({kw.arg}=...) must be a number") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InputError(f"{name}({kw.arg}=...) must be a number")
        kwargs[kw.arg] = float(value)
    try:
        return _LEAVES[name](**kwargs)
    except TypeError as exc:
        raise InputError(f"{name}(): {exc}") from None


# -- log-space hyperparameter vector ------------------------------------------

def param_layout(kernel: Kernel) -> list[str]:
    """Labels of the packed vector: one per kernel hyperparameter, then ``noise_var``."""
    return [label for label, _ in kernel.params()] + ["noise_var"]


def pack(kernel: Kernel, noise_var: float) -> np.ndarray:
    """Log of every kernel hyperparameter followed by log noise variance."""
    values = [v for _, v in kernel.params()] + [noise_var]
    with np.errstate(divide="ignore"):
        return np.log(np.array(values, dtype=float))


def unpack(kernel: Kernel, theta) -> tuple[Kernel, float]:
    """Inverse of :func:`pack`; ``kernel`` supplies the tree structure."""
    theta = np.asarray(theta, dtype=float)
    n = len(kernel.params())
    if theta.shape != (n + 1,):
        raise InputError(f"expected {n + 1} log-hyperparameters, got shape {theta.shape}")
    values = np.exp(theta)
    return kernel.with_params(values[:n].tolist()), float(values[n])
