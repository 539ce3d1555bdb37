"""CSV tables with explicit missing values, and seeded synthetic datasets.

Random numbers come from numpy's Philox-4x64 counter-based bit generator
(``numpy.random.Philox(seed)``), so a seed identifies a stream independently of
platform and numpy's default generator choice.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InputError
from .gpr import Dataset
from .kernels import Kernel, RBF
from .linalg import chol_jittered

__all__ = [
    "SeriesTable",
    "read_csv",
    "read_points",
    "write_csv",
    "format_float",
    "rng_for",
    "SynthConfig",
    "LabeledData",
    "GROUND_TRUTH",
    "synth_toy_anomaly",
    "synth_periodic_drift",
    "synth_gp_series",
    "censor",
    "restore",
]

MISSING_MARKERS = {"", "nan", "na"}


def format_float(v: float) -> str:
    """17 significant digits; missing values become an empty field."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return "%.17g" % v


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SeriesTable:
    """Named float columns; NaN marks a missing value.  One column is the time axis."""

    columns: dict
    time_col: str
    y_col: str
    comments: tuple = ()
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        cols = {k: np.asarray(v, dtype=float).reshape(-1) for k, v in self.columns.items()}
        lengths = {v.shape[0] for v in cols.values()}
        if len(lengths) > 1:
            raise InputError("columns have unequal lengths")
        for name in (self.time_col, self.y_col):
            if name not in cols:
                raise InputError(f"no column named {name!r}; have {list(cols)}")
        t = cols[self.time_col]
        if np.any(~np.isfinite(t)):
            raise InputError("time column has missing or non-finite values")
        if np.any(np.diff(t) <= 0):
            raise InputError("time column must be strictly increasing")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "comments", tuple(self.comments))

    def __len__(self):
        return self.times.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.columns[self.time_col]

    @property
    def y(self) -> np.ndarray:
        return self.columns[self.y_col]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.y)

    def with_column(self, name: str, values) -> "SeriesTable":
        cols = dict(self.columns)
        cols[name] = values
        return replace(self, columns=cols)

    def observed(self) -> Dataset:
        """Dataset of the rows whose y value is present."""
        keep = ~self.missing
        return Dataset(self.times[keep], self.y[keep])

    def equals(self, other: "SeriesTable") -> bool:
        """Bitwise equality of columns (NaN equal to NaN) and metadata."""
        if (self.time_col, self.y_col, self.comments) != (other.time_col, other.y_col, other.comments):
            return False
        if list(self.columns) != list(other.columns):
            return False
        return all(self.columns[k].tobytes() == other.columns[k].tobytes() for k in self.columns)


def _parse_field(text, lineno, column, allow_missing):
    s = text.strip()
    if s.lower() in MISSING_MARKERS:
        if not allow_missing:
            raise InputError(f"line {lineno}: column {column!r} may not be missing")
        return math.nan
    try:
        v = float(s)
    except ValueError:
        raise InputError(f"line {lineno}: cannot parse {s!r} in column {column!r} as a number") from None
    if not math.isfinite(v):
        raise InputError(f"line {lineno}: non-finite value {s!r} in column {column!r}")
    return v


def _parse(path, time_col, y_col):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None

    comments, header, rows = [], None, []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#"):
            comments.append(line[1:].strip())
            continue
        if not line.strip():
            continue
        fields_ = next(csv.reader([line]))
        if header is None:
            header = [h.strip() for h in fields_]
            if len(set(header)) != len(header):
                raise InputError(f"line {lineno}: duplicate column names")
            time_col = time_col or header[0]
            y_col = y_col or (header[1] if len(header) > 1 else header[0])
            for name in (time_col, y_col):
                if name not in header:
                    raise InputError(f"{path}: no column named {name!r}; have {header}")
            continue
        if len(fields_) != len(header):
            raise InputError(f"line {lineno}: expected {len(header)} fields, got {len(fields_)}")
        rows.append((lineno, [
            _parse_field(f, lineno, name, allow_missing=name != time_col)
            for f, name in zip(fields_, header)
        ]))
    if header is None:
        raise InputError(f"{path}: no header row")
    return header, rows, comments, time_col, y_col


def read_csv(path, time_col: str | None = None, y_col: str | None = None) -> SeriesTable:
    """Read a comma-separated table with a header row.

    ``#`` lines are kept as comments.  Empty fields and ``NaN``/``NA`` (any case)
    are missing; only non-time columns may be missing.  ``time_col`` and ``y_col``
    default to the first and second columns (the same column if there is only one).
    """
    header, rows, comments, time_col, y_col = _parse(path, time_col, y_col)
    ti = header.index(time_col)
    for (prev_line, prev), (cur_line, cur) in zip(rows, rows[1:]):
        if cur[ti] <= prev[ti]:
            raise InputError(
                f"time must be strictly increasing: {cur[ti]!r} at line {cur_line} "
                f"does not follow {prev[ti]!r} at line {prev_line}"
            )
    data = np.array([r for _, r in rows], dtype=float).reshape(len(rows), len(header))
    columns = {name: data[:, j] for j, name in enumerate(header)}
    return SeriesTable(columns, time_col, y_col, tuple(comments), str(path))


def read_points(path, x_col: str | None = None, y_col: str | None = None):
    """Query locations (and optionally observations) in file order; repeats allowed.

    Returns ``(x, y, lines)`` where ``lines`` holds the 1-based line of each row.
    """
    header, rows, _, x_col, y_col = _parse(path, x_col, y_col)
    data = np.array([r for _, r in rows], dtype=float).reshape(len(rows), len(header))
    lines = np.array([n for n, _ in rows], dtype=int)
    return data[:, header.index(x_col)], data[:, header.index(y_col)], lines


def write_rows(path, header, rows, comments=()):
    """Write a CSV with ``# `` comment lines, LF endings and 17-digit floats."""
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else format_float(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_csv(table: SeriesTable, path) -> None:
    names = list(table.columns)
    cols = [table.columns[n] for n in names]
    rows = [[float(c[i]) for c in cols] for i in range(len(table))]
    write_rows(path, names, rows, table.comments)


# -- synthetic data ------------------------------------------------------------

GROUND_TRUTH = {
    "mix": lambda x: np.sin(2 * np.pi * x) + 0.5 * np.sin(7 * x),
    "sin": lambda x: np.sin(2 * np.pi * x),
}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_train: int = 50
    n_test: int = 1000
    contamination_rate: float = 0.1
    anomaly_range: tuple = (-5.0, 5.0)
    noise_std: float = 0.1
    function: str = "mix"
    train_range: tuple = (0.0, 1.0)
    test_range: tuple = (0.0, 2.0)

    def __post_init__(self):
        lo, hi = self.anomaly_range
        if not lo < hi:
            raise InputError("anomaly_range must have lo < hi")
        if not 0.0 <= self.contamination_rate < 1.0:
            raise InputError("contamination_rate must lie in [0, 1)")
        if self.n_train < 1 or self.n_test < 1:
            raise InputError("sample counts must be at least 1")
        if self.noise_std < 0:
            raise InputError("noise_std must be nonnegative")
        if self.function not in GROUND_TRUTH:
            raise InputError(f"unknown ground-truth function {self.function!r}; known: {sorted(GROUND_TRUTH)}")


@dataclass(frozen=True)
class LabeledData:
    x: np.ndarray
    y: np.ndarray
    is_anomaly: np.ndarray

    def dataset(self, normal_only: bool = False) -> Dataset:
        keep = ~self.is_anomaly if normal_only else np.ones_like(self.is_anomaly)
        return Dataset(self.x[keep], self.y[keep])


def _labeled(rng, n, x_range, config, f):
    x = rng.uniform(*x_range, size=n)
    clean = f(x) + config.noise_std * rng.standard_normal(n)
    flags = rng.random(n) < config.contamination_rate
    replacement = rng.uniform(*config.anomaly_range, size=n)
    return LabeledData(x, np.where(flags, replacement, clean), flags)


def synth_toy_anomaly(config: SynthConfig) -> tuple[LabeledData, LabeledData]:
    """Contaminated training and test sets around a smooth ground truth.

    Anomalous outputs replace the clean value with a uniform draw on
    ``anomaly_range``.  Test inputs span a wider range than training inputs.
    """
    rng = rng_for(config.seed)
    f = GROUND_TRUTH[config.function]
    train = _labeled(rng, config.n_train, config.train_range, config, f)
    test = _labeled(rng, config.n_test, config.test_range, config, f)
    return train, test


def synth_periodic_drift(seed: int, days: int = 14, samples_per_day: int = 24, period: float = 1.0,
                         trend_scale: float = 0.5, noise_std: float = 0.1) -> SeriesTable:
    """Two-harmonic periodic pattern with slow amplitude modulation and drift.

    ``trend_scale = 0`` gives an exactly periodic signal (plus noise).
    """
    rng = rng_for(seed)
    n = days * samples_per_day
    t = np.arange(n) * (period / samples_per_day)
    phases = rng.uniform(0, 2 * np.pi, size=4)
    slow = rng.uniform(4.0, 8.0, size=2) * period
    pattern = np.sin(2 * np.pi * t / period + phases[0]) + 0.5 * np.sin(4 * np.pi * t / period + phases[1])
    y = pattern
    if trend_scale:
        y = pattern * (1.0 + 0.5 * trend_scale * np.sin(2 * np.pi * t / slow[0] + phases[2])) \
            + trend_scale * np.sin(2 * np.pi * t / slow[1] + phases[3])
    y = y + noise_std * rng.standard_normal(n)
    return SeriesTable({"t": t, "y": y}, "t", "y", (f"seed={seed}",))


def synth_gp_series(seed: int, n: int = 400, dt: float = 0.1, kernel: Kernel | None = None,
                    noise_std: float = 0.05) -> SeriesTable:
    """One sample path of a zero-mean GP on an even grid, plus white noise."""
    kernel = kernel or RBF(1.0, 1.0)
    rng = rng_for(seed)
    t = np.arange(n) * dt
    L = chol_jittered(kernel(t), 1e-9).lower
    y = L @ rng.standard_normal(n) + noise_std * rng.standard_normal(n)
    return SeriesTable({"t": t, "y": y}, "t", "y", (f"seed={seed}",))


def censor(series: SeriesTable, spans) -> tuple[SeriesTable, SeriesTable]:
    """Blank the y values inside half-open ``[start, end)`` spans.

    Returns the censored table and a table of the removed (time, y) rows.
    """
    spans = sorted((float(a), float(b)) for a, b in spans)
    t = series.times
    for a, b in spans:
        if not a < b:
            raise InputError(f"span [{a}, {b}) is empty")
        if a < t[0] or a > t[-1]:
            raise InputError(f"span [{a}, {b}) starts outside the series time range")
    for (a0, b0), (a1, b1) in zip(spans, spans[1:]):
        if a1 < b0:
            raise InputError(f"spans [{a0}, {b0}) and [{a1}, {b1}) overlap")
    mask = np.zeros(t.shape, dtype=bool)
    for a, b in spans:
        mask |= (t >= a) & (t < b)
    y = series.y.copy()
    truth = SeriesTable({series.time_col: t[mask], series.y_col: y[mask]}, series.time_col, series.y_col)
    y[mask] = np.nan
    return series.with_column(series.y_col, y), truth


def restore(censored: SeriesTable, truth: SeriesTable) -> SeriesTable:
    """Put held-out values back; inverse of :func:`censor`."""
    idx = np.searchsorted(censored.times, truth.times)
    if np.any(idx >= len(censored)) or np.any(censored.times[np.minimum(idx, len(censored) - 1)] != truth.times):
        raise InputError("ground-truth times are not present in the censored table")
    y = censored.y.copy()
    y[idx] = truth.y
    return censored.with_column(censored.y_col, y)
