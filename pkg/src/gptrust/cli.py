"""``gptrust`` command line: fit, score, triage, gaps, horizon, experiment.

Settings resolve as command-line flag, then ``--config`` file (``key=value``
lines, or a previously written manifest), then ``GPTRUST_SEED`` for the seed,
then built-in defaults.  Every command writes a JSON manifest recording the
resolved settings next to its outputs, and removes partial outputs on failure.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, dataio
from .anomaly import Label, triage
from .errors import DegenerateError, FitError, GPTrustError, InputError, NumericalError
from .experiments import EXPERIMENTS, write_gap_report, write_imputed
from .gpr import FitOptions, fit, load_model, model_digest, predict, save_model
from .kernels import parse_kernel
from .knowledge import knowledge_values
from .tasks import assess_gaps, extrapolation_horizon, find_missing_segments

EXIT_INPUT, EXIT_FIT, EXIT_NUMERICAL, EXIT_DEGENERATE = 2, 3, 4, 5


class _Outputs:
    """Tracks written files; on error every tracked file is deleted."""

    def __init__(self):
        self.paths: list[Path] = []

    def add(self, path) -> Path:
        path = Path(path)
        self.paths.append(path)
        return path

    def discard(self):
        for p in self.paths:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gptrust", description="Gaussian process knowledge scores.")
    parser.add_argument("--version", action="version", version=f"gptrust {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="key=value settings file or a manifest.json")
        return p

    p = command("fit", "fit a GP to a CSV by maximum marginal likelihood")
    p.add_argument("--data", required=False)
    p.add_argument("--kernel", default="rbf(var=1, len=1)")
    p.add_argument("--model", default="model.json", help="output model path")
    p.add_argument("--seed", type=int)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--noise-var", type=float)
    p.add_argument("--fix-noise", action="store_true")
    p.add_argument("--fixed", default="", help="comma-separated parameter names held fixed, e.g. period")
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--time-col")
    p.add_argument("--y-col")

    p = command("score", "knowledge scores and predictions at query locations")
    p.add_argument("--model", default="model.json")
    p.add_argument("--data", help="CSV whose first column (or --time-col) holds query locations")
    p.add_argument("--time-col")
    p.add_argument("--out", default="scores.csv")

    p = command("triage", "two-stage Normal/Anomaly/Unknown verdicts for (x, y) pairs")
    p.add_argument("--model", default="model.json")
    p.add_argument("--data")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--multiplier", type=float, default=3.0)
    p.add_argument("--time-col")
    p.add_argument("--y-col")
    p.add_argument("--out", default="verdicts.csv")

    p = command("gaps", "triage and impute missing segments of a series")
    p.add_argument("--model", default="model.json")
    p.add_argument("--data")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--queries-per-gap", type=int)
    p.add_argument("--time-col")
    p.add_argument("--y-col")
    p.add_argument("--out-dir", default=".")

    p = command("horizon", "first time the knowledge score drops below rho")
    p.add_argument("--model", default="model.json")
    p.add_argument("--from", dest="from_", type=float, help="default: last training time")
    p.add_argument("--to", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--out", default="horizon.csv")

    p = command("experiment", "run a seeded replica experiment")
    p.add_argument("name", nargs="?", choices=sorted(EXPERIMENTS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default=".")
    return parser


def _read_config(path) -> dict:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return dict(json.loads(text).get("config", {}))
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _apply_config(subparser: argparse.ArgumentParser, config: dict) -> None:
    by_dest = {a.dest: a for a in subparser._actions}
    by_flag = {s.lstrip("-"): a for a in subparser._actions for s in a.option_strings}
    defaults = {}
    for key, value in config.items():
        action = by_dest.get(key) or by_flag.get(key) or by_dest.get(key.replace("-", "_"))
        if action is None or action.dest in ("help", "config"):
            if key == "command":
                continue
            raise InputError(f"unknown setting {key!r} in config")
        if value is None:
            continue
        if isinstance(action, argparse._StoreTrueAction):
            value = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
        else:
            value = str(value)
        defaults[action.dest] = value
    subparser.set_defaults(**defaults)


def _resolve(argv):
    parser = _parser()
    args = parser.parse_args(argv)
    if args.config:
        parser = _parser()
        subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        _apply_config(subparsers.choices[args.command], _read_config(args.config))
        args = parser.parse_args(argv)
    if hasattr(args, "seed") and args.seed is None:
        env = os.environ.get("GPTRUST_SEED")
        try:
            args.seed = int(env) if env else 0
        except ValueError:
            raise InputError(f"GPTRUST_SEED={env!r} is not an integer") from None
    return args


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            flag = "--" + name.rstrip("_").replace("_", "-")
            raise InputError(f"{args.command}: {flag} is required")


def _manifest(path, args, outputs, digest=None):
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("config",)}
    doc = {"command": args.command, "config": config, "version": __version__,
           "model_digest": digest, "outputs": [Path(p).name for p in outputs]}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _fmt(v):
    return dataio.format_float(float(v))


# -- commands ------------------------------------------------------------------------

def cmd_fit(args, out: _Outputs):
    _require(args, "data")
    table = dataio.read_csv(args.data, args.time_col, args.y_col)
    data = table.observed()
    if len(data) < 2:
        raise InputError(f"fit needs at least 2 non-missing rows, {args.data} has {len(data)}")
    opts = FitOptions(restarts=args.restarts, seed=args.seed, noise_var=args.noise_var,
                      fix_noise=args.fix_noise, normalize=not args.no_normalize,
                      fixed=tuple(s.strip() for s in args.fixed.split(",") if s.strip()))
    model = fit(data, parse_kernel(args.kernel), opts)
    model_path = out.add(args.model)
    save_model(model, model_path)
    digest = model_digest(model)
    _manifest(out.add(f"{model_path}.manifest.json"), args, [model_path], digest)
    print(f"log marginal likelihood: {_fmt(model.info['log_likelihood'])}")
    print(f"kernel: {model.kernel}")
    print(f"noise_var: {_fmt(model.noise_var)}")
    norm = model.data.normalization
    if norm is not None:
        print(f"normalization: mean={_fmt(norm.mean)} scale={_fmt(norm.scale)} (hyperparameters in normalized units)")


def cmd_score(args, out: _Outputs):
    _require(args, "data")
    model = load_model(args.model)
    x, _, _ = dataio.read_points(args.data, args.time_col, args.time_col)
    pred = predict(model, x)
    g = knowledge_values(model, x) if x.size else np.zeros(0)
    path = out.add(args.out)
    dataio.write_rows(path, ["x", "mean", "obs_std", "knowledge"], zip(x, pred.mean, pred.obs_std, g))
    _manifest(out.add(f"{path}.manifest.json"), args, [path], model_digest(model))
    print(f"scored {x.size} queries -> {path}")


def cmd_triage(args, out: _Outputs):
    _require(args, "data")
    model = load_model(args.model)
    x, y, lines = dataio.read_points(args.data, args.time_col, args.y_col)
    if np.isnan(y).any():
        raise InputError(f"{args.data}: line {lines[np.argmax(np.isnan(y))]} has a missing y value")
    verdicts = triage(model, x, y, args.rho, args.multiplier)
    pred = predict(model, x)
    path = out.add(args.out)
    dataio.write_rows(
        path, ["x", "y", "mean", "obs_std", "residual", "knowledge", "verdict"],
        ([a, b, m, s, v.residual, v.knowledge.value, str(v.label)]
         for a, b, m, s, v in zip(x, y, pred.mean, pred.obs_std, verdicts)),
        [f"rho={_fmt(args.rho)},multiplier={_fmt(args.multiplier)}"],
    )
    _manifest(out.add(f"{path}.manifest.json"), args, [path], model_digest(model))
    counts = {label: sum(v.label is label for v in verdicts) for label in Label}
    print(" ".join(f"{label.value}={n}" for label, n in counts.items()))


def cmd_gaps(args, out: _Outputs):
    _require(args, "data")
    model = load_model(args.model)
    table = dataio.read_csv(args.data, args.time_col, args.y_col)
    spans = find_missing_segments(table.times, table.missing)
    dt = float(np.median(np.diff(table.times))) if len(table) > 1 else None
    reports = assess_gaps(model, spans, args.rho, args.queries_per_gap, dt, table.times[table.missing])
    digest = model_digest(model)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gaps_path, imputed_path = out.add(out_dir / "gaps.csv"), out.add(out_dir / "imputed.csv")
    write_gap_report(gaps_path, reports, args.rho, digest)
    write_imputed(imputed_path, reports, args.rho, digest)
    _manifest(out.add(out_dir / "manifest.json"), args, [gaps_path, imputed_path], digest)
    accepted = sum(str(r.decision) == "Interpolate" for r in reports)
    print(f"{len(reports)} gaps: {accepted} interpolated, {len(reports) - accepted} rejected")


def cmd_horizon(args, out: _Outputs):
    model = load_model(args.model)
    if args.from_ is None:
        if model.n == 0:
            raise InputError("--from is required for a model without training data")
        args.from_ = float(model.train_inputs.max())
    _require(args, "to", "step")
    report = extrapolation_horizon(model, args.from_, args.to, args.step, args.rho)
    pred = predict(model, report.times)
    path = out.add(args.out)
    horizon = "not crossed" if report.horizon is None else _fmt(report.horizon)
    dataio.write_rows(
        path, ["t", "mean", "obs_std", "knowledge"],
        zip(report.times, pred.mean, pred.obs_std, report.knowledge),
        [f"rho={_fmt(args.rho)},last_train_time={_fmt(report.last_train_time)},horizon={horizon},"
         f"model_digest={model_digest(model)}"],
    )
    _manifest(out.add(f"{path}.manifest.json"), args, [path], model_digest(model))
    print(f"horizon: {horizon}")


def cmd_experiment(args, out: _Outputs):
    _require(args, "name")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".gptrust-", dir=out_dir))
    try:
        model, files = EXPERIMENTS[args.name](args.seed, staging)
        for name in files:
            os.replace(staging / name, out.add(out_dir / name))
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    _manifest(out.add(out_dir / "manifest.json"), args, files, model_digest(model))
    print(f"{args.name} (seed {args.seed}): wrote {len(files) + 1} files to {out_dir}")


COMMANDS = {"fit": cmd_fit, "score": cmd_score, "triage": cmd_triage, "gaps": cmd_gaps,
            "horizon": cmd_horizon, "experiment": cmd_experiment}


def main(argv=None) -> int:
    out = _Outputs()
    try:
        args = _resolve(argv)
        COMMANDS[args.command](args, out)
        return 0
    except (InputError, OSError) as exc:
        code, kind, err = EXIT_INPUT, "input", exc
    except FitError as exc:
        code, kind, err = EXIT_FIT, "fit", exc
    except NumericalError as exc:
        code, kind, err = EXIT_NUMERICAL, "numerical", exc
    except DegenerateError as exc:
        code, kind, err = EXIT_DEGENERATE, "degenerate", exc
    except GPTrustError as exc:
        code, kind, err = 1, "error", exc
    out.discard()
    print(f"gptrust: {kind} error: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
