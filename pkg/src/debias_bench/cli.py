"""Command-line entry point: ``debias-bench {gen,sweep,compare}``.

Settings are resolved in order: command-line flag, then config file
(``--config``), then built-in default.  The seed additionally falls back to
the ``DEBIAS_BENCH_SEED`` environment variable before the default of 0.

Config files hold one ``key = value`` per line (``#`` starts a comment);
keys are the long flag names with or without the leading dashes, e.g.::

    dataset = latent-factors
    betas = 0, 1.0, 2.5
    trials = 3

A file ending in ``.json`` (or starting with ``{``) is read as a JSON object
with the same keys instead.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .core import QuantizationSpec, SeedSpec, derive_stream, write_dataset, write_matrix
from .datagen import LatentFactorsConfig
from .harness import (ALGORITHMS, CSV_HEADER, MODELS, CellFailed, CompareConfig, DataSource,
                      SweepConfig, format_table, ground_truth, run_comparison, run_sweep)
from .observation import ObservationModelParams, observation_probabilities, sample_observations
from .propensity import MARGINAL_MODES
from .quantization import NoiseConfig, build_observed_dataset
from .recommenders import MIX_SCHEMES

log = logging.getLogger("debias_bench")

SEED_ENV = "DEBIAS_BENCH_SEED"
DATASET_ALIASES = {"latent-factors": "latent-factors", "ml100k": "ml100k-imputed",
                   "ml100k-imputed": "ml100k-imputed"}


class UsageError(Exception):
    pass


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).replace(",", " ").split())


def _ints(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).replace(",", " ").split())


def _names(text) -> tuple[str, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(str(x) for x in text)
    return tuple(x for x in str(text).replace(",", " ").split())


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError(f"{path}: expected a JSON object")
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            raw[key.strip()] = value.strip()
    return {k.lstrip("-").replace("-", "_"): v for k, v in raw.items()}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value (or JSON) file with defaults for any flag")
    p.add_argument("--dataset", choices=sorted(DATASET_ALIASES),
                   help="ground truth: latent-factors (synthetic) or ml100k (imputed MovieLens 100K)")
    p.add_argument("--input", help="path to the MovieLens 100K u.data file (ml100k only)")
    p.add_argument("--num-users", type=int, help="latent-factors grid rows (default 1000)")
    p.add_argument("--num-items", type=int, help="latent-factors grid columns (default 1000)")
    p.add_argument("--seed", type=int, help=f"master seed (fallback: ${SEED_ENV}, then 0)")
    p.add_argument("--rho", type=float, help="expected fraction of observed entries (default 0.1)")
    p.add_argument("--noise-std", type=float, help="Gaussian rating noise before quantization (default 0.05)")
    p.add_argument("--out", help="output directory (default: current directory)")
    p.add_argument("--jobs", type=int, help="max concurrent trials (default: CPU count)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="debias-bench",
        description="Selection-bias simulation and cross-dataset propensity debiasing experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{gen,sweep,compare}")

    gen = sub.add_parser("gen", help="write a ground-truth matrix and optionally one observed dataset")
    _add_common(gen)
    gen.add_argument("--beta", type=float,
                     help="also sample an observed dataset with this bias strength")
    gen.add_argument("--quantization", type=int, help="levels of the observed dataset (default 5)")

    sweep = sub.add_parser("sweep", help="bias-susceptibility sweep over beta x quantization x algorithm")
    _add_common(sweep)
    sweep.add_argument("--betas", help="comma-separated beta grid (default 0,0.5,1,1.5,2,2.5)")
    sweep.add_argument("--quantizations", help="comma-separated level counts (default 2,3,5)")
    sweep.add_argument("--algorithms", help=f"subset of {','.join(ALGORITHMS)}")
    sweep.add_argument("--trials", type=int, help="trials per cell (default 10)")
    sweep.add_argument("--emit-plot-data", action="store_true", default=None,
                       help="also write figure1.csv (long format: one quartile per row)")

    cmp_ = sub.add_parser("compare", help="MF / NPE-MF / MD-MF / NBPE-MF comparison")
    _add_common(cmp_)
    cmp_.add_argument("--beta", type=float, help="bias of the training dataset (default 1.0)")
    cmp_.add_argument("--quantization", type=int, help="levels of the training dataset (default 5)")
    cmp_.add_argument("--aux-beta", type=float, help="bias of the auxiliary dataset (default 0.0)")
    cmp_.add_argument("--aux-quantization", type=int, help="levels of the auxiliary dataset (default 2)")
    cmp_.add_argument("--trials", type=int, help="independent trials (default 5)")
    cmp_.add_argument("--models", help=f"subset of {','.join(MODELS)}")
    cmp_.add_argument("--mix-scheme", choices=MIX_SCHEMES, help="MD-MF upscaling (default endpoint)")
    cmp_.add_argument("--marginal", choices=MARGINAL_MODES,
                      help="NBPE class-marginal mode (default normalized)")
    cmp_.add_argument("--emit-plot-data", action="store_true", default=None,
                      help="also write table1.csv (long format: one metric per row)")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config-file values; returns a plain settings dict."""
    settings = read_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in ("config", "command") or value is None:
            continue
        settings[key] = value
    settings["command"] = args.command
    if "seed" not in settings:
        env = os.environ.get(SEED_ENV)
        try:
            settings["seed"] = int(env) if env else 0
        except ValueError as exc:
            raise UsageError(f"${SEED_ENV} must be an integer, got {env!r}") from exc
    settings["seed"] = int(settings["seed"])
    if "jobs" in settings:
        settings["jobs"] = int(settings["jobs"])
    if "emit_plot_data" in settings and isinstance(settings["emit_plot_data"], str):
        settings["emit_plot_data"] = settings["emit_plot_data"].lower() in ("1", "true", "yes", "on")
    SeedSpec(settings["seed"])
    dataset = DATASET_ALIASES.get(settings.get("dataset", "latent-factors"))
    if dataset is None:
        raise UsageError(f"unknown dataset {settings['dataset']!r}")
    settings["dataset"] = dataset
    if dataset == "ml100k-imputed":
        if not settings.get("input"):
            raise UsageError("--input is required for the ml100k dataset")
        if not Path(settings["input"]).is_file():
            raise UsageError(f"--input {settings['input']}: no such file")
    return settings


def _source(s: dict) -> DataSource:
    latent = LatentFactorsConfig(num_users=int(s.get("num_users", 1000)),
                                 num_items=int(s.get("num_items", 1000)))
    return DataSource(s["dataset"], s.get("input"), latent)


def _noise(s: dict) -> NoiseConfig:
    return NoiseConfig(float(s.get("noise_std", 0.05)))


def sweep_config(s: dict) -> SweepConfig:
    kw = {}
    if "betas" in s:
        kw["betas"] = _floats(s["betas"])
    if "quantizations" in s:
        kw["quantizations"] = _ints(s["quantizations"])
    if "algorithms" in s:
        kw["algorithms"] = _names(s["algorithms"])
    if "trials" in s:
        kw["trials"] = int(s["trials"])
    return SweepConfig(source=_source(s), rho=float(s.get("rho", 0.1)), noise=_noise(s),
                       seed=s["seed"], **kw)


def compare_config(s: dict) -> CompareConfig:
    kw = {}
    for key, field_, conv in (("beta", "train_beta", float), ("quantization", "train_levels", int),
                              ("aux_beta", "aux_beta", float), ("aux_quantization", "aux_levels", int),
                              ("trials", "trials", int), ("mix_scheme", "mix_scheme", str),
                              ("marginal", "marginal", str)):
        if key in s:
            kw[field_] = conv(s[key])
    if "models" in s:
        kw["models"] = _names(s["models"])
    return CompareConfig(source=_source(s), rho=float(s.get("rho", 0.1)), noise=_noise(s),
                         seed=s["seed"], **kw)


def _prepare_out(s: dict) -> Path:
    out = Path(s.get("out") or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = tempfile.NamedTemporaryFile(dir=out, prefix=".probe-", delete=True)
        probe.close()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(row.as_csv())
    return buf.getvalue()


def _plot_csv(summary, header, key_fields) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for s in summary:
        for metric in ("rmse", "mae"):
            for stat in ("q25", "median", "q75", "mean"):
                w.writerow([s[k] for k in key_fields] + [metric, stat, repr(s[metric][stat])])
    return buf.getvalue()


def _write_outputs(out: Path, name: str, rows, summary, settings, plot_name=None) -> None:
    # everything is rendered before the first rename so a failure cannot leave
    # a summary next to a stale or missing CSV
    files = {name: rows_to_csv(rows),
             "summary.json": json.dumps({"command": settings["command"], "seed": settings["seed"],
                                         "groups": summary}, indent=2, sort_keys=True) + "\n"}
    if plot_name:
        files[plot_name] = _plot_csv(summary, ("dataset", "model", "quantization", "beta", "metric",
                                               "stat", "value"),
                                     ("dataset", "model", "quantization", "beta"))
    for fname, text in files.items():
        _atomic_write(out / fname, text)


def cmd_gen(s: dict) -> int:
    out = _prepare_out(s)
    source = _source(s)
    R = ground_truth(source, s["seed"])
    write_matrix(R, out / "truth.csv")
    print(f"wrote {out / 'truth.csv'} ({R.num_users}x{R.num_items})")
    if s.get("beta") is not None:
        params = ObservationModelParams(float(s["beta"]), float(s.get("rho", 0.1)))
        probs = observation_probabilities(R, params)
        obs = sample_observations(probs, derive_stream(s["seed"], 0, "observe"))
        D = build_observed_dataset(R, obs, QuantizationSpec(int(s.get("quantization", 5))), _noise(s),
                                   derive_stream(s["seed"], 0, "noise"))
        write_dataset(D, out / "observed.csv")
        print(f"wrote {out / 'observed.csv'} ({len(D)} entries, "
              f"expected fraction {probs.effective_fraction:.4f})")
    return 0


def cmd_sweep(s: dict) -> int:
    config = sweep_config(s)
    out = _prepare_out(s)
    rows, summary = run_sweep(config, jobs=s.get("jobs"))
    _write_outputs(out, "sweep.csv", rows, summary, s,
                   "figure1.csv" if s.get("emit_plot_data") else None)
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    return 0


def cmd_compare(s: dict) -> int:
    config = compare_config(s)
    out = _prepare_out(s)
    rows, summary = run_comparison(config, jobs=s.get("jobs"))
    _write_outputs(out, "compare.csv", rows, summary, s,
                   "table1.csv" if s.get("emit_plot_data") else None)
    print(format_table(summary))
    print(f"wrote {len(rows)} rows to {out / 'compare.csv'}")
    return 0


COMMANDS = {"gen": cmd_gen, "sweep": cmd_sweep, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose or 0, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve(args)
        return COMMANDS[args.command](settings)
    except UsageError as exc:
        print(f"debias-bench {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except CellFailed as exc:
        print(f"debias-bench {args.command}: failed cell {exc.cell}: {exc.cause}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"debias-bench {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
