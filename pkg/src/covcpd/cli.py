"""Command-line front end.

Settings are resolved as: command-line flags, then the ``--config`` file (plain
``key = value`` lines, keys spelled like the long flags), then ``COVCPD_SEED`` for
the seed, then built-in defaults. Every JSON output carries the resolved settings
under ``provenance`` so a run can be replayed.

Exit codes: 0 on success (including "no change detected"), 1 for usage errors,
2 for invalid input data.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .detector import DetectorConfig, binary_segment, detect_and_test
from .errors import ArgumentError, CovCPDError
from .fbasis import BasisSpec
from .io import LAYOUTS, ingest_with_info, write_coefficients
from .longrun import KERNELS, LongRunSpec
from .nulldist import critical_value, simulate_null, simulate_null_cached
from .simlab import builtin_setting, generate_panel, power_study, replicate_seed

log = logging.getLogger("covcpd")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    input: str | None = None
    layout: str = "grid"
    band: str | None = None
    alpha: float = 0.05
    bandwidth: int | None = None
    kernel: str = "bartlett"
    iid: bool = False
    mc_reps: int = 5000
    grid_r: int = 1000
    seed: int = 0
    rescale: bool = False
    demean: bool = False
    min_segment: int = 30
    max_depth: int = 8
    workers: int = 1
    out: str | None = None
    emit_plot_data: bool = False
    # simulate
    settings: str = "1,2,3"
    sigma_sq: str = "0,3,6,9"
    n_per_group: str = "150,300"
    reps: int = 500
    candidates_only: bool = False
    emit_panels: bool = False
    # null-quantile
    rho: str | None = None
    alphas: str = "0.05"
    cache_dir: str | None = None

    def detector(self) -> DetectorConfig:
        return DetectorConfig(
            alpha=self.alpha,
            longrun=LongRunSpec(kernel=self.kernel, bandwidth=self.bandwidth, iid_mode=self.iid),
            mc_reps=self.mc_reps,
            grid_r=self.grid_r,
            seed=self.seed,
            demean=self.demean,
            rescale=self.rescale,
            min_segment=self.min_segment,
            max_depth=self.max_depth,
            workers=self.workers,
        )


# defaults that differ per subcommand (simulated curves are independent)
_COMMAND_DEFAULTS = {"simulate": {"iid": True, "mc_reps": 2000}}


def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _converter(name: str):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    if "bool" in kind:
        return _parse_bool
    if "int" in kind:
        return int
    if "float" in kind:
        return float
    return str


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in known:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        value = value.strip("\"'")
        if key == "bandwidth" and value.lower() in ("", "none", "auto"):
            out[key] = None
            continue
        try:
            out[key] = _converter(key)(value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    return out


def resolve_config(command: str, flags: dict, config_file: dict, env=os.environ) -> RunConfig:
    values = dict(_COMMAND_DEFAULTS.get(command, {}))
    if "COVCPD_SEED" in env:
        try:
            values["seed"] = int(env["COVCPD_SEED"])
        except ValueError:
            raise UsageError(f"COVCPD_SEED must be an integer, got {env['COVCPD_SEED']!r}") from None
    values.update(config_file)
    values.update(flags)
    return RunConfig(**values)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_shared(p: argparse.ArgumentParser, with_input: bool = True) -> None:
    s = argparse.SUPPRESS
    if with_input:
        p.add_argument("--input", default=s, help="CSV or JSON file, one curve per row")
        p.add_argument("--layout", choices=LAYOUTS, default=s, help="grid values or basis coefficients (default grid)")
        p.add_argument("--band", default=s, metavar="START:LEN",
                       help="Fourier functions F_START..F_{START+LEN-1} (default 2:8 for grid input)")
    p.add_argument("--alpha", type=float, default=s, help="significance level (default 0.05)")
    p.add_argument("--bandwidth", type=int, default=s, help="lag-window bandwidth (default ceil(N^(1/3)))")
    p.add_argument("--kernel", choices=sorted(KERNELS), default=s, help="lag-window kernel (default bartlett)")
    p.add_argument("--iid", action=argparse.BooleanOptionalAction, default=s,
                   help="treat curves as independent: lag-0 long-run estimate")
    p.add_argument("--mc-reps", dest="mc_reps", type=int, default=s, help="Monte Carlo replicates of the null law")
    p.add_argument("--grid-r", dest="grid_r", type=int, default=s, help="grid intervals for the Brownian bridges")
    p.add_argument("--seed", type=int, default=s, help="null-law seed (fallback: COVCPD_SEED, then 0)")
    p.add_argument("--rescale", action=argparse.BooleanOptionalAction, default=s, help="scale curves to unit norm")
    p.add_argument("--demean", action=argparse.BooleanOptionalAction, default=s, help="subtract the mean curve")
    p.add_argument("--min-segment", dest="min_segment", type=int, default=s, help="shortest testable segment (default 30)")
    p.add_argument("--max-depth", dest="max_depth", type=int, default=s, help="segmentation depth cap (default 8)")
    p.add_argument("--workers", type=int, default=s, help="threads for the null simulation")
    p.add_argument("--out", default=s, metavar="DIR", help="output directory (default: print JSON to stdout)")
    p.add_argument("--emit-plot-data", dest="emit_plot_data", action="store_true", default=s,
                   help="also write tidy CSV files for plotting (needs --out)")
    p.add_argument("--config", default=s, help="key = value file; flags take precedence")
    p.add_argument("-v", "--verbose", action="store_true", default=s)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="covcpd", description="Change-point test for the covariance of functional data.",
                     epilog="Precedence: flags > --config file > COVCPD_SEED (seed only) > defaults.")
    parser.add_argument("--version", action="version", version=f"covcpd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="test for a single change point")
    _add_shared(p)
    p = sub.add_parser("segment", help="binary segmentation for several change points")
    _add_shared(p)

    p = sub.add_parser("simulate", help="rejection rates and candidate quantiles on simulated data")
    _add_shared(p, with_input=False)
    s = argparse.SUPPRESS
    p.add_argument("--settings", default=s, help="comma list of built-in settings (default 1,2,3)")
    p.add_argument("--sigma-sq", dest="sigma_sq", default=s, help="comma list of noise levels (default 0,3,6,9)")
    p.add_argument("--n-per-group", dest="n_per_group", default=s, help="comma list of group sizes (default 150,300)")
    p.add_argument("--reps", type=int, default=s, help="replicates per configuration (default 500)")
    p.add_argument("--candidates-only", dest="candidates_only", action="store_true", default=s,
                   help="skip the test; only locate candidates")
    p.add_argument("--emit-panels", dest="emit_panels", action="store_true", default=s,
                   help="write every simulated panel as a coefficient CSV under DIR/panels")

    p = sub.add_parser("null-quantile", help="critical values of the null law for given eigenvalues")
    _add_shared(p, with_input=False)
    p.add_argument("--rho", default=s, help="eigenvalues: a comma list or a file (JSON list or one per line)")
    p.add_argument("--alphas", default=s, help="comma list of levels (default 0.05)")
    p.add_argument("--cache-dir", dest="cache_dir", default=s, help="directory for cached null samples")
    return parser


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what} must be a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str, what: str) -> list[int]:
    vals = _floats(text, what)
    if any(v != int(v) for v in vals):
        raise UsageError(f"{what} must be integers, got {text!r}")
    return [int(v) for v in vals]


def _provenance(command: str, cfg: RunConfig, argv) -> dict:
    return {
        "tool": "covcpd",
        "version": __version__,
        "numpy": np.__version__,
        "command": command,
        "argv": list(argv),
        "config": asdict(cfg),
    }


def _emit(cfg: RunConfig, name: str, doc: dict) -> None:
    text = json.dumps(doc, indent=2)
    if cfg.out is None:
        print(text)
        return
    path = Path(cfg.out) / name
    path.write_text(text + "\n")
    print(path)


def _write_csv(cfg: RunConfig, name: str, header: list[str], rows) -> None:
    path = Path(cfg.out) / name
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(path)


def _load_input(cfg: RunConfig):
    if cfg.input is None:
        raise UsageError("--input is required")
    if not Path(cfg.input).is_file():
        raise UsageError(f"input file {cfg.input!r} does not exist")
    band = BasisSpec.band(cfg.band) if cfg.band else None
    panel, info = ingest_with_info(cfg.input, cfg.layout, band)
    log.info("read %s: N=%d curves, p=%d, grid size %s", cfg.input, info["n"], info["p"], info["grid_size"])
    return panel, info


def run_detect(cfg: RunConfig, argv=()) -> dict:
    panel, info = _load_input(cfg)
    result = detect_and_test(panel, cfg.detector())
    doc = {"provenance": _provenance("detect", cfg, argv), "input": info, "result": result.to_dict()}
    _emit(cfg, "result.json", doc)
    if cfg.emit_plot_data:
        curve = result.curve
        _write_csv(cfg, "tn_curve.csv", ["theta", "T_N"],
                   ([repr(float(th)), repr(float(v))] for th, v in zip(curve.theta, curve.values)))
    return doc


def run_segment(cfg: RunConfig, argv=()) -> dict:
    panel, info = _load_input(cfg)
    tree = binary_segment(panel, cfg.detector())
    doc = {"provenance": _provenance("segment", cfg, argv), "input": info, "segmentation": tree.to_dict()}
    _emit(cfg, "segments.json", doc)
    if cfg.emit_plot_data:
        rows = []
        for node in tree.nodes:
            r = node.result
            rows.append([node.start, node.stop, node.depth, "" if node.split is None else node.split,
                         node.stop_reason or "", "" if r is None else repr(r.t_max),
                         "" if r is None else repr(r.crit), "" if r is None else repr(r.p)])
        _write_csv(cfg, "segments.csv",
                   ["start", "stop", "depth", "split", "stop_reason", "t_max", "crit", "p"], rows)
    return doc


def run_simulate(cfg: RunConfig, argv=()) -> dict:
    if cfg.emit_panels and cfg.out is None:
        raise UsageError("--emit-panels needs --out")
    settings = _ints(cfg.settings, "--settings")
    sigma_grid = _floats(cfg.sigma_sq, "--sigma-sq")
    n_grid = _ints(cfg.n_per_group, "--n-per-group")
    detector = cfg.detector()
    report = power_study(settings, sigma_grid, n_grid, reps=cfg.reps, alpha=cfg.alpha, seed=cfg.seed,
                         config=detector, run_test=not cfg.candidates_only)
    doc = {"provenance": _provenance("simulate", cfg, argv), **report.to_dict()}
    _emit(cfg, "report.json", doc)
    if cfg.out is not None:
        (Path(cfg.out) / "replicates.csv").write_text(report.to_csv())
        print(Path(cfg.out) / "replicates.csv")
    if cfg.emit_plot_data:
        keys = list(report.rows[0])
        _write_csv(cfg, "rates.csv", keys, ([row[k] for k in keys] for row in report.rows))
    if cfg.emit_panels:
        folder = Path(cfg.out) / "panels"
        folder.mkdir(exist_ok=True)
        for sid in settings:
            for n in n_grid:
                for s2 in sigma_grid:
                    setting = builtin_setting(sid, s2, n)
                    for rep in range(cfg.reps):
                        panel = generate_panel(setting, replicate_seed(cfg.seed, setting, rep))
                        write_coefficients(folder / f"setting{sid}_sigsq{s2:g}_n{n}_rep{rep}.csv", panel)
    return doc


def _read_rho(text: str) -> list[float]:
    path = Path(text)
    if path.is_file():
        body = path.read_text().strip()
        if body.startswith("["):
            try:
                return [float(v) for v in json.loads(body)]
            except (ValueError, TypeError):
                raise UsageError(f"{text} is not a JSON list of numbers") from None
        return _floats(",".join(body.split()), "--rho file")
    return _floats(text, "--rho")


def run_null_quantile(cfg: RunConfig, argv=()) -> dict:
    if cfg.rho is None:
        raise UsageError("--rho is required")
    rho = np.array(_read_rho(cfg.rho))
    if rho.size and (np.any(rho < 0) or not np.all(np.isfinite(rho))):
        raise UsageError("rho entries must be finite and nonnegative")
    alphas = _floats(cfg.alphas, "--alphas")
    if cfg.cache_dir is not None:
        Path(cfg.cache_dir).mkdir(parents=True, exist_ok=True)
        dist = simulate_null_cached(rho, cfg.mc_reps, cfg.grid_r, cfg.seed, cfg.cache_dir, workers=cfg.workers)
    else:
        dist = simulate_null(rho, M=cfg.mc_reps, R=cfg.grid_r, seed=cfg.seed, workers=cfg.workers)
    quantiles = [{"alpha": a, "crit": critical_value(dist, a)} for a in alphas]
    doc = {"provenance": _provenance("null-quantile", cfg, argv), "rho": [float(v) for v in rho],
           "quantiles": quantiles}
    _emit(cfg, "null_quantiles.json", doc)
    if cfg.emit_plot_data:
        _write_csv(cfg, "null_samples.csv", ["sample"], ([repr(float(v))] for v in dist.samples))
    return doc


COMMANDS = {
    "detect": run_detect,
    "segment": run_segment,
    "simulate": run_simulate,
    "null-quantile": run_null_quantile,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        ns = vars(build_parser().parse_args(argv))
    except UsageError as exc:
        print(f"covcpd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    command = ns.pop("command")
    verbose = ns.pop("verbose", False)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        file_values = read_config_file(ns.pop("config")) if "config" in ns else {}
        cfg = resolve_config(command, ns, file_values)
        if cfg.emit_plot_data and cfg.out is None:
            raise UsageError("--emit-plot-data needs --out")
        if cfg.out is not None:
            Path(cfg.out).mkdir(parents=True, exist_ok=True)
        COMMANDS[command](cfg, argv)
    except (UsageError, ArgumentError) as exc:
        print(f"covcpd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CovCPDError as exc:
        print(f"covcpd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
