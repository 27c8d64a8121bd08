"""Command line entry point: one subcommand per experiment.

Exit codes: 0 on success, 1 when the configuration is invalid, 2 when the
computation itself fails (enumeration cap exceeded, forbidden divergence, ...).
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from . import experiments as ex
from . import variance_map as vm
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, parse_config
from .mc_engine import RngSpec

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2

COLUMNS = {
    "variance": ("n", "beta", "rho_n", "ell_m_n", "scaled_variance", "predicted_limit"),
    "schedule": ("n", "beta", "rho0"),
    "pool": ("k", "mean", "variance", "rho4_over_rho2sq", "se_variance"),
    "free-energy": ("n", "lambda", "p_hat", "gap", "se"),
}


def fmt(value) -> str:
    """17 significant digits for floats, so doubles round-trip exactly."""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def to_csv(columns, rows) -> str:
    lines = [",".join(columns)]
    lines += [",".join(fmt(row[c]) for c in columns) for row in rows]
    return "\n".join(lines) + "\n"


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def artifact_version() -> str:
    """Package version, suffixed with the git commit when run from a checkout."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


@dataclass
class RunReport:
    config: dict
    version: str
    duration_s: float
    digests: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return to_json(self.__dict__)


@dataclass
class _Output:
    name: str
    text: str


def _ordered_map(fn, items, workers: int):
    """Map preserving input order; threads when more than one worker is allowed."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _produce(cfg: ExperimentConfig) -> tuple[list[_Output], dict]:
    """Run the experiment and return the rendered outputs plus summary values."""
    exp = cfg.experiment
    rng = RngSpec(cfg.seed)

    if exp == "lattice-info":
        info = ex.lattice_info(cfg.lattice())
        return [_Output("main", to_json(info))], info

    if exp == "pc":
        pc = vm.percolation_pc(cfg.b, cfg.branches)
        return [_Output("main", to_json({"pc": pc}))], {"pc": pc}

    if exp == "schedule":
        rows = ex.schedule_table(cfg.schedule(), cfg.model, cfg.n_list)
        return [_Output("main", to_csv(COLUMNS[exp], rows))], {"rows": len(rows)}

    if exp == "variance":
        sched, model = cfg.schedule(), cfg.model
        chunks = _ordered_map(
            lambda n: ex.variance_table(cfg.b, model, sched, [n]), list(cfg.n_list), cfg.workers
        )
        rows = [r for chunk in chunks for r in chunk]
        summary = {"final_scaled_variance": rows[-1]["scaled_variance"],
                   "predicted_limit": rows[-1]["predicted_limit"]}
        return [_Output("main", to_csv(COLUMNS[exp], rows))], summary

    if exp == "pool":
        beta = cfg.beta if cfg.beta is not None else vm.beta_schedule(cfg.schedule(), max(cfg.n, 1))
        rows = ex.pool_table(cfg.lattice(), cfg.model, beta, cfg.n, cfg.pool, rng, cfg.workers)
        summary = {"beta": beta, "final_variance": rows[-1]["variance"]}
        return [_Output("main", to_csv(COLUMNS[exp], rows))], summary

    if exp == "clt":
        samples, stats = ex.clt_run(
            cfg.lattice(), cfg.model, cfg.schedule(), cfg.n, cfg.pool, rng, cfg.workers
        )
        body = "".join(fmt(float(x)) + "\n" for x in samples)
        summary = stats.as_dict()
        return [_Output("main", body), _Output("stats", to_json(summary))], summary

    if exp == "oracle":
        result = ex.enumeration_oracle(cfg.lattice(), cfg.model, cfg.beta, cfg.trials, rng, cfg.cap)
        return [_Output("main", to_json(result))], result

    if exp == "free-energy":
        rows = ex.free_energy_table(cfg.lattice(), cfg.model, cfg.beta, cfg.n, cfg.pool, rng, cfg.workers)
        summary = {"final_gap": rows[-1]["gap"], "final_se": rows[-1]["se"]}
        return [_Output("main", to_csv(COLUMNS[exp], rows))], summary

    raise ValueError(f"unknown experiment {exp!r}")


def _destination(cfg: ExperimentConfig, name: str) -> str | None:
    if cfg.output is None:
        return None
    return cfg.output if name == "main" else f"{cfg.output}.{name}.json"


def run(cfg: ExperimentConfig, stdout=None) -> RunReport:
    """Execute a validated config, write its outputs and return the run report."""
    stdout = sys.stdout if stdout is None else stdout
    start = time.perf_counter()
    outputs, summary = _produce(cfg)
    digests = {}
    for out in outputs:
        data = out.text.encode("utf-8")
        dest = _destination(cfg, out.name)
        if dest is None:
            stdout.write(out.text)
            digests[f"stdout:{out.name}"] = hashlib.sha256(data).hexdigest()
        else:
            Path(dest).write_bytes(data)
            digests[dest] = hashlib.sha256(data).hexdigest()
    return RunReport(
        config=cfg.as_dict(),
        version=artifact_version(),
        duration_s=time.perf_counter() - start,
        digests=digests,
        summary=summary,
    )


# -- argument parsing ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped onto the validation exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


_SUBCOMMANDS = {
    "lattice": ("lattice-info", "Edge and path counts of the diamond lattice (JSON)."),
    "variance": ("variance", "Deterministic Var(W_n) along a scaling schedule (CSV)."),
    "schedule": ("schedule", "Inverse temperatures of a scaling schedule (CSV)."),
    "pool": ("pool", "Pool Monte Carlo, per-level moments of W_k (CSV)."),
    "clt": ("clt", "Scaled fluctuation samples of W_n plus JSON statistics."),
    "oracle": ("oracle", "Path-sum against recursive W_n on random disorder (JSON)."),
    "free-energy": ("free-energy", "Quenched/annealed free-energy gap (CSV)."),
    "pc": ("pc", "Bond percolation threshold of the hierarchical lattice (JSON)."),
}


def _schedule_flag(text: str) -> dict[str, str]:
    out = {}
    for part in text.split(","):
        key, eq, value = part.partition("=")
        key = key.strip().lower()
        if not eq or key not in ("m", "eps", "tau"):
            raise argparse.ArgumentTypeError(f"expected m=<int>,eps=<real>[,tau=<real>], got {text!r}")
        out[key] = value.strip()
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--b", help="number of parallel branches (>= 2)")
    p.add_argument("--s", help="segments per branch (>= 2, default b)")
    p.add_argument("--n", help="lattice depth / number of levels")
    p.add_argument("--n-list", dest="n_list", help="comma-separated list of depths")
    p.add_argument("--disorder", help="gaussian | rademacher | twopoint:p=<real>")
    p.add_argument("--schedule", "--beta-schedule", dest="schedule", type=_schedule_flag,
                   metavar="m=INT,eps=REAL[,tau=REAL]", help="scaling schedule")
    p.add_argument("--m", help="schedule window index (>= 1)")
    p.add_argument("--eps", help="schedule offset (>= 0)")
    p.add_argument("--tau", help="third-moment correction (default: from disorder)")
    p.add_argument("--beta", help="explicit inverse temperature")
    p.add_argument("--pool", help="pool size")
    p.add_argument("--seed", help="random seed")
    p.add_argument("--trials", help="number of disorder draws for the oracle")
    p.add_argument("--cap", help="enumeration cap on the number of paths")
    p.add_argument("--workers", help="worker threads")
    p.add_argument("--output", metavar="PATH", help="output file (default stdout)")
    p.add_argument("--report", metavar="PATH", help="write the JSON run report here")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="diamond-polymer",
        description="Directed polymers on hierarchical diamond lattices. Experiments: "
        + ", ".join(EXPERIMENTS),
        epilog="Settings come from --config, then DP_<KEY> environment variables, then flags.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        if name == "lattice":
            p.add_argument("action", nargs="?", choices=["info"], default="info")
        _add_common(p)
    return parser


_FLAG_KEYS = ("b", "s", "n", "n_list", "disorder", "m", "eps", "tau", "beta",
              "pool", "seed", "trials", "cap", "workers", "output")


def config_from_args(args: argparse.Namespace, environ=None) -> ExperimentConfig:
    text = None
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
    flags = {k: getattr(args, k) for k in _FLAG_KEYS}
    for key, value in (args.schedule or {}).items():
        if flags.get(key) is None:
            flags[key] = value
    flags["experiment"] = _SUBCOMMANDS[args.command][0]
    return parse_config(text, flags, os.environ if environ is None else environ)


def main(argv=None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        report = run(cfg, stdout)
    except Exception as exc:  # every failure after validation is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
