"""Batch runner: ``qpballistic {freq,edl,transport,duality-check,tailbound,qop} --config FILE``.

Each subcommand writes one CSV table: a header row, the data rows, then ``#`` footer lines
with units, the config hash, the seed and the tool version. Exit codes: 0 success,
2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, stream_rng
from .duality import MarginError, QuadratureError, duality_residuals
from .evolution import EigensolverError
from .frequency import PrecisionExhaustedError, beta_estimate, diophantine_check, growth_ratios
from .lattice import FrequencyVector, Window, dual_current_diagonal
from .transport import (
    ballistic_scan,
    dual_eigensystem,
    dual_velocity,
    edl_kernel,
    tail_bound_scan,
    theta_ensemble,
)

log = logging.getLogger("qpballistic")

NUMERICAL_ERRORS = (EigensolverError, QuadratureError, PrecisionExhaustedError, FloatingPointError, np.linalg.LinAlgError)


@dataclass
class ResultTable:
    columns: List[Tuple[str, str]]
    rows: List[list] = field(default_factory=list)
    footer: Dict[str, str] = field(default_factory=dict)
    curves: Dict[str, Tuple[Sequence, Sequence]] = field(default_factory=dict)

    def add(self, **values):
        names = [c for c, _ in self.columns]
        unknown = set(values) - set(names)
        if unknown:
            raise KeyError(f"unknown columns {sorted(unknown)}")
        self.rows.append([values.get(c, "") for c in names])

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(c for c, _ in self.columns) + "\n")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row width does not match header")
            out.write(",".join(_fmt(v) for v in row) + "\n")
        out.write("# units: " + ";".join(f"{c}={u}" for c, u in self.columns) + "\n")
        for k, v in self.footer.items():
            out.write(f"# {k}: {v}\n")
        return out.getvalue()

    def write_curves(self, directory: Path, stem: str) -> List[Path]:
        """Two-column whitespace files, one per curve, for gnuplot-style tools."""
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, (xs, ys) in self.curves.items():
            path = directory / f"{stem}_{name}.dat"
            path.write_text("".join(f"{_fmt(x)} {_fmt(y)}\n" for x, y in zip(xs, ys)))
            paths.append(path)
        return paths


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return " ".join(_fmt(t) for t in v)
    return str(v)


def _table(columns, cfg: ExperimentConfig, subcommand: str) -> ResultTable:
    return ResultTable(
        columns,
        footer={
            "subcommand": subcommand,
            "config_hash": cfg.semantic_hash(),
            "seed": str(cfg.seed),
            "version": f"qpballistic {__version__}",
        },
    )


# ---------------------------------------------------------------- subcommands


def run_freq(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    opts = cfg.section("freq")
    alpha = cfg.frequency()
    t = _table(
        [
            ("record", "-"), ("k", "-"), ("a_k", "-"), ("p_k", "-"), ("q_k", "-"),
            ("log_ratio", "ln(q_{k+1})/q_k"), ("beta_proxy", "-"),
            ("c", "-"), ("tau", "-"), ("k_max", "-"), ("verified", "bool"), ("worst_k", "-"), ("c_max", "-"),
        ],
        cfg, "freq",
    )
    if alpha.dimension == 1:
        cf = cfg.continued_fraction(int(opts["depth"]))
        ratios = growth_ratios(cf)
        for k in range(len(ratios)):
            proxy = beta_estimate(cf.__class__.from_quotients(cf.quotients[: k + 1])) if k >= 1 else ""
            t.add(record="cf", k=k, a_k=cf.quotients[k - 1] if k else 0, p_k=cf.numerators[k],
                  q_k=cf.denominators[k], log_ratio=float(ratios[k]), beta_proxy=proxy)
        t.curves["log_ratio"] = (list(range(len(ratios))), list(ratios))
    cert = diophantine_check(alpha, float(opts["c"]), float(opts["tau"]), int(opts["k_max"]))
    t.add(record="dc", c=cert.c, tau=cert.tau, k_max=cert.k_max, verified=cert.verified,
          worst_k=cert.worst_k, c_max=cert.c_max)
    return t


def run_edl(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    opts = cfg.section("edl")
    rng = stream_rng(cfg.seed, "edl")
    alpha = cfg.frequency()
    window = Window(100 if cfg.window == "auto" else cfg.window, alpha.dimension)
    thetas = theta_ensemble(cfg.theta_samples, rng)
    ker = edl_kernel(cfg.trig_potential(), alpha, cfg.eps, thetas, window, float(opts["noise_floor"]), threads)
    t = _table(
        [("record", "-"), ("distance", "sites"), ("kernel", "-"), ("log_kernel", "-"),
         ("C", "-"), ("gamma", "1/site"), ("fit_residual", "ln units"), ("fit_points", "pairs"),
         ("gamma_infinite", "bool")],
        cfg, "edl",
    )
    dist, prof = ker.profile()
    for d, k in zip(dist, prof):
        t.add(record="profile", distance=int(d), kernel=float(k), log_kernel=float(np.log(k)) if k > 0 else -math.inf)
    t.add(record="fit", C=ker.C, gamma=ker.gamma, fit_residual=ker.fit_residual, fit_points=ker.fit_points,
          gamma_infinite=ker.gamma_infinite)
    t.curves["profile"] = (list(dist), list(prof))
    return t


def run_transport(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    opts = cfg.section("transport")
    rng = stream_rng(cfg.seed, "transport")
    alpha = cfg.frequency()
    v = cfg.trig_potential()
    xs = rng.uniform(size=(cfg.x_samples, alpha.dimension))
    p = int(opts["p"])
    window = None if cfg.window == "auto" else Window(cfg.window)
    def eigen_start(fiber):
        # the eigenstate carrying the most weight at the source site
        return fiber.eig.vectors[:, np.argmax(np.abs(fiber.eig.vectors[fiber.window.index(p)]))]

    if opts["initial"] not in ("delta", "eigenvector"):
        raise ConfigError(f"transport.initial must be 'delta' or 'eigenvector', not {opts['initial']!r}")
    reports = ballistic_scan(
        v, alpha, cfg.eps, xs, p, cfg.T_grid, float(opts["c_min"]),
        eigen_start if opts["initial"] == "eigenvector" else None,
        int(opts["mode_half"]) if opts["mode_half"] is not None else None, float(opts["tol"]), window,
        threads=threads,
    )
    t = _table(
        [("x_index", "-"), ("x", "torus"), ("T", "time"), ("velocity", "sites/time"),
         ("cauchy", "l2"), ("dual_gap", "l2"), ("ballistic", "bool")],
        cfg, "transport",
    )
    for i, r in enumerate(reports):
        for T, vel, c, g in zip(r.T_grid, r.velocity, r.cauchy, r.dual_gap):
            t.add(x_index=i, x=tuple(float(c_) for c_ in r.x), T=float(T), velocity=float(vel),
                  cauchy=float(c), dual_gap=float(g), ballistic=r.ballistic)
        t.curves[f"velocity_x{i}"] = (list(r.T_grid), list(r.velocity))
        t.curves[f"cauchy_x{i}"] = (list(r.T_grid), list(r.cauchy))
    return t


def run_duality_check(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    opts = cfg.section("duality")
    rng = stream_rng(cfg.seed, "duality-check")
    alpha = cfg.frequency()
    shift = float(opts["alpha_shift"])
    dual_alpha = FrequencyVector(tuple(np.mod(alpha.vector + shift, 1.0))) if shift else None
    res = duality_residuals(cfg.trig_potential(), alpha, cfg.eps, int(opts["tests"]),
                            int(opts["mode_box"]), int(opts["site_box"]), rng, dual_alpha)
    t = _table([("record", "-"), ("vector", "-"), ("residual", "relative l2")], cfg, "duality-check")
    for i, r in enumerate(res):
        t.add(record="vector", vector=i, residual=r)
    t.add(record="max", residual=max(res))
    t.add(record="mean", residual=float(np.mean(res)))
    return t


def run_tailbound(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    opts = cfg.section("tailbound")
    rng = stream_rng(cfg.seed, "tailbound")
    alpha = cfg.frequency()
    window = Window(int(opts["window"]) if cfg.window == "auto" else cfg.window, alpha.dimension)
    thetas = theta_ensemble(cfg.theta_samples, rng)
    k = opts["k"]
    rep = tail_bound_scan(cfg.trig_potential(), alpha, cfg.eps, k, float(opts["T"]), opts["N_list"],
                          thetas, window, threads=threads)
    t = _table([("record", "-"), ("N", "sites"), ("tail", "l1"), ("slope", "ln/site"), ("slope_stderr", "ln/site")],
               cfg, "tailbound")
    for n, val in zip(rep.N_list, rep.values):
        t.add(record="tail", N=int(n), tail=float(val))
    t.add(record="fit", slope=rep.slope, slope_stderr=rep.slope_stderr)
    t.curves["tail"] = (list(rep.N_list), list(rep.values))
    return t


def run_qop(cfg: ExperimentConfig, threads: int = 1) -> ResultTable:
    """Eigenbasis diagonal of the dual velocity per sampled phase."""
    opts = cfg.section("qop")
    rng = stream_rng(cfg.seed, "qop")
    alpha = cfg.frequency()
    v = cfg.trig_potential()
    window = Window(int(opts["window"]) if cfg.window == "auto" else cfg.window, alpha.dimension)
    t = _table(
        [("theta_index", "-"), ("theta", "torus"), ("j", "-"), ("energy", "-"), ("velocity", "-"),
         ("center", "sites"), ("q_norm", "operator norm")],
        cfg, "qop",
    )
    sites = window.sites.astype(float)
    for i, th in enumerate(theta_ensemble(cfg.theta_samples, rng)):
        eig = dual_eigensystem(v, th, alpha, cfg.eps, window)
        q = dual_velocity(eig, th, alpha, warn=False)
        a = dual_current_diagonal(th, alpha, window)
        w = np.abs(eig.vectors) ** 2
        vel = (a[:, None] * w).sum(axis=0)
        center = w.T @ sites
        qn = float(np.linalg.norm(q.matrix, 2))
        for j in range(eig.size):
            t.add(theta_index=i, theta=float(th), j=j, energy=float(eig.energies[j]), velocity=float(vel[j]),
                  center=tuple(float(c) for c in center[j]), q_norm=qn)
    return t


COMMANDS = {
    "freq": run_freq,
    "edl": run_edl,
    "transport": run_transport,
    "duality-check": run_duality_check,
    "tailbound": run_tailbound,
    "qop": run_qop,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpballistic", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qpballistic {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="YAML experiment file (defaults used when omitted)")
        p.add_argument("--out", type=Path, help="CSV destination (overrides config 'output'; default stdout)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--plot-dir", type=Path, help="also write two-column .dat curves here")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        table = COMMANDS[args.command](cfg, max(1, args.threads))
    except (ConfigError, MarginError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    text = table.to_csv()
    out = args.out or (Path(cfg.output) if cfg.output else None)
    if out is None:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. piped into head); silence the interpreter's flush at exit
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        log.info("wrote %d rows to %s", len(table.rows), out)
    if args.plot_dir:
        stem = out.stem if out else args.command
        for path in table.write_curves(args.plot_dir, stem):
            log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
