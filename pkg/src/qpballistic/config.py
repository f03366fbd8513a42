"""Experiment configuration: a versioned YAML document.

Example::

    schema_version: 1
    potential: amo                 # or a list of [m, re, im] records, m an int or int list
    alpha: golden                  # float, decimal string, golden, {quotients: [...]},
                                   # {liouville_beta: 0.5, depth: 10}, {rational: [p, q]},
                                   # or a list of floats for d > 1
    eps: 0.2
    window: auto                   # or a half-width
    theta_samples: 64
    x_samples: 3
    seed: 20240101
    T_grid: [25, 50, 100, 200]
    freq: {depth: 20, c: 0.27, tau: 1.0, k_max: 1000}
    output: results/edl.csv

Subcommand sections (``freq``, ``edl``, ``transport``, ``duality``, ``tailbound``, ``qop``) are
optional mappings of options; defaults are listed in ``SECTION_DEFAULTS``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Union

import mpmath
import numpy as np
import yaml

from .frequency import ContinuedFraction, continued_fraction, liouville_quotients
from .lattice import FrequencyVector, TrigPotential

SCHEMA_VERSION = 1

SECTION_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "freq": {"depth": 20, "c": 0.27, "tau": 1.0, "k_max": 1000},
    "edl": {"noise_floor": 0.0},
    "transport": {"p": 0, "c_min": 0.05, "mode_half": 30, "initial": "delta", "tol": 1e-8},
    "duality": {"tests": 100, "mode_box": 32, "site_box": 64, "alpha_shift": 0.0},
    "tailbound": {"k": 0, "T": 1000.0, "N_list": [5, 10, 15, 20, 25, 30, 35, 40], "window": 100},
    "qop": {"window": 25},
}

TOP_KEYS = {
    "schema_version", "potential", "alpha", "eps", "window", "theta_samples", "x_samples",
    "seed", "T_grid", "output",
} | set(SECTION_DEFAULTS)


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class ExperimentConfig:
    potential: Any = "amo"
    alpha: Any = "golden"
    eps: float = 0.2
    window: Union[str, int] = "auto"
    theta_samples: int = 64
    x_samples: int = 3
    seed: int = 0
    T_grid: List[float] = field(default_factory=lambda: [25.0, 50.0, 100.0, 200.0])
    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    output: Optional[str] = None
    schema_version: int = SCHEMA_VERSION

    def section(self, name: str) -> Dict[str, Any]:
        opts = dict(SECTION_DEFAULTS[name])
        opts.update(self.sections.get(name, {}))
        return opts

    # ---- derived objects

    def trig_potential(self) -> TrigPotential:
        if self.potential == "amo":
            return TrigPotential.almost_mathieu(self.frequency().dimension)
        return TrigPotential.from_records(self.potential)

    def frequency(self) -> FrequencyVector:
        a = self.alpha
        if a == "golden":
            return FrequencyVector.golden()
        if isinstance(a, dict):
            if "rational" in a:
                p, q = (int(t) for t in a["rational"])
                return FrequencyVector((p / q,), rational_denominator=q)
            return FrequencyVector((float(self.continued_fraction(exact=True).value),))
        if isinstance(a, (list, tuple)):
            return FrequencyVector(tuple(float(t) for t in a))
        return FrequencyVector((float(a),))

    def continued_fraction(self, depth: Optional[int] = None, exact: bool = False) -> ContinuedFraction:
        """Expansion of a one-frequency ``alpha`` to ``depth`` quotients."""
        a = self.alpha
        depth = depth or int(self.section("freq")["depth"])
        if isinstance(a, dict):
            if "quotients" in a:
                return ContinuedFraction.from_quotients(a["quotients"][: None if exact else depth])
            if "liouville_beta" in a:
                d = int(a.get("depth", depth))
                qs = liouville_quotients(float(a["liouville_beta"]), d, int(a.get("period", 5)))
                return ContinuedFraction.from_quotients(qs if exact else qs[:depth])
            if "rational" in a:
                p, q = (int(t) for t in a["rational"])
                return continued_fraction(Fraction(p, q), depth)
        if isinstance(a, (list, tuple)):
            raise ConfigError("continued fractions need a single frequency")
        if a == "golden":
            with mpmath.workdps(max(30, depth)):
                return continued_fraction((mpmath.sqrt(5) - 1) / 2, depth)
        if isinstance(a, str):
            with mpmath.workdps(len(a) + 5):
                return continued_fraction(mpmath.mpf(a), depth)
        return continued_fraction(float(a), depth)

    # ---- serialization

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "schema_version": self.schema_version,
            "potential": self.potential,
            "alpha": self.alpha,
            "eps": self.eps,
            "window": self.window,
            "theta_samples": self.theta_samples,
            "x_samples": self.x_samples,
            "seed": self.seed,
            "T_grid": list(self.T_grid),
        }
        for k, v in self.sections.items():
            out[k] = dict(v)
        if self.output is not None:
            out["output"] = self.output
        return copy.deepcopy(out)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def semantic_hash(self) -> str:
        """Hash of every field that affects results (``output`` excluded); defaults are resolved."""
        d = self.to_dict()
        d.pop("output", None)
        for name in SECTION_DEFAULTS:
            d[name] = self.section(name)
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _key_lines(text: str) -> Dict[str, int]:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {exc}", mark.line + 1 if mark else None) from exc
    if node is None:
        return {}
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError("configuration must be a mapping", node.start_mark.line + 1)
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def _validate(cfg: ExperimentConfig, lines: Dict[str, int]) -> None:
    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", lines.get(key))

    if cfg.schema_version != SCHEMA_VERSION:
        fail("schema_version", f"unsupported schema version {cfg.schema_version} (expected {SCHEMA_VERSION})")
    try:
        alpha = cfg.frequency()
    except (ValueError, TypeError, KeyError) as exc:
        fail("alpha", str(exc))
    try:
        v = cfg.trig_potential()
    except (ValueError, TypeError) as exc:
        fail("potential", str(exc))
    if v.symmetry_defect() > 1e-12:
        fail("potential", f"coefficients are not Hermitian-symmetric (defect {v.symmetry_defect():.3e}); v must be real")
    if v.dimension != alpha.dimension:
        fail("potential", f"dimension {v.dimension} differs from alpha dimension {alpha.dimension}")
    if not isinstance(cfg.eps, (int, float)) or cfg.eps < 0:
        fail("eps", "must be a nonnegative number")
    if cfg.window != "auto" and (not isinstance(cfg.window, int) or cfg.window < 1):
        fail("window", "must be 'auto' or a positive integer")
    for key in ("theta_samples", "x_samples"):
        val = getattr(cfg, key)
        if not isinstance(val, int) or val < 1:
            fail(key, "must be a positive integer")
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2 ** 64:
        fail("seed", "must be an unsigned 64-bit integer")
    if not cfg.T_grid or any(not isinstance(t, (int, float)) or t <= 0 for t in cfg.T_grid):
        fail("T_grid", "must be a nonempty list of positive times")
    for name, opts in cfg.sections.items():
        if not isinstance(opts, dict):
            fail(name, "section must be a mapping")
        unknown = set(opts) - set(SECTION_DEFAULTS[name])
        if unknown:
            fail(name, f"unknown options {sorted(unknown)}")


def parse_config(text: str) -> ExperimentConfig:
    lines = _key_lines(text)
    raw = yaml.safe_load(text) or {}
    unknown = set(raw) - TOP_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {key!r}", lines.get(key))
    kwargs = {k: raw[k] for k in raw if k not in SECTION_DEFAULTS}
    sections = {k: raw[k] for k in raw if k in SECTION_DEFAULTS}
    if "T_grid" in kwargs and isinstance(kwargs["T_grid"], list):
        kwargs["T_grid"] = [float(t) if isinstance(t, (int, float)) else t for t in kwargs["T_grid"]]
    cfg = ExperimentConfig(sections=sections, **kwargs)
    _validate(cfg, lines)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# one 64-bit seed, one independent stream per subcommand
STREAM_IDS = {"freq": 0, "edl": 1, "transport": 2, "duality-check": 3, "tailbound": 4, "qop": 5}


def stream_rng(seed: int, subcommand: str) -> np.random.Generator:
    """``Generator(PCG64(SeedSequence(seed, spawn_key=(stream_id,))))``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAM_IDS[subcommand],)))
