"""Run configuration: JSON schema, overrides, and the resolved experiment setup."""

from __future__ import annotations

import copy
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import measure as M
from .dyadic import GridParams, default_g_max, default_r, draw_shifts
from .kernel import kernel_from_dict
from .martingale import block_b
from .sqfn import QuadratureSpec
from .verify import DEFAULT_THRESHOLDS, SCHEMA_VERSION, Setup

DEFAULT_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "seed": 1,
    "measure": {"builtin": "lebesgue-surrogate", "k": 3, "n": 1},
    "lambda": None,
    "symmetrize": False,
    "kernel": {"family": "canonical", "alpha": 1.0},
    "grid": {"s": 8, "g_max": "auto", "r": "auto", "jitter_bits": 16},
    "quadrature": {"K": 8},
    "b": {"type": "one"},
    "experiments": ["hypotheses", "goodness", "schur", "averaging", "cases", "final_sum",
                    "carleson", "quadrature", "necessity", "theorem"],
    "options": {},
    "thresholds": {},
    "out": "reports",
}


class ConfigError(ValueError):
    """Invalid or unreadable configuration (CLI exit status 2)."""


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(cfg: dict, item: str) -> dict:
    """Set a dotted key from ``key=value``; the value is parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    out = copy.deepcopy(cfg)
    node = out
    parts = key.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value
    return out


@dataclass
class RunConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_CONFIG))

    @classmethod
    def load(cls, path=None, overrides=(), seed=None) -> "RunConfig":
        data = copy.deepcopy(DEFAULT_CONFIG)
        if path is not None:
            p = Path(path)
            if not p.exists():
                raise ConfigError(f"config file not found: {p}")
            try:
                user = json.loads(p.read_text())
            except json.JSONDecodeError as e:
                raise ConfigError(f"cannot parse {p}: {e}") from e
            if not isinstance(user, dict):
                raise ConfigError(f"{p}: top level must be an object")
            data = _merge(data, user)
        for item in overrides:
            data = apply_override(data, item)
        if seed is not None:
            data["seed"] = int(seed)
        cfg = cls(data)
        cfg.validate()
        return cfg

    def validate(self):
        d = self.data
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {d.get('schema_version')!r}")
        if not isinstance(d.get("seed"), int):
            raise ConfigError("seed must be an integer")
        m = d["measure"]
        if "file" in m:
            if not Path(m["file"]).exists():
                raise ConfigError(f"measure file not found: {m['file']}")
        elif "builtin" in m:
            if m["builtin"] not in M.BUILTINS:
                raise ConfigError(f"unknown builtin measure {m['builtin']!r}")
        elif "atoms" not in m:
            raise ConfigError("measure needs 'file', 'builtin' or inline 'atoms'")
        unknown = set(d) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if not isinstance(d["experiments"], list):
            raise ConfigError("experiments must be a list")

    @property
    def seed(self) -> int:
        return self.data["seed"]

    def to_dict(self) -> dict:
        """Resolved configuration without the output location, so reports do not depend on it."""
        out = copy.deepcopy(self.data)
        out.pop("out", None)
        return out


def load_measure(spec: dict):
    """Measure and its default dominating function from a measure section."""
    spec = dict(spec)
    if "file" in spec:
        try:
            data = json.loads(Path(spec["file"]).read_text())
            mu = M.DiscreteMeasure.from_dict(data)
        except (OSError, ValueError, KeyError) as e:
            raise ConfigError(f"cannot read measure file {spec['file']}: {e}") from e
        lam = M.lambda_from_dict(data["lambda"]) if "lambda" in data else None
        return mu, lam
    if "atoms" in spec:
        return M.DiscreteMeasure.from_atoms(spec["dim"], spec["atoms"]), None
    name = spec.pop("builtin")
    try:
        return M.BUILTINS[name](**spec)
    except TypeError as e:
        raise ConfigError(f"bad arguments for builtin {name!r}: {e}") from e


def _default_lambda(mu: M.DiscreteMeasure) -> M.PowerLaw:
    return M.fit_power_law(mu, float(mu.dim), float(np.max(mu.masses)))


def build_b(spec: dict, mu: M.DiscreteMeasure) -> np.ndarray:
    kind = spec.get("type", "one")
    if kind == "one":
        return np.ones(len(mu))
    if kind == "block":
        return block_b(len(mu), spec.get("block", 8), spec.get("amplitude", 0.5))
    if kind == "values":
        b = np.asarray(spec["values"], float)
        if b.shape != (len(mu),):
            raise ConfigError("b values must have one entry per atom")
        return b
    raise ConfigError(f"unknown b type {kind!r}")


def seed_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


def build_setup(cfg: RunConfig) -> Setup:
    d = cfg.data
    mu, lam = load_measure(d["measure"])
    if d.get("lambda"):
        lam = M.lambda_from_dict(d["lambda"])
    elif lam is None:
        lam = _default_lambda(mu)
    g = d["grid"]
    g_max = default_g_max(mu) if g.get("g_max", "auto") == "auto" else int(g["g_max"])
    if d.get("symmetrize"):
        lam = M.symmetrize(lam, M.default_candidates(mu, min(g_max, 10)))
    kernel = kernel_from_dict(d["kernel"], lam)
    alpha, s = kernel.alpha, int(g.get("s", 8))
    r = g.get("r", "auto")
    r = default_r(alpha, lam.d, s, g_max, mu.dim) if r == "auto" else int(r)
    try:
        params = GridParams(alpha, lam.d, r, s, g_max, int(g.get("jitter_bits", 16)))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if "shifts" in g:
        from .dyadic import ShiftSequence
        shifts, rejected = ShiftSequence.from_dict(g["shifts"]), 0
    else:
        shifts, rejected = draw_shifts(params, mu.dim, seed_rng(cfg.seed, "shifts"), mu)
    thresholds = {**DEFAULT_THRESHOLDS, **d.get("thresholds", {})}
    return Setup(mu, lam, kernel, params, shifts, QuadratureSpec(int(d["quadrature"]["K"])),
                 build_b(d["b"], mu), cfg.seed, rejected, thresholds)
