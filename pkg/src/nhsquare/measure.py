"""Finite atomic measures on R^n (l-infinity metric) and their dominating functions."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def linf(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Max-norm distance with broadcasting over leading axes."""
    return np.max(np.abs(np.asarray(a, float) - np.asarray(b, float)), axis=-1)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Atoms ``points[i]`` carrying ``masses[i] > 0``."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        ms = np.array(self.masses, dtype=float).reshape(-1)
        if pts.shape[0] != ms.shape[0]:
            raise ValueError("points and masses differ in length")
        if ms.size and not np.all(ms > 0):
            raise ValueError("atom masses must be strictly positive")
        if ms.size and not np.all(np.isfinite(pts)):
            raise ValueError("atom coordinates must be finite")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("atom points must be pairwise distinct")
        pts.setflags(write=False)
        ms.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)

    @classmethod
    def from_atoms(cls, dim: int, atoms) -> "DiscreteMeasure":
        atoms = [list(a) for a in atoms]
        if not atoms:
            return cls(np.zeros((0, dim)), np.zeros(0))
        arr = np.array(atoms, dtype=float)
        if arr.shape[1] != dim + 1:
            raise ValueError(f"each atom needs {dim} coordinates and a mass")
        return cls(arr[:, :dim], arr[:, dim])

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.masses.shape[0]

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def norm(self, f) -> float:
        """L^2(mu) norm of an atom-valued function."""
        f = np.asarray(f, float)
        return float(np.sqrt(np.sum(self.masses * f * f)))

    def integral(self, f) -> float:
        return float(np.sum(self.masses * np.asarray(f, float)))

    def min_separation(self) -> float:
        if len(self) < 2:
            return math.inf
        d = linf(self.points[:, None, :], self.points[None, :, :])
        np.fill_diagonal(d, np.inf)
        return float(d.min())

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "atoms": [[*map(float, p), float(m)] for p, m in zip(self.points, self.masses)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMeasure":
        return cls.from_atoms(int(data["dim"]), data["atoms"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "DiscreteMeasure":
        return cls.from_dict(json.loads(Path(path).read_text()))


def ball_mass(mu: DiscreteMeasure, x, r: float) -> float:
    """Mass of the open max-norm ball B(x, r)."""
    if r <= 0:
        raise ValueError("radius must be positive")
    if len(mu) == 0:
        return 0.0
    inside = linf(mu.points, np.asarray(x, float)) < r
    return float(mu.masses[inside].sum())


# ---------------------------------------------------------------------------
# dominating functions


class DominatingFunction:
    """lambda(x, r): non-decreasing and doubling in r, positive."""

    C_lambda: float

    def __call__(self, x, r) -> np.ndarray:
        raise NotImplementedError

    @property
    def d(self) -> float:
        return doubling_exponent(self)

    translation_invariant = False

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerLaw(DominatingFunction):
    """lambda(x, r) = c * r**m + floor, independent of x."""

    c: float
    m: float
    floor: float = 0.0
    C_lambda: float = field(default=None)

    translation_invariant = True

    def __post_init__(self):
        if self.c < 0 or self.m < 0 or self.floor < 0:
            raise ValueError("power law needs c, m, floor >= 0")
        if self.c == 0 and self.floor == 0:
            raise ValueError("power law must be positive")
        if self.C_lambda is None:
            object.__setattr__(self, "C_lambda", 2.0 ** self.m)

    def __call__(self, x, r):
        r = np.asarray(r, float)
        return self.c * r**self.m + self.floor

    def to_dict(self) -> dict:
        return {"form": "power_law", "c": self.c, "m": self.m, "floor": self.floor,
                "C_lambda": self.C_lambda}


@dataclass(frozen=True, eq=False)
class Symmetrized(DominatingFunction):
    """Lambda(x, r) = min over candidates z of lambda(z, r + |x - z|)."""

    wrapped: DominatingFunction
    candidates: np.ndarray

    def __post_init__(self):
        cand = np.array(self.candidates, dtype=float, ndmin=2)
        if cand.shape[0] == 0:
            raise ValueError("symmetrize needs at least one candidate point")
        cand.setflags(write=False)
        object.__setattr__(self, "candidates", cand)

    @property
    def C_lambda(self) -> float:
        return self.wrapped.C_lambda

    def __call__(self, x, r):
        x = np.asarray(x, float)
        r = np.asarray(r, float)
        x, r = np.broadcast_arrays(x, r[..., None])
        r = r[..., 0]
        best = np.full(r.shape, np.inf)
        # chunk over candidates to bound memory
        for start in range(0, len(self.candidates), 256):
            z = self.candidates[start:start + 256]
            dz = linf(x[..., None, :], z)
            vals = self.wrapped(np.broadcast_to(z, dz.shape + z.shape[-1:]), r[..., None] + dz)
            best = np.minimum(best, vals.min(axis=-1))
        return best

    def to_dict(self) -> dict:
        return {"form": "symmetrized", "wrapped": self.wrapped.to_dict(),
                "candidates": self.candidates.tolist()}


def lambda_from_dict(data: dict) -> DominatingFunction:
    form = data.get("form", "power_law")
    if form == "power_law":
        return PowerLaw(float(data["c"]), float(data["m"]), float(data.get("floor", 0.0)),
                        C_lambda=data.get("C_lambda"))
    if form == "symmetrized":
        return Symmetrized(lambda_from_dict(data["wrapped"]), np.array(data["candidates"]))
    raise ValueError(f"unknown dominating function form {form!r}")


def doubling_exponent(lam: DominatingFunction) -> float:
    if lam.C_lambda < 1:
        raise ValueError("doubling constant must be >= 1")
    return math.log2(lam.C_lambda)


def symmetrize(lam: DominatingFunction, candidates) -> Symmetrized:
    return Symmetrized(lam, np.asarray(candidates, float))


def default_candidates(mu: DiscreteMeasure, g_max: int) -> np.ndarray:
    """Atoms plus a uniform grid over the bounding box at resolution 2**-g_max."""
    lo, hi = mu.points.min(axis=0), mu.points.max(axis=0)
    h = 2.0 ** -g_max
    axes = [np.arange(a, b + h / 2, h) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, mu.dim)
    return np.unique(np.concatenate([mu.points, grid]), axis=0)


@dataclass
class DominationReport:
    max_ratio: float
    argmax: tuple | None
    witnesses: list  # (x, r, ratio) with ratio > 1

    @property
    def dominated(self) -> bool:
        return self.max_ratio <= 1.0


def dyadic_radii(g_max: int, s: int) -> np.ndarray:
    return 2.0 ** -np.arange(-(s + 1), g_max + 1, dtype=float)


def verify_domination(mu: DiscreteMeasure, lam: DominatingFunction, points=None, radii=None,
                      g_max: int = 10, s: int = 1, max_witnesses: int = 20) -> DominationReport:
    """Largest mu(B(x,r)) / lambda(x,r) over a finite sample of (x, r)."""
    if len(mu) == 0:
        return DominationReport(0.0, None, [])
    pts = mu.points if points is None else np.array(points, float, ndmin=2)
    rs = dyadic_radii(g_max, s) if radii is None else np.asarray(radii, float)
    dist = linf(pts[:, None, :], mu.points[None, :, :])
    # masses[k, i]: mass of B(pts[k], rs[i])
    masses = np.stack([(mu.masses[None, :] * (dist < r)).sum(axis=1) for r in rs], axis=1)
    lam_vals = lam(pts[:, None, :], rs[None, :])
    ratio = masses / lam_vals
    k, i = np.unravel_index(np.argmax(ratio), ratio.shape)
    bad = np.argwhere(ratio > 1.0)
    order = np.argsort(-ratio[bad[:, 0], bad[:, 1]]) if len(bad) else []
    witnesses = [(pts[a].tolist(), float(rs[b]), float(ratio[a, b]))
                 for a, b in bad[order][:max_witnesses]]
    return DominationReport(float(ratio[k, i]), (pts[k].tolist(), float(rs[i])), witnesses)


def fit_power_law(mu: DiscreteMeasure, m: float, floor: float) -> PowerLaw:
    """Smallest c with mu(B(x,r)) <= c r^m + floor for every centre x.

    In one dimension the sliding-window maximum is exact.  In higher
    dimensions balls centred at atoms are fitted and the constant is
    inflated by 2^m, since any ball B(x,r) with mass sits inside B(a, 2r)
    for an atom a in it.
    """
    if len(mu) == 0:
        return PowerLaw(1.0, m, max(floor, 1.0))
    if np.max(mu.masses) > floor:
        raise ValueError("floor must dominate the largest atom")
    c = 0.0
    if mu.dim == 1:
        order = np.argsort(mu.points[:, 0])
        xs, ms = mu.points[order, 0], mu.masses[order]
        csum = np.concatenate([[0.0], np.cumsum(ms)])
        for i in range(len(xs)):
            # open ball containing atoms i..j has radius just above (x_j - x_i)/2
            rad = (xs[i + 1:] - xs[i]) / 2
            mass = csum[i + 2:] - csum[i]
            if rad.size:
                c = max(c, float(np.max((mass - floor) / rad**m)))
        scale = 1.0
    else:
        dist = linf(mu.points[:, None, :], mu.points[None, :, :])
        for i in range(len(mu)):
            for rad in np.unique(dist[i][dist[i] > 0]):
                mass = mu.masses[dist[i] <= rad].sum()
                c = max(c, (mass - floor) / rad**m)
        scale = 2.0**m
    c = max(c, 0.0) * scale * (1 + 1e-9)
    if c == 0.0 and floor == 0.0:
        c = 1.0
    return PowerLaw(c, m, floor)


# ---------------------------------------------------------------------------
# builtin measures


def lebesgue_surrogate(k: int, n: int = 1) -> tuple[DiscreteMeasure, PowerLaw]:
    """4**k equal atoms on a regular lattice of cell centres in [0,1]^n.

    The returned lambda is 2^(n-1) (2r)^n + 2^n h^n with spacing h, which in
    one dimension is 2r + 2h.
    """
    if (2 * k) % n:
        raise ValueError("4**k atoms must form a square lattice in n dimensions")
    per_side = 2 ** (2 * k // n)
    h = 1.0 / per_side
    axes = [(np.arange(per_side) + 0.5) * h] * n
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    mu = DiscreteMeasure(pts, np.full(len(pts), 1.0 / len(pts)))
    lam = PowerLaw(2.0 ** (n - 1) * 2.0**n, float(n), 2.0**n * h**n)
    return mu, lam


def cantor(depth: int, ratio: float = 1 / 3) -> tuple[DiscreteMeasure, PowerLaw]:
    """Centres of the 2**depth intervals of the middle-gap Cantor construction."""
    if not 0 < ratio < 0.5:
        raise ValueError("ratio must lie in (0, 1/2)")
    starts = np.array([0.0])
    length = 1.0
    for _ in range(depth):
        child = length * ratio
        starts = np.concatenate([starts, starts + length - child])
        length = child
    starts.sort()
    pts = (starts + length / 2)[:, None]
    mu = DiscreteMeasure(pts, np.full(len(pts), 2.0**-depth))
    m = math.log(2) / math.log(1 / ratio)
    return mu, fit_power_law(mu, m, 2.0**-depth)


def point_cloud(count: int, n: int = 1, seed: int = 0) -> tuple[DiscreteMeasure, PowerLaw]:
    """Uniform random points in [0,1)^n with equal masses."""
    rng = np.random.default_rng(seed)
    pts = rng.random((count, n))
    mu = DiscreteMeasure(pts, np.full(count, 1.0 / count))
    return mu, fit_power_law(mu, float(n), 1.0 / count)


BUILTINS = {
    "lebesgue-surrogate": lebesgue_surrogate,
    "cantor": cantor,
    "point-cloud": point_cloud,
}
