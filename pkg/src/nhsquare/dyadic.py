"""Truncated random dyadic grids, good and bad cubes, Whitney regions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .measure import DiscreteMeasure


def goodness_exponent(alpha: float, d: float) -> float:
    return alpha / (2 * d + 2 * alpha)


@dataclass(frozen=True)
class GridParams:
    """Scale window [2**-g_max, 2**s] and goodness parameters.

    ``jitter_bits`` extra shift bits below the finest tracked scale stand in
    for the infinite tail of the shift sequence; they move cubes but never
    affect goodness.
    """

    alpha: float
    d: float
    r: int
    s: int
    g_max: int
    jitter_bits: int = 16

    def __post_init__(self):
        if self.alpha <= 0 or self.d < 0:
            raise ValueError("need alpha > 0 and d >= 0")
        if self.r < 1:
            raise ValueError("r must be a positive integer")
        if 2.0 ** (self.r * (1 - self.gamma)) < 3:
            raise ValueError(f"r={self.r} violates 2^(r(1-gamma)) >= 3 (gamma={self.gamma:.4g})")
        if self.g_max <= -self.s:
            raise ValueError("finest scale must be below the coarsest")
        if self.jitter_bits < 0:
            raise ValueError("jitter_bits must be >= 0")

    @property
    def gamma(self) -> float:
        return goodness_exponent(self.alpha, self.d)

    @property
    def gens(self) -> range:
        return range(-self.s, self.g_max + 1)

    @property
    def t_floor(self) -> float:
        """Lower t-limit standing in for 0 in Carleson boxes."""
        return 2.0 ** (-self.g_max - 1)

    def threshold(self, small: float, big: float) -> float:
        return small**self.gamma * big ** (1 - self.gamma)

    def replace(self, **kw) -> "GridParams":
        return GridParams(**{**self.__dict__, **kw})

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "d": self.d, "gamma": self.gamma, "r": self.r,
                "s": self.s, "g_max": self.g_max, "jitter_bits": self.jitter_bits}


def min_r(gamma: float) -> int:
    return max(1, math.ceil(math.log2(3) / (1 - gamma) - 1e-12))


def default_r(alpha: float, d: float, s: int, g_max: int, n: int = 1,
              floor: float = 0.1) -> int:
    """Smallest r with 2^(r(1-gamma)) >= 3 and pi_good > floor at the finest generation.

    pi_good(j) only decreases as j grows, so the finest generation is the
    worst case inside the window.
    """
    gamma = goodness_exponent(alpha, d)
    r = min_r(gamma)
    while _enumerated_probability_1d(gamma, r, s, min(g_max, 20 - s)) ** n <= floor:
        r += 1
    return r


def default_g_max(mu: DiscreteMeasure) -> int:
    """Smallest g with 2**-g below a quarter of the minimal atom separation."""
    sep = mu.min_separation()
    if not math.isfinite(sep):
        return 4
    return math.floor(-math.log2(sep / 4)) + 1


# ---------------------------------------------------------------------------
# shift sequences


@dataclass(frozen=True, eq=False)
class ShiftSequence:
    """Bits w_i in {0,1}^n for scales i = first_scale, first_scale+1, ...

    Scale i has length 2**-i; ``bits[row]`` belongs to i = first_scale + row.
    """

    first_scale: int
    bits: np.ndarray

    def __post_init__(self):
        b = np.array(self.bits, dtype=np.uint8, ndmin=2)
        if b.size and b.max() > 1:
            raise ValueError("shift bits must be 0 or 1")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def n(self) -> int:
        return self.bits.shape[1]

    @property
    def last_scale(self) -> int:
        return self.first_scale + self.bits.shape[0] - 1

    def bit(self, i: int) -> np.ndarray:
        if not self.first_scale <= i <= self.last_scale:
            return np.zeros(self.n, dtype=np.uint8)
        return self.bits[i - self.first_scale]

    def offset(self, j: int) -> np.ndarray:
        """Sum of 2**-i w_i over scales strictly finer than 2**-j."""
        lo = max(j + 1, self.first_scale)
        if lo > self.last_scale:
            return np.zeros(self.n)
        rows = self.bits[lo - self.first_scale:]
        weights = 2.0 ** -np.arange(lo, self.last_scale + 1, dtype=float)
        # finest first so every partial sum is exact
        return (weights[::-1, None] * rows[::-1]).sum(axis=0)

    def with_bit(self, i: int, value) -> "ShiftSequence":
        b = self.bits.copy()
        b[i - self.first_scale] = value
        return ShiftSequence(self.first_scale, b)

    def to_dict(self) -> dict:
        return {"first_scale": self.first_scale, "shape": list(self.bits.shape),
                "hex": np.packbits(self.bits.reshape(-1)).tobytes().hex()}

    @classmethod
    def from_dict(cls, data: dict) -> "ShiftSequence":
        shape = tuple(data["shape"])
        raw = np.frombuffer(bytes.fromhex(data["hex"]), dtype=np.uint8)
        bits = np.unpackbits(raw)[: shape[0] * shape[1]].reshape(shape)
        return cls(int(data["first_scale"]), bits)

    @classmethod
    def zeros(cls, params: GridParams, n: int) -> "ShiftSequence":
        return cls(-params.s + 1, np.zeros((_n_scales(params), n), dtype=np.uint8))

    @classmethod
    def random(cls, params: GridParams, n: int, rng: np.random.Generator) -> "ShiftSequence":
        return cls(-params.s + 1, rng.integers(0, 2, size=(_n_scales(params), n), dtype=np.uint8))


def _n_scales(params: GridParams) -> int:
    return params.g_max + params.jitter_bits + params.s


# ---------------------------------------------------------------------------
# cubes and boxes


@dataclass(frozen=True)
class Box:
    """Half-open cube [lo, lo + side)^n."""

    lo: tuple
    side: float

    @property
    def lo_arr(self) -> np.ndarray:
        return np.asarray(self.lo, float)

    @property
    def hi_arr(self) -> np.ndarray:
        return self.lo_arr + self.side

    @property
    def center(self) -> np.ndarray:
        return self.lo_arr + self.side / 2

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float)
        return np.all((pts >= self.lo_arr) & (pts < self.hi_arr), axis=-1)

    def dilate(self, kappa: float) -> "Box":
        """Concentric cube with side kappa * side."""
        side = kappa * self.side
        return Box(tuple(self.center - side / 2), side)


@dataclass(frozen=True)
class Cube(Box):
    """Cube of a shifted dyadic grid: lo = 2**-gen * index + offset."""

    gen: int = 0
    index: tuple = ()

    def __repr__(self):
        return f"Cube(gen={self.gen}, index={self.index})"

    @property
    def key(self) -> tuple:
        return (self.gen, self.index)


def dist(Q: Box, R: Box) -> float:
    """Max-norm distance between the closed boxes."""
    gap = np.maximum(0.0, np.maximum(R.lo_arr - Q.hi_arr, Q.lo_arr - R.hi_arr))
    return float(gap.max())


def long_dist(Q: Box, R: Box) -> float:
    return Q.side + R.side + dist(Q, R)


def boundary_dist(Q: Box, Qt: Box) -> float:
    """Max-norm distance from closed Q to the boundary of Qt."""
    q_lo, q_hi, t_lo, t_hi = Q.lo_arr, Q.hi_arr, Qt.lo_arr, Qt.hi_arr
    if np.all(q_lo >= t_lo) and np.all(q_hi <= t_hi):
        return float(np.minimum(q_lo - t_lo, t_hi - q_hi).min())
    gap = dist(Q, Qt)
    return gap  # zero when the closures meet, since Q then crosses the boundary


@dataclass(frozen=True)
class Region:
    """Q x (t_lo, t_hi] in the upper half-space."""

    cube: Box
    t_lo: float
    t_hi: float
    kind: str

    def __post_init__(self):
        if not 0 < self.t_lo < self.t_hi:
            raise ValueError("region needs 0 < t_lo < t_hi")


def whitney(Q: Box) -> Region:
    return Region(Q, Q.side / 2, Q.side, "whitney")


def carleson_box(Q: Box, t_floor: float) -> Region:
    return Region(Q, t_floor, Q.side, "carleson")


# ---------------------------------------------------------------------------
# grids


class DyadicGrid:
    """The cubes 2**-j (k + [0,1)^n) + offset_j, -s <= j <= g_max."""

    def __init__(self, params: GridParams, shifts: ShiftSequence):
        if shifts.first_scale > -params.s + 1 or shifts.last_scale < params.g_max:
            raise ValueError("shift sequence does not cover the tracked scales")
        self.params = params
        self.shifts = shifts
        self._offsets = {j: shifts.offset(j) for j in range(-params.s, params.g_max + 2)}

    @property
    def n(self) -> int:
        return self.shifts.n

    def offset(self, j: int) -> np.ndarray:
        if j not in self._offsets:
            self._offsets[j] = self.shifts.offset(j)
        return self._offsets[j]

    def _check_gen(self, j: int):
        if not -self.params.s <= j <= self.params.g_max + 1:
            raise ValueError(f"generation {j} outside [{-self.params.s}, {self.params.g_max}]")

    def cube(self, j: int, index) -> Cube:
        self._check_gen(j)
        side = 2.0**-j
        idx = tuple(int(v) for v in np.broadcast_to(index, (self.n,)))
        lo = np.asarray(idx, float) * side + self.offset(j)
        return Cube(tuple(lo.tolist()), side, j, idx)

    def locate_indices(self, pts, j: int) -> np.ndarray:
        pts = np.asarray(pts, float)
        return np.floor((pts - self.offset(j)) * 2.0**j).astype(np.int64)

    def locate(self, x, j: int) -> Cube:
        return self.cube(j, self.locate_indices(np.asarray(x, float), j))

    def children(self, Q: Cube) -> list[Cube]:
        base = np.rint((Q.lo_arr - self.offset(Q.gen + 1)) * 2.0 ** (Q.gen + 1)).astype(int)
        return [self.cube(Q.gen + 1, base + np.array(e))
                for e in itertools.product((0, 1), repeat=self.n)]

    def parent(self, Q: Cube) -> Cube:
        return self.ancestor(Q, 1)

    def ancestor(self, Q: Cube, k: int) -> Cube:
        if k < 0 or Q.gen - k < -self.params.s:
            raise ValueError(f"ancestor {k} of generation {Q.gen} is outside the grid")
        if k == 0:
            return Q
        return self.locate(Q.lo_arr, Q.gen - k)

    def is_bad(self, Q: Cube) -> tuple[bool, Cube | None]:
        """Badness with a witness cube; only the cubes nearest Q are scanned."""
        p = self.params
        for m in range(p.r, Q.gen + p.s + 1):
            A = self.ancestor(Q, m)
            thr = p.threshold(Q.side, A.side)
            for e in itertools.product((-1, 0, 1), repeat=self.n):
                C = self.cube(A.gen, np.array(A.index) + np.array(e))
                if boundary_dist(Q, C) <= thr:
                    return True, C
        return False, None

    def is_good(self, Q: Cube) -> bool:
        return not self.is_bad(Q)[0]

    def boundary_hits(self, pts) -> bool:
        """True if some point lies on a cube boundary at a tracked generation."""
        pts = np.asarray(pts, float)
        for j in self.params.gens:
            u = (pts - self.offset(j)) * 2.0**j
            if np.any(u == np.floor(u)):
                return True
        return False


def bad_mask(grid_offsets, params: GridParams, lo: np.ndarray, j: int) -> np.ndarray:
    """Vectorised badness of generation-j cubes with lower corners ``lo``.

    ``grid_offsets(g)`` returns the offset of generation g, broadcastable
    against ``lo`` (shape (..., n)).  Only ancestors are examined: a cube
    of the same generation as the ancestor but disjoint from it is never
    closer to Q than the ancestor's own boundary.
    """
    side = 2.0**-j
    bad = np.zeros(lo.shape[:-1], dtype=bool)
    for m in range(params.r, j + params.s + 1):
        g = j - m
        big = 2.0**-g
        off = grid_offsets(g)
        a_lo = np.floor((lo - off) / big) * big + off
        gap = np.minimum(lo - a_lo, a_lo + big - (lo + side)).min(axis=-1)
        bad |= gap <= params.threshold(side, big)
    return bad


def _enumerated_probability_1d(gamma: float, r: int, s: int, j: int) -> float:
    """pi_good(j) in one dimension; relative positions are uniform on 2**(j+s) slots."""
    depth = j + s
    if depth < r:
        return 1.0
    pos = np.arange(2**depth, dtype=np.int64)
    good = np.ones(pos.shape, dtype=bool)
    for m in range(r, depth + 1):
        p = pos % (2**m)
        gap = np.minimum(p, 2**m - 1 - p)
        good &= gap > 2.0 ** (m * (1 - gamma))
    return float(good.mean())


@dataclass
class Probability:
    p: float
    stderr: float
    mode: str
    samples: int


MAX_ENUM_BITS = 22


def goodness_probability(params: GridParams, j: int, n: int = 1, mode: str = "enumerate",
                         N: int = 0, seed: int = 0) -> Probability:
    """P_w(Q + w is good) for a generation-j cube of the unshifted grid."""
    if not -params.s <= j <= params.g_max:
        raise ValueError("generation outside the grid")
    depth = j + params.s
    if mode == "enumerate":
        nbits = n * depth
        if nbits > MAX_ENUM_BITS:
            raise ValueError(f"{nbits} bits is too many to enumerate; use monte_carlo")
        if depth < params.r:
            return Probability(1.0, 0.0, mode, 1)
        codes = np.arange(2**nbits, dtype=np.int64)
        # bit b of the code is w_i[dim] for i = -s+1 + b // n, dim = b % n
        bits = ((codes[:, None] >> np.arange(nbits)) & 1).reshape(-1, depth, n)
        scales = np.arange(-params.s + 1, j + 1)
        # offset of generation g restricted to scales g+1..j (finer bits are irrelevant)
        weights = 2.0 ** -scales.astype(float)
        contrib = bits * weights[None, :, None]
        tail = np.cumsum(contrib[:, ::-1], axis=1)[:, ::-1]  # tail[:, k] = sum over scales >= scales[k]

        def offsets(g):
            k = g + 1 - scales[0]
            return tail[:, k] if k < depth else np.zeros((len(codes), n))

        lo = offsets(j)
        bad = bad_mask(offsets, params, lo, j)
        return Probability(float(1 - bad.mean()), 0.0, mode, len(codes))
    if mode == "monte_carlo":
        if N <= 0:
            raise ValueError("monte_carlo needs N > 0")
        rng = np.random.default_rng(seed)
        good = 0
        for _ in range(N):
            grid = DyadicGrid(params, ShiftSequence.random(params, n, rng))
            good += grid.is_good(grid.cube(j, np.zeros(n, dtype=int)))
        p = good / N
        return Probability(p, math.sqrt(p * (1 - p) / N), mode, N)
    raise ValueError(f"unknown mode {mode!r}")


def draw_shifts(params: GridParams, n: int, rng: np.random.Generator,
                mu: DiscreteMeasure | None = None, max_tries: int = 1000):
    """Random shift sequence; draws putting an atom on a cube boundary are redrawn.

    Returns the sequence and the number of rejected draws.
    """
    for rejected in range(max_tries):
        shifts = ShiftSequence.random(params, n, rng)
        if mu is None or len(mu) == 0 or not DyadicGrid(params, shifts).boundary_hits(mu.points):
            return shifts, rejected
    raise RuntimeError("could not draw a shift avoiding atom boundaries")


def extend_shifts(shifts: ShiftSequence, params: GridParams, rng: np.random.Generator,
                  mu: DiscreteMeasure | None = None, max_tries: int = 1000) -> ShiftSequence:
    """Append bits so the sequence covers ``params``; existing bits are kept."""
    need = params.g_max + params.jitter_bits - shifts.last_scale
    if need <= 0:
        out = shifts
        if mu is not None and DyadicGrid(params, out).boundary_hits(mu.points):
            raise RuntimeError("existing shift puts an atom on a cube boundary")
        return out
    for _ in range(max_tries):
        extra = rng.integers(0, 2, size=(need, shifts.n), dtype=np.uint8)
        out = ShiftSequence(shifts.first_scale, np.concatenate([shifts.bits, extra]))
        if mu is None or not DyadicGrid(params, out).boundary_hits(mu.points):
            return out
    raise RuntimeError("could not extend the shift avoiding atom boundaries")


# ---------------------------------------------------------------------------
# a grid restricted to the cubes that carry mass


class TrackedGrid:
    """Positive-mass cubes of a grid at every generation, with parent links and goodness.

    Cubes of generation j are numbered 0..count-1 in lexicographic index
    order; ``labels(j)[i]`` is the number of the cube holding atom i.
    """

    def __init__(self, grid: DyadicGrid, mu: DiscreteMeasure):
        if mu.dim != grid.n:
            raise ValueError("measure and grid dimensions differ")
        self.grid = grid
        self.mu = mu
        self.params = grid.params
        self._labels: dict[int, np.ndarray] = {}
        self._index: dict[int, np.ndarray] = {}
        self._mass: dict[int, np.ndarray] = {}
        for j in self.gens:
            idx = grid.locate_indices(mu.points, j)
            uniq, lab = np.unique(idx, axis=0, return_inverse=True)
            self._index[j] = uniq
            self._labels[j] = lab.reshape(-1)
            self._mass[j] = np.bincount(self._labels[j], weights=mu.masses, minlength=len(uniq))
        self._parent = {}
        for j in self.gens[1:]:
            par = np.zeros(self.count(j), dtype=np.int64)
            par[self._labels[j]] = self._labels[j - 1]
            self._parent[j] = par
        self._lookup = {j: {tuple(row): i for i, row in enumerate(self._index[j].tolist())}
                        for j in self.gens}

    @property
    def gens(self) -> range:
        return self.params.gens

    @property
    def top(self) -> int:
        return -self.params.s

    def count(self, j: int) -> int:
        return len(self._index[j])

    def labels(self, j: int) -> np.ndarray:
        return self._labels[j]

    def masses(self, j: int) -> np.ndarray:
        return self._mass[j]

    def cube(self, j: int, label: int) -> Cube:
        return self.grid.cube(j, self._index[j][label])

    def cubes(self, j: int) -> list[Cube]:
        return [self.cube(j, i) for i in range(self.count(j))]

    def all_cubes(self) -> list[Cube]:
        return [Q for j in self.gens for Q in self.cubes(j)]

    def label_of(self, Q: Cube) -> int | None:
        return self._lookup.get(Q.gen, {}).get(tuple(Q.index))

    def mass(self, Q: Cube) -> float:
        lab = self.label_of(Q)
        return 0.0 if lab is None else float(self._mass[Q.gen][lab])

    def atoms_in(self, Q: Cube) -> np.ndarray:
        lab = self.label_of(Q)
        if lab is None:
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero(self._labels[Q.gen] == lab)

    def parents(self, j: int) -> np.ndarray:
        """Parent label of every cube of generation j > top."""
        return self._parent[j]

    def parent_label(self, j: int, label):
        return self._parent[j][label]

    def ancestor_label(self, j: int, label, k: int):
        for g in range(j, j - k, -1):
            label = self._parent[g][label]
        return label

    def ancestor_labels_of_gen(self, j: int, k: int) -> np.ndarray:
        """For every cube of generation j, the label of its k-th ancestor."""
        return self.ancestor_label(j, np.arange(self.count(j)), k)

    def lower_corners(self, j: int) -> np.ndarray:
        return self._index[j] * 2.0**-j + self.grid.offset(j)

    @cached_property
    def _good(self) -> dict[int, np.ndarray]:
        out = {}
        for j in self.gens:
            out[j] = ~bad_mask(self.grid.offset, self.params, self.lower_corners(j), j)
        return out

    def good(self, j: int) -> np.ndarray:
        return self._good[j]

    def is_good(self, Q: Cube) -> bool:
        lab = self.label_of(Q)
        if lab is None:
            return self.grid.is_good(Q)
        return bool(self._good[Q.gen][lab])
