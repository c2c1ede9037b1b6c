"""b-adapted conditional expectations and martingale differences on a tracked grid.

Functions are arrays of values on the atoms of the measure, in atom order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyadic import Box, Cube, DyadicGrid, TrackedGrid
from .measure import DiscreteMeasure


class ZeroMassError(ValueError):
    pass


class AccretivityError(ValueError):
    """A positive-mass cube on which b integrates to zero."""

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


@dataclass(frozen=True, eq=False)
class AccretiveSystem:
    b: np.ndarray
    sup_norm: float
    accretivity: float
    witness: Cube | None

    @classmethod
    def certify(cls, b, tracked: TrackedGrid) -> "AccretiveSystem":
        """Scan every tracked positive-mass cube for min |int_Q b| / mu(Q)."""
        b = np.asarray(b, float)
        mu = tracked.mu
        if b.shape != (len(mu),):
            raise ValueError("b must have one value per atom")
        worst, witness = np.inf, None
        for j in tracked.gens:
            ratio = np.abs(np.bincount(tracked.labels(j), weights=mu.masses * b,
                                       minlength=tracked.count(j))) / tracked.masses(j)
            k = int(np.argmin(ratio))
            if ratio[k] < worst:
                worst, witness = float(ratio[k]), tracked.cube(j, k)
        if worst <= 1e-14:
            raise AccretivityError(f"b averages to zero on {witness}", witness)
        return cls(b, float(np.max(np.abs(b))), worst, witness)


def block_b(size: int, block: int = 8, amplitude: float = 0.5) -> np.ndarray:
    """1 + amplitude * s with s = +1, -1 alternating on consecutive atom blocks."""
    sign = np.where((np.arange(size) // block) % 2 == 0, 1.0, -1.0)
    return 1.0 + amplitude * sign


def avg(f, Q: Box, mu: DiscreteMeasure) -> float:
    mask = Q.contains(mu.points)
    mass = mu.masses[mask].sum()
    if mass <= 0:
        raise ZeroMassError(f"{Q} carries no mass")
    return float(np.sum(mu.masses[mask] * np.asarray(f, float)[mask]) / mass)


def _ratio(f, b, Q, mu) -> float:
    bq = avg(b, Q, mu)
    if bq == 0:
        raise AccretivityError(f"b averages to zero on {Q}", Q)
    return avg(f, Q, mu) / bq


def expectation(f, Q: Box, b, mu: DiscreteMeasure) -> np.ndarray:
    """E_Q f = <f>_Q / <b>_Q chi_Q b."""
    b = np.asarray(b, float)
    return _ratio(f, b, Q, mu) * Q.contains(mu.points) * b


def delta(f, Q: Cube, b, mu: DiscreteMeasure, grid: DyadicGrid) -> np.ndarray:
    """Delta_Q f, summing over the positive-mass children of Q."""
    b = np.asarray(b, float)
    parent = _ratio(f, b, Q, mu)
    out = np.zeros(len(mu))
    for child in grid.children(Q):
        mask = child.contains(mu.points)
        if not mask.any():
            continue
        out[mask] = (_ratio(f, b, child, mu) - parent) * b[mask]
    return out


@dataclass(eq=False)
class Decomposition:
    """f = sum of the level differences plus the top expectations.

    ``diffs[j]`` holds sum_{gen(Q)=j} Delta_Q f as one atom array (cubes of a
    generation are disjoint), for -s <= j < g_max.  Finest cubes hold at
    most one atom after truncation, so Delta_Q f vanishes there and the
    residual measures what is left.
    """

    tracked: TrackedGrid
    f: np.ndarray
    b: np.ndarray
    ratios: dict  # gen -> <f>_Q / <b>_Q per cube label
    diffs: dict
    top: np.ndarray
    residual_norm: float

    @property
    def mu(self) -> DiscreteMeasure:
        return self.tracked.mu

    @property
    def gens(self) -> range:
        return range(self.tracked.top, self.tracked.params.g_max)

    def piece(self, Q: Cube) -> np.ndarray:
        """Delta_Q f, zero outside Q."""
        out = np.zeros(len(self.mu))
        if Q.gen not in self.diffs:
            return out
        lab = self.tracked.label_of(Q)
        if lab is None:
            return out
        mask = self.tracked.labels(Q.gen) == lab
        out[mask] = self.diffs[Q.gen][mask]
        return out

    def top_piece(self, Q: Cube) -> np.ndarray:
        """E_Q f for a top cube."""
        if Q.gen != self.tracked.top:
            raise ValueError("E_Q pieces exist only for top cubes")
        out = np.zeros(len(self.mu))
        lab = self.tracked.label_of(Q)
        if lab is not None:
            mask = self.tracked.labels(Q.gen) == lab
            out[mask] = self.top[mask]
        return out

    def full_piece(self, Q: Cube) -> np.ndarray:
        """Delta_Q f, with E_Q f added when Q is a top cube."""
        out = self.piece(Q)
        if Q.gen == self.tracked.top:
            out += self.top_piece(Q)
        return out

    def full_level(self, j: int) -> np.ndarray:
        out = self.diffs.get(j, np.zeros(len(self.mu))).copy()
        if j == self.tracked.top:
            out += self.top
        return out

    @property
    def pieces(self) -> dict:
        out = {}
        for j in self.gens:
            for lab, Q in enumerate(self.tracked.cubes(j)):
                out[Q] = self.piece(Q)
        return out

    def level_norms(self, j: int, full: bool = False) -> np.ndarray:
        """||Delta_Q f|| for every cube label of generation j."""
        vals = self.full_level(j) if full else self.diffs.get(j, np.zeros(len(self.mu)))
        sq = np.bincount(self.tracked.labels(j), weights=self.mu.masses * vals**2,
                         minlength=self.tracked.count(j))
        return np.sqrt(sq)

    def top_norms(self) -> np.ndarray:
        j = self.tracked.top
        sq = np.bincount(self.tracked.labels(j), weights=self.mu.masses * self.top**2,
                         minlength=self.tracked.count(j))
        return np.sqrt(sq)

    def energy(self) -> float:
        """Sum of ||Delta_Q f||^2 plus sum of ||E_Q f||^2."""
        total = float(np.sum(self.top_norms() ** 2))
        for j in self.gens:
            total += float(np.sum(self.level_norms(j) ** 2))
        return total

    def ratio(self, Q: Cube) -> float:
        return float(self.ratios[Q.gen][self.tracked.label_of(Q)])


def decompose(f, tracked: TrackedGrid, b) -> Decomposition:
    mu = tracked.mu
    f = np.asarray(f, float)
    b = np.asarray(b, float)
    ratios, per_atom = {}, {}
    for j in tracked.gens:
        lab = tracked.labels(j)
        sf = np.bincount(lab, weights=mu.masses * f, minlength=tracked.count(j))
        sb = np.bincount(lab, weights=mu.masses * b, minlength=tracked.count(j))
        if np.any(sb == 0):
            k = int(np.flatnonzero(sb == 0)[0])
            raise AccretivityError("b averages to zero", tracked.cube(j, k))
        ratios[j] = sf / sb
        per_atom[j] = ratios[j][lab]
    diffs = {j: (per_atom[j + 1] - per_atom[j]) * b
             for j in range(tracked.top, tracked.params.g_max)}
    top = per_atom[tracked.top] * b
    recon = top + sum(diffs.values(), np.zeros(len(mu)))
    return Decomposition(tracked, f, b, ratios, diffs, top, mu.norm(f - recon))


def _check_nested(dec: Decomposition, R: Cube, k: int):
    p = dec.tracked.params
    if dec.tracked.label_of(R) is None:
        raise ZeroMassError(f"{R} carries no mass")
    if not p.r + 1 <= k <= p.s + R.gen:
        raise ValueError(f"k={k} outside [r+1, s+gen(R)] = [{p.r + 1}, {p.s + R.gen}]")


def b_coefficient(dec: Decomposition, R: Cube, k: int) -> float:
    """B_{R^(k-1)}: the constant value of Delta_{R^(k)} f / b on R^(k-1)."""
    _check_nested(dec, R, k)
    t = dec.tracked
    lab = t.label_of(R)
    child = dec.ratios[R.gen - k + 1][t.ancestor_label(R.gen, lab, k - 1)]
    if k == t.params.s + R.gen:
        return float(child)
    parent = dec.ratios[R.gen - k][t.ancestor_label(R.gen, lab, k)]
    return float(child - parent)


def delta_split(dec: Decomposition, R: Cube, k: int):
    """Three parts of Delta_{R^(k)} f: off R^(k-1), other children, and B b."""
    _check_nested(dec, R, k)
    t = dec.tracked
    lab = t.label_of(R)
    inner = t.labels(R.gen - k + 1) == t.ancestor_label(R.gen, lab, k - 1)
    outer = t.labels(R.gen - k) == t.ancestor_label(R.gen, lab, k)
    B = b_coefficient(dec, R, k)
    full = dec.full_level(R.gen - k) * outer
    part1 = -B * (~inner) * dec.b
    part2 = np.where(outer & ~inner, full, 0.0)
    part3 = B * dec.b
    return part1, part2, part3
