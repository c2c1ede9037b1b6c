"""theta_t and square-function quadrature over Whitney regions and Carleson boxes.

x-integrals are exact atom sums; t-integrals against dt/t use the
trapezoid rule in u = log t with K intervals per octave.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec

from .dyadic import Box, Region, TrackedGrid, carleson_box, whitney
from .kernel import KernelSpec, kernel_matrix
from .measure import DiscreteMeasure


@dataclass(frozen=True)
class QuadratureSpec:
    K: int = 8
    rule: str = "log_trapezoid"

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("need at least 2 nodes per octave")
        if self.rule != "log_trapezoid":
            raise ValueError(f"unknown rule {self.rule!r}")


def log_trapezoid(t_lo: float, t_hi: float, K: int):
    """Nodes and weights with sum(w * g(t)) ~ integral of g(t) dt/t over (t_lo, t_hi)."""
    if not 0 < t_lo < t_hi:
        raise ValueError("empty t-interval")
    octaves = math.log2(t_hi / t_lo)
    nint = max(1, math.ceil(K * octaves - 1e-9))
    frac = np.arange(nint + 1) / nint
    t = t_lo * 2.0 ** (octaves * frac)
    t[-1] = t_hi
    h = octaves * math.log(2) / nint
    w = np.full(nint + 1, h)
    w[0] = w[-1] = h / 2
    return t, w


def _as_matrix(f, N: int) -> tuple[np.ndarray, bool]:
    f = np.asarray(f, float)
    single = f.ndim == 1
    F = f[:, None] if single else f
    if F.shape[0] != N:
        raise ValueError("function must have one value per atom")
    return F, single


def theta(kernel: KernelSpec, f, mu: DiscreteMeasure, x, t) -> np.ndarray:
    """theta_t f(x) = sum_y s_t(x, y) f(y) mu({y}); exact for atomic mu.

    Returns shape (len(t), len(x)) for a single function, with a trailing
    function axis when ``f`` is a matrix (atoms x functions).
    """
    F, single = _as_matrix(f, len(mu))
    xs = np.array(x, float, ndmin=2)
    ts = np.atleast_1d(np.asarray(t, float))
    if np.any(ts <= 0):
        raise ValueError("t must be positive")
    MF = mu.masses[:, None] * F
    out = np.stack([kernel_matrix(kernel, tt, xs, mu.points) @ MF for tt in ts])
    return out[..., 0] if single else out


def region_integral(kernel: KernelSpec, f, mu: DiscreteMeasure, region: Region,
                    quad: QuadratureSpec = QuadratureSpec()) -> np.ndarray | float:
    """Integral of |theta_t f(x)|^2 dmu(x) dt/t over the region."""
    F, single = _as_matrix(f, len(mu))
    inside = np.flatnonzero(region.cube.contains(mu.points))
    if inside.size == 0:
        return 0.0 if single else np.zeros(F.shape[1])
    ts, ws = log_trapezoid(region.t_lo, region.t_hi, quad.K)
    th = theta(kernel, F, mu, mu.points[inside], ts)  # (T, m, F)
    vals = np.einsum("t,m,tmf->f", ws, mu.masses[inside], th**2)
    return float(vals[0]) if single else vals


@dataclass
class OctaveTable:
    """values[j - top, i, f] = integral over t in (2^-j-1, 2^-j] of |theta_t f(x_i)|^2 dt/t."""

    top: int
    g_max: int
    values: np.ndarray

    def level(self, j: int) -> np.ndarray:
        return self.values[j - self.top]


def octave_table(kernel: KernelSpec, f, mu: DiscreteMeasure, top: int, g_max: int,
                 quad: QuadratureSpec = QuadratureSpec()) -> OctaveTable:
    F, _ = _as_matrix(f, len(mu))
    G = g_max - top + 1
    K = quad.K
    h = math.log(2) / K
    t_floor = 2.0 ** (-g_max - 1)
    MF = mu.masses[:, None] * F
    values = np.zeros((G, len(mu), F.shape[1]))
    for i in range(K * G + 1):
        t = t_floor * 2.0 ** (i / K)
        sq = (kernel_matrix(kernel, t, mu.points, mu.points) @ MF) ** 2
        # node i closes octave (i-1)//K and opens octave i//K, counted from the finest
        q, rem = divmod(i, K)
        if rem == 0:
            if q >= 1:
                values[G - q] += h / 2 * sq
            if q < G:
                values[G - 1 - q] += h / 2 * sq
        else:
            values[G - 1 - q] += h * sq
    return OctaveTable(top, g_max, values)


@dataclass
class SquareFunctionReport:
    per_region: dict
    total: float
    params: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for reg, val in self.per_region.items():
            Q = reg.cube
            out.append({"generation": getattr(Q, "gen", None),
                        "index": " ".join(map(str, getattr(Q, "index", ()))),
                        "kind": reg.kind, "t_lo": reg.t_lo, "t_hi": reg.t_hi, "value": val})
        return out


def whitney_values(table: OctaveTable, tracked: TrackedGrid, column: int = 0) -> dict:
    """Whitney-region integral for every tracked cube label, per generation."""
    mu = tracked.mu
    return {j: np.bincount(tracked.labels(j), weights=mu.masses * table.level(j)[:, column],
                           minlength=tracked.count(j))
            for j in tracked.gens}


def global_norm(kernel: KernelSpec, f, mu: DiscreteMeasure, tracked: TrackedGrid,
                quad: QuadratureSpec = QuadratureSpec(), good_only: bool = False,
                table: OctaveTable | None = None) -> SquareFunctionReport:
    """Sum of Whitney-region integrals over the tracked grid (good cubes only if asked)."""
    if table is None:
        table = octave_table(kernel, f, mu, tracked.top, tracked.params.g_max, quad)
    per_region, total = {}, 0.0
    for j, vals in whitney_values(table, tracked).items():
        good = tracked.good(j)
        for lab, v in enumerate(vals):
            if good_only and not good[lab]:
                continue
            per_region[whitney(tracked.cube(j, lab))] = float(v)
            total += float(v)
    return SquareFunctionReport(per_region, total,
                                {"K": quad.K, "good_only": good_only, **tracked.params.to_dict()})


def slab_oracle(kernel: KernelSpec, f, mu: DiscreteMeasure, t_lo: float, t_hi: float,
                epsrel: float = 1e-10) -> float:
    """Integral of |theta_t f|^2 dmu dt/t over R^n x (t_lo, t_hi) by adaptive quadrature.

    No grid is involved, so it checks the Whitney tiling.
    """
    f = np.asarray(f, float)
    mf = mu.masses * f

    def integrand(u):
        th = kernel_matrix(kernel, math.exp(u), mu.points, mu.points) @ mf
        return np.sum(mu.masses * th**2)

    val, _ = quad_vec(integrand, math.log(t_lo), math.log(t_hi), epsrel=epsrel,
                      points=np.log(2.0) * np.arange(math.ceil(math.log2(t_lo)),
                                                     math.floor(math.log2(t_hi)) + 1))
    return float(val)


# ---------------------------------------------------------------------------
# testing conditions


def grid_carleson_values(table: OctaveTable, tracked: TrackedGrid, column: int = 0) -> dict:
    """Carleson-box integral for every tracked cube: sum of Whitney slabs below it."""
    mu = tracked.mu
    cum = np.cumsum(table.values[::-1, :, column], axis=0)[::-1]  # cum[j-top] = sum over j' >= j
    return {j: np.bincount(tracked.labels(j), weights=mu.masses * cum[j - tracked.top],
                           minlength=tracked.count(j))
            for j in tracked.gens}


def random_boxes(mu: DiscreteMeasure, rng: np.random.Generator, count: int,
                 side_lo: float, side_hi: float) -> list[Box]:
    """Cubes with log-uniform side, each containing a randomly chosen atom."""
    out = []
    for _ in range(count):
        side = float(2.0 ** rng.uniform(math.log2(side_lo), math.log2(side_hi)))
        atom = mu.points[rng.integers(len(mu))]
        center = atom + rng.uniform(-side / 2, side / 2, size=mu.dim) * (1 - 1e-9)
        out.append(Box(tuple((center - side / 2).tolist()), side))
    return out


def default_corpus(tracked: TrackedGrid, rng: np.random.Generator, n_random: int = 100) -> list:
    p = tracked.params
    boxes = random_boxes(tracked.mu, rng, n_random, 4 * 2.0**-p.g_max, 2.0 ** min(p.s, 0))
    return tracked.all_cubes() + boxes


@dataclass
class TestingReport:
    value: float
    argmax: Box | None
    ratios: list  # (cube, integral, denominator)


def testing_constant(kernel: KernelSpec, b, mu: DiscreteMeasure, tracked: TrackedGrid,
                     quad: QuadratureSpec = QuadratureSpec(), kappa: float = 3.0,
                     corpus: list | None = None, table: OctaveTable | None = None) -> TestingReport:
    """sup over the corpus of the Carleson-box integral of theta b over mu(kappa Q)."""
    if corpus is not None and len(corpus) == 0:
        raise ValueError("empty cube corpus")
    if corpus is None:
        corpus = tracked.all_cubes()
    if table is None:
        table = octave_table(kernel, b, mu, tracked.top, tracked.params.g_max, quad)
    grid_vals = grid_carleson_values(table, tracked)
    t_floor = tracked.params.t_floor
    best, arg, rows = 0.0, None, []
    for Q in corpus:
        den = float(mu.masses[Q.dilate(kappa).contains(mu.points)].sum())
        if den <= 0 or Q.side <= t_floor:
            continue
        lab = tracked.label_of(Q) if hasattr(Q, "gen") else None
        if lab is not None:
            num = float(grid_vals[Q.gen][lab])
        else:
            num = region_integral(kernel, b, mu, carleson_box(Q, t_floor), quad)
        rows.append((Q, num, den))
        if num / den > best or arg is None:
            best, arg = max(best, num / den), Q
    return TestingReport(best, arg, rows)


def indicator_carleson_values(kernel: KernelSpec, mu: DiscreteMeasure, tracked: TrackedGrid,
                              quad: QuadratureSpec = QuadratureSpec()) -> dict:
    """Carleson-box integral of theta(chi_Q) over every tracked cube Q."""
    p = tracked.params
    K = quad.K
    h = math.log(2) / K
    G = p.g_max - tracked.top + 1
    out = {j: np.zeros(tracked.count(j)) for j in tracked.gens}
    same = {j: tracked.labels(j)[:, None] == tracked.labels(j)[None, :] for j in tracked.gens}
    for i in range(K * G + 1):
        t = p.t_floor * 2.0 ** (i / K)
        S = kernel_matrix(kernel, t, mu.points, mu.points) * mu.masses[None, :]
        for j in tracked.gens:
            end = K * (p.g_max + 1 - j)
            if i > end:
                continue
            w = h / 2 if i in (0, end) else h
            th = np.sum(S * same[j], axis=1)
            out[j] += w * np.bincount(tracked.labels(j), weights=mu.masses * th**2,
                                      minlength=tracked.count(j))
    return out


def indicator_testing_constant(kernel: KernelSpec, mu: DiscreteMeasure, tracked: TrackedGrid,
                               quad: QuadratureSpec = QuadratureSpec(),
                               corpus: list | None = None) -> TestingReport:
    """sup over the corpus of the Carleson-box integral of theta(chi_Q) over mu(Q)."""
    if corpus is None:
        corpus = tracked.all_cubes()
    grid_vals = None
    best, arg, rows = 0.0, None, []
    for Q in corpus:
        mask = Q.contains(mu.points)
        den = float(mu.masses[mask].sum())
        if den <= 0 or Q.side <= tracked.params.t_floor:
            continue
        lab = tracked.label_of(Q) if hasattr(Q, "gen") else None
        if lab is not None:
            if grid_vals is None:
                grid_vals = indicator_carleson_values(kernel, mu, tracked, quad)
            num = float(grid_vals[Q.gen][lab])
        else:
            num = region_integral(kernel, mask.astype(float), mu,
                                  carleson_box(Q, tracked.params.t_floor), quad)
        rows.append((Q, num, den))
        if num / den > best or arg is None:
            best, arg = max(best, num / den), Q
    return TestingReport(best, arg, rows)


# ---------------------------------------------------------------------------
# Carleson sequence


@dataclass
class CarlesonSequence:
    """a[g][label] = sum of Whitney integrals of theta b over good R with R^(r) = S."""

    a: dict
    C_carl: float
    argmax: Box | None
    subtree: dict  # g -> sum of a_S over S inside each cube

    def total(self) -> float:
        return float(sum(v.sum() for v in self.a.values()))


def carleson_sequence(kernel: KernelSpec, b, mu: DiscreteMeasure, tracked: TrackedGrid,
                      quad: QuadratureSpec = QuadratureSpec(),
                      table: OctaveTable | None = None) -> CarlesonSequence:
    p = tracked.params
    if table is None:
        table = octave_table(kernel, b, mu, tracked.top, p.g_max, quad)
    W = whitney_values(table, tracked)
    a = {g: np.zeros(tracked.count(g)) for g in tracked.gens}
    for j in range(tracked.top + p.r, p.g_max + 1):
        anc = tracked.ancestor_labels_of_gen(j, p.r)
        a[j - p.r] += np.bincount(anc, weights=W[j] * tracked.good(j), minlength=tracked.count(j - p.r))
    subtree = {p.g_max: a[p.g_max].copy()}
    for g in range(p.g_max - 1, tracked.top - 1, -1):
        subtree[g] = a[g] + np.bincount(tracked.parents(g + 1), weights=subtree[g + 1],
                                        minlength=tracked.count(g))
    best, arg = 0.0, None
    for g in tracked.gens:
        ratio = subtree[g] / tracked.masses(g)
        k = int(np.argmax(ratio))
        if ratio[k] > best or arg is None:
            best, arg = max(best, float(ratio[k])), tracked.cube(g, k)
    return CarlesonSequence(a, best, arg, subtree)


@dataclass
class EmbeddingReport:
    C_emb: float
    per_function: list
    flagged: bool


def carleson_embedding_check(seq: CarlesonSequence, tracked: TrackedGrid, f_samples,
                             bound: float = 4.0) -> EmbeddingReport:
    """max over f of sum_S |<f>_S|^2 a_S / (C_carl ||f||^2)."""
    mu = tracked.mu
    F, _ = _as_matrix(f_samples, len(mu))
    per = []
    for col in F.T:
        num = 0.0
        for g in tracked.gens:
            avg = np.bincount(tracked.labels(g), weights=mu.masses * col,
                              minlength=tracked.count(g)) / tracked.masses(g)
            num += float(np.sum(avg**2 * seq.a[g]))
        nrm = mu.norm(col) ** 2
        if seq.C_carl == 0:
            assert num == 0, "zero Carleson constant with a nonzero embedding sum"
            per.append(0.0)
        else:
            per.append(num / (seq.C_carl * nrm) if nrm > 0 else 0.0)
    c = max(per) if per else 0.0
    return EmbeddingReport(c, per, c > bound)
