"""Kernels s_t(x, y) and sampled certification of their size and Hoelder bounds."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .measure import DominatingFunction, linf

FAMILIES = ("canonical", "lipschitz_bump", "user_table")


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A kernel family with exponent ``alpha`` built on a dominating function.

    ``canonical``: t^a / (t^a lam(x,t) + |x-y|^a lam(x,|x-y|)).
    ``lipschitz_bump``: max(0, 1 - |x-y|/t) / lam(x,t).
    ``user_table``: bilinear interpolation of a table over (t, |x-y|),
    zero outside the table.
    """

    family: str
    alpha: float
    lam: DominatingFunction
    table: dict | None = None
    _interp: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.family == "user_table":
            if not self.table:
                raise ValueError("user_table kernel needs a table")
            interp = RegularGridInterpolator(
                (np.asarray(self.table["t"], float), np.asarray(self.table["dist"], float)),
                np.asarray(self.table["values"], float), bounds_error=False, fill_value=0.0)
            object.__setattr__(self, "_interp", interp)

    def __call__(self, t, x, y) -> np.ndarray:
        return evaluate(self, t, x, y)

    def to_dict(self) -> dict:
        out = {"family": self.family, "alpha": self.alpha}
        if self.table is not None:
            out["table"] = self.table
        return out


def evaluate(spec: KernelSpec, t, x, y) -> np.ndarray:
    """s_t(x, y) with broadcasting; x and y have trailing axis n."""
    t = np.asarray(t, float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    r = linf(x, y)
    if spec.family == "canonical":
        ta = t**spec.alpha
        den = ta * spec.lam(x, t) + r**spec.alpha * spec.lam(x, r)
        return ta / den
    if spec.family == "lipschitz_bump":
        return np.maximum(0.0, 1.0 - r / t) / spec.lam(x, t)
    t, r = np.broadcast_arrays(t, r)
    return spec._interp(np.stack([t, r], axis=-1))


def kernel_matrix(spec: KernelSpec, t: float, xs, ys) -> np.ndarray:
    """Matrix S[i, j] = s_t(xs[i], ys[j])."""
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    return evaluate(spec, t, xs[:, None, :], ys[None, :, :])


def size_denominator(spec: KernelSpec, t, x, y) -> np.ndarray:
    """t^a lam(x,t) + |x-y|^a lam(x,|x-y|)."""
    r = linf(x, y)
    return t**spec.alpha * spec.lam(x, t) + r**spec.alpha * spec.lam(x, r)


def _directions(n: int) -> np.ndarray:
    """Unit max-norm directions: the signed axes and the signed diagonals."""
    dirs = []
    for i in range(n):
        for sgn in (-1.0, 1.0):
            e = np.zeros(n)
            e[i] = sgn
            dirs.append(e)
    if n > 1:
        dirs.extend(np.array(c) for c in itertools.product((-1.0, 1.0), repeat=n))
    return np.array(dirs)


@dataclass
class KernelSample:
    """Sample triples (t, x, y) and, for Hoelder checks, a fourth point z."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None = None


def default_sample(points, t_values, dist_values, holder_fracs=(1 / 4, 1 / 8, 1 / 16)) -> KernelSample:
    """x from ``points``, y = x + dist * direction, z on max-norm spheres around y."""
    points = np.array(points, float, ndmin=2)
    dirs = _directions(points.shape[1])
    ts, xs, ys, zs = [], [], [], []
    for x, t, dist_, e in itertools.product(points, t_values, dist_values, dirs):
        y = x + dist_ * e
        for frac, e2 in itertools.product(holder_fracs, dirs):
            ts.append(t)
            xs.append(x)
            ys.append(y)
            zs.append(y + frac * t * e2)
    return KernelSample(np.array(ts), np.array(xs), np.array(ys), np.array(zs))


@dataclass
class ConstantReport:
    constant: float
    argmax: int | None
    samples: int


def check_size(spec: KernelSpec, sample: KernelSample) -> ConstantReport:
    """Sup of |s_t(x,y)| (t^a lam(x,t) + |x-y|^a lam(x,|x-y|)) / t^a."""
    t, x, y = sample.t, sample.x, sample.y
    vals = np.abs(evaluate(spec, t, x, y)) * size_denominator(spec, t, x, y) / t**spec.alpha
    if vals.size == 0:
        return ConstantReport(0.0, None, 0)
    k = int(np.argmax(vals))
    return ConstantReport(float(vals[k]), k, vals.size)


def check_holder(spec: KernelSpec, sample: KernelSample) -> ConstantReport:
    """Sup of |s_t(x,y) - s_t(x,z)| (t^a lam(x,t) + |x-y|^a lam(x,|x-y|)) / |y-z|^a."""
    if sample.z is None:
        raise ValueError("Hoelder check needs z samples")
    t, x, y, z = sample.t, sample.x, sample.y, sample.z
    yz = linf(y, z)
    if np.any(yz >= t / 2):
        raise ValueError("Hoelder samples must satisfy |y - z| < t/2")
    diff = np.abs(evaluate(spec, t, x, y) - evaluate(spec, t, x, z))
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(yz > 0, diff * size_denominator(spec, t, x, y) / yz**spec.alpha, 0.0)
    if vals.size == 0:
        return ConstantReport(0.0, None, 0)
    k = int(np.argmax(vals))
    return ConstantReport(float(vals[k]), k, vals.size)


def kernel_from_dict(data: dict, lam: DominatingFunction) -> KernelSpec:
    return KernelSpec(data.get("family", "canonical"), float(data.get("alpha", 1.0)), lam,
                      data.get("table"))
