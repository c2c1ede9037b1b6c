import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nhsquare.measure import (DiscreteMeasure, PowerLaw, Symmetrized, ball_mass, cantor,
                              default_candidates, doubling_exponent, fit_power_law,
                              lambda_from_dict, lebesgue_surrogate, point_cloud, symmetrize,
                              verify_domination)


def one_atom(x=0.5, m=1.0, dim=1):
    return DiscreteMeasure(np.full((1, dim), x), [m])


def test_ball_mass_atom_at_centre():
    assert ball_mass(one_atom(), [0.5], 0.1) == 1.0


def test_ball_is_open():
    assert ball_mass(one_atom(), [0.0], 0.5) == 0.0


def test_ball_mass_lattice_count():
    mu, _ = lebesgue_surrogate(3)
    pts = mu.points[:, 0]
    expected = np.sum((pts > 0.25) & (pts < 0.75)) / 64
    assert ball_mass(mu, [0.5], 0.25) == pytest.approx(expected, abs=0)
    assert expected == 0.5


def test_ball_mass_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        ball_mass(one_atom(), [0.5], 0.0)


@given(st.floats(0, 1), st.floats(1e-3, 1), st.floats(1e-3, 1))
def test_ball_mass_monotone_in_r(x, r1, r2):
    mu, _ = lebesgue_surrogate(2)
    lo, hi = sorted((r1, r2))
    assert ball_mass(mu, [x], lo) <= ball_mass(mu, [x], hi)


@pytest.mark.parametrize("bad", [
    dict(points=[[0.0], [0.0]], masses=[1, 1]),
    dict(points=[[0.0]], masses=[0.0]),
    dict(points=[[0.0], [1.0]], masses=[1.0]),
])
def test_measure_validation(bad):
    with pytest.raises(ValueError):
        DiscreteMeasure(**bad)


def test_measure_json_roundtrip(tmp_path):
    mu, _ = point_cloud(10, n=2, seed=3)
    mu.save(tmp_path / "m.json")
    back = DiscreteMeasure.load(tmp_path / "m.json")
    assert np.array_equal(back.points, mu.points) and np.array_equal(back.masses, mu.masses)


def test_lebesgue_example_lambda_dominates():
    mu, _ = lebesgue_surrogate(3)
    rep = verify_domination(mu, PowerLaw(2.0, 1.0, 1 / 32), g_max=12, s=2)
    assert rep.dominated and not rep.witnesses


@pytest.mark.parametrize("k,n", [(2, 1), (3, 1), (4, 1), (2, 2), (3, 2)])
def test_builtin_lebesgue_lambda_dominates(k, n):
    mu, lam = lebesgue_surrogate(k, n)
    assert len(mu) == 4**k and mu.total == pytest.approx(1.0)
    assert verify_domination(mu, lam, g_max=10, s=2).dominated


def test_lebesgue_lambda_is_2r_plus_2h_in_1d():
    _, lam = lebesgue_surrogate(3)
    assert lam(None, 0.3) == pytest.approx(0.6 + 2 / 64)


def test_point_mass_violates_vanishing_lambda():
    rep = verify_domination(one_atom(), PowerLaw(1.0, 0.5), g_max=12)
    assert not rep.dominated
    x, r, ratio = rep.witnesses[0]
    assert x == [0.5] and ratio > 1


def test_empty_measure_has_zero_ratio():
    mu = DiscreteMeasure.from_atoms(1, [])
    assert verify_domination(mu, PowerLaw(1.0, 1.0)).max_ratio == 0.0


@pytest.mark.parametrize("C,d", [(2.0, 1.0), (4.0, 2.0), (1.0, 0.0)])
def test_doubling_exponent(C, d):
    assert doubling_exponent(PowerLaw(1.0, 1.0, C_lambda=C)) == d


def test_doubling_exponent_rejects_small_constant():
    with pytest.raises(ValueError):
        doubling_exponent(PowerLaw(1.0, 1.0, C_lambda=0.5))


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0, math.log(2) / math.log(3)])
def test_pure_power_law_doubling_ratio_is_2_to_m(m):
    lam = PowerLaw(3.0, m)
    rs = 2.0 ** -np.arange(-4, 20, dtype=float)
    ratios = lam(None, 2 * rs) / lam(None, rs)
    assert np.max(ratios) == pytest.approx(2**m)
    assert lam.d == pytest.approx(m)


@given(st.floats(0.1, 5), st.floats(0, 3), st.floats(0, 1), st.floats(1e-6, 1e3))
def test_power_law_doubling_constant_valid(c, m, floor, r):
    lam = PowerLaw(c, m, floor, C_lambda=max(2.0**m, 2.0))
    assert lam(None, 2 * r) <= lam.C_lambda * lam(None, r) * (1 + 1e-12)
    assert lam(None, r) > 0


def test_symmetrize_translation_invariant():
    lam = PowerLaw(2.0, 1.0)
    cand = np.linspace(0, 1, 11)[:, None]
    L = symmetrize(lam, cand)
    assert np.allclose(L(cand, 0.3), 0.6)


def test_symmetrize_singleton():
    lam = PowerLaw(2.0, 1.0, 1 / 32)
    L = symmetrize(lam, [[0.25]])
    assert L([0.25], 0.1) == pytest.approx(lam(None, 0.1))


def test_symmetrize_needs_candidates():
    with pytest.raises(ValueError):
        Symmetrized(PowerLaw(1.0, 1.0), np.zeros((0, 1)))


class XDependent(PowerLaw):
    """c(x) r^m + floor with c varying in space, to make symmetrization non-trivial."""

    translation_invariant = False

    def __call__(self, x, r):
        x = np.asarray(x, float)
        return (1 + np.abs(x[..., 0] - 0.5)) * self.c * np.asarray(r, float) ** self.m + self.floor


def test_symmetrized_comparability_and_monotonicity():
    lam = XDependent(1.0, 1.0, 0.01)
    cand = np.linspace(0, 1, 33)[:, None]
    L = symmetrize(lam, cand)
    rs = 2.0 ** -np.arange(0, 8, dtype=float)
    for r in rs:
        vals = L(cand, r)
        close = np.abs(cand[:, None, 0] - cand[None, :, 0]) <= r
        ratio = vals[:, None] / vals[None, :]
        assert np.all(ratio[close] <= lam.C_lambda * (1 + 1e-12))
    grid = L(cand[:, None, :], rs[None, ::-1])
    assert np.all(np.diff(grid, axis=1) >= 0)
    assert np.all(L(cand, 0.1) <= lam(cand, 0.1) + 1e-15)


def test_default_candidates_cover_atoms():
    mu, _ = lebesgue_surrogate(2)
    cand = default_candidates(mu, 5)
    assert {tuple(p) for p in mu.points} <= {tuple(p) for p in cand}


def test_cantor_builtin():
    mu, lam = cantor(6)
    assert len(mu) == 64 and mu.total == pytest.approx(1.0)
    assert lam.m == pytest.approx(math.log(2) / math.log(3))
    assert verify_domination(mu, lam, g_max=14, s=2).dominated
    assert mu.points.min() > 0 and mu.points.max() < 1


@pytest.mark.parametrize("n", [1, 2])
def test_fit_power_law_dominates_point_cloud(n):
    mu, lam = point_cloud(30, n, seed=7)
    assert verify_domination(mu, lam, g_max=12, s=2).dominated


def test_fit_power_law_needs_floor_above_atoms():
    mu, _ = lebesgue_surrogate(2)
    with pytest.raises(ValueError):
        fit_power_law(mu, 1.0, 0.0)


def test_lambda_json_roundtrip():
    lam = PowerLaw(2.0, 1.0, 0.25)
    assert lambda_from_dict(lam.to_dict()) == lam
    S = symmetrize(lam, [[0.0], [1.0]])
    back = lambda_from_dict(S.to_dict())
    assert back([0.3], 0.2) == S([0.3], 0.2)
