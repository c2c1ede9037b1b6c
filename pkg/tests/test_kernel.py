import numpy as np
import pytest
from hypothesis import given, strategies as st

from nhsquare.kernel import (KernelSample, KernelSpec, check_holder, check_size, default_sample,
                             evaluate, kernel_from_dict, kernel_matrix)
from nhsquare.measure import PowerLaw, lebesgue_surrogate

LINEAR = PowerLaw(1.0, 1.0)


@pytest.mark.parametrize("t,x,y,expected", [
    (1.0, 0.0, 0.0, 1.0),
    (1.0, 0.0, 1.0, 0.5),
    (0.5, 0.2, 0.7, 0.5 / (0.25 + 0.25)),
    (2.0, 0.0, -1.0, 2.0 / 5.0),
])
def test_canonical_closed_form(t, x, y, expected):
    # lambda(r) = r and alpha = 1 give t / (t^2 + |x-y|^2)
    k = KernelSpec("canonical", 1.0, LINEAR)
    assert evaluate(k, t, [x], [y]) == pytest.approx(expected)


def test_bump_closed_form():
    k = KernelSpec("lipschitz_bump", 1.0, PowerLaw(2.0, 1.0, 0.1))
    assert evaluate(k, 0.5, [0.0], [0.25]) == pytest.approx(0.5 / 1.1)
    assert evaluate(k, 0.5, [0.0], [0.6]) == 0.0


def test_user_table_interpolates_and_vanishes_outside():
    table = {"t": [0.5, 1.0], "dist": [0.0, 1.0], "values": [[1.0, 0.0], [2.0, 1.0]]}
    k = KernelSpec("user_table", 1.0, LINEAR, table)
    assert evaluate(k, 0.75, [0.0], [0.5]) == pytest.approx(1.0)
    assert evaluate(k, 1.0, [0.0], [0.25]) == pytest.approx(1.75)
    assert evaluate(k, 2.0, [0.0], [0.5]) == 0.0
    back = kernel_from_dict(k.to_dict(), LINEAR)
    assert back.family == "user_table"
    assert evaluate(back, 0.75, [0.0], [0.5]) == pytest.approx(1.0)


def test_kernel_validation():
    with pytest.raises(ValueError):
        KernelSpec("gaussian", 1.0, LINEAR)
    with pytest.raises(ValueError):
        KernelSpec("canonical", 0.0, LINEAR)
    with pytest.raises(ValueError):
        KernelSpec("user_table", 1.0, LINEAR)
    with pytest.raises(ValueError):
        evaluate(KernelSpec("canonical", 1.0, LINEAR), 0.0, [0.0], [0.0])


@given(st.floats(1e-3, 10), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 3))
def test_canonical_size_constant_is_one(t, x, y, alpha):
    k = KernelSpec("canonical", alpha, PowerLaw(1.0, 1.0, 0.01))
    rep = check_size(k, KernelSample(np.array([t]), np.array([[x]]), np.array([[y]])))
    assert rep.constant == pytest.approx(1.0, rel=1e-12)


@given(st.floats(1e-3, 10), st.floats(0, 2), st.floats(0, 2))
def test_canonical_decreases_with_distance(t, r1, r2):
    k = KernelSpec("canonical", 1.0, PowerLaw(1.0, 1.0, 0.01))
    lo, hi = sorted([r1, r2])
    assert evaluate(k, t, [0.0], [lo]) >= evaluate(k, t, [0.0], [hi])


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(1e-2, 4))
def test_translation_invariant_lambda_gives_symmetric_kernel(x, y, t):
    k = KernelSpec("canonical", 1.0, PowerLaw(2.0, 1.0, 0.05))
    assert evaluate(k, t, [x], [y]) == pytest.approx(evaluate(k, t, [y], [x]))


def test_kernel_matrix_layout():
    k = KernelSpec("canonical", 1.0, LINEAR)
    xs = np.array([[0.0], [0.5], [1.0]])
    ys = np.array([[0.0], [2.0]])
    S = kernel_matrix(k, 1.0, xs, ys)
    assert S.shape == (3, 2)
    assert S[1, 1] == pytest.approx(evaluate(k, 1.0, [0.5], [2.0]))


def test_holder_constant_matches_derivative_bound():
    # for t/(t^2 + r^2) the sampled constant is at most
    # sup over |rho - r| < t/2 of |d/drho s| (t^2 + r^2), which is below 1.1
    k = KernelSpec("canonical", 1.0, LINEAR)
    S = default_sample(np.array([[0.0]]), [0.25, 1.0], [0.0, 0.1, 0.5, 2.0])
    rep = check_holder(k, S)
    assert 0.3 < rep.constant < 1.1
    assert rep.samples == len(S.t)


def test_holder_rejects_far_z():
    k = KernelSpec("canonical", 1.0, LINEAR)
    S = KernelSample(np.array([1.0]), np.zeros((1, 1)), np.zeros((1, 1)), np.ones((1, 1)))
    with pytest.raises(ValueError):
        check_holder(k, S)


def test_default_sample_two_dimensions():
    S = default_sample(np.zeros((1, 2)), [1.0], [0.5])
    # 8 directions for y, 8 for z, 3 fractions
    assert len(S.t) == 8 * 8 * 3
    assert np.all(np.max(np.abs(S.y - S.z), axis=1) < 0.5)


@pytest.mark.parametrize("family", ["canonical", "lipschitz_bump"])
def test_surrogate_kernels_have_finite_constants(family):
    mu, lam = lebesgue_surrogate(3)
    k = KernelSpec(family, 1.0, lam)
    S = default_sample(mu.points[::8], 2.0 ** -np.arange(0, 9), [0.0, 1 / 64, 1 / 8, 1 / 2])
    size, holder = check_size(k, S), check_holder(k, S)
    assert 0 < size.constant <= 2.0
    assert 0 < holder.constant < np.inf


def test_canonical_on_the_diagonal():
    lam = PowerLaw(2.0, 1.0, 1 / 32)
    k = KernelSpec("canonical", 1.0, lam)
    for t in (0.1, 1.0, 3.0):
        assert evaluate(k, t, [0.4], [0.4]) == pytest.approx(1 / lam([0.4], t))


def test_canonical_worked_value():
    # lambda = 2r, t = 1, |x-y| = 1: 1 / (1*2 + 1*2)
    k = KernelSpec("canonical", 1.0, PowerLaw(2.0, 1.0))
    assert evaluate(k, 1.0, [0.0], [1.0]) == pytest.approx(0.25)


def test_bump_support_and_constants():
    k = KernelSpec("lipschitz_bump", 1.0, PowerLaw(2.0, 1.0))
    assert evaluate(k, 0.5, [0.0], [0.5]) == 0.0
    assert evaluate(k, 0.5, [0.0], [0.9]) == 0.0
    S = default_sample(np.array([[0.0]]), 2.0 ** -np.arange(-2, 8), [0.0, 1 / 16, 1 / 4, 1.0])
    size = check_size(k, S)
    assert 0 < size.constant < np.inf
    # the hat is 1/t-Lipschitz: |s(y) - s(z)| <= |y-z| / (t lam(t))
    diff = np.abs(evaluate(k, S.t, S.x, S.y) - evaluate(k, S.t, S.x, S.z))
    bound = np.max(np.abs(S.y - S.z), axis=1) / (S.t * k.lam(S.x[:, 0], S.t))
    assert np.all(diff <= bound * (1 + 1e-12))
    assert 0 < check_holder(k, S).constant < np.inf


def test_zero_table_kernel_has_zero_constants():
    table = {"t": [0.1, 1.0], "dist": [0.0, 1.0], "values": [[0.0, 0.0], [0.0, 0.0]]}
    k = KernelSpec("user_table", 1.0, LINEAR, table)
    S = default_sample(np.array([[0.0]]), [0.25, 0.5], [0.0, 0.5])
    assert check_size(k, S).constant == 0.0
    assert check_holder(k, S).constant == 0.0


def test_identical_points_contribute_nothing():
    k = KernelSpec("canonical", 1.0, LINEAR)
    S = KernelSample(np.array([1.0]), np.zeros((1, 1)), np.full((1, 1), 0.3), np.full((1, 1), 0.3))
    assert check_holder(k, S).constant == 0.0


def test_denser_sample_never_lowers_the_sup():
    k = KernelSpec("canonical", 1.0, PowerLaw(2.0, 1.0, 0.05))
    pts = np.array([[0.0], [0.3]])
    coarse = default_sample(pts, [0.5, 0.125], [0.0, 0.25])
    dense = default_sample(pts, [0.5, 0.25, 0.125, 0.0625], [0.0, 0.125, 0.25, 0.5])
    assert check_holder(k, dense).constant >= check_holder(k, coarse).constant
