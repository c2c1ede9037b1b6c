import json
import math

import numpy as np
import pytest

from nhsquare.dyadic import Box
from nhsquare.martingale import decompose
from nhsquare.verify import (ExperimentReport, _case_constants, _clean, averaging_identity_experiment,
                             case_diagnostics, default_f_samples, final_sums, goodness_experiment,
                             goodness_window, hypotheses_experiment, model_integral, pairwise_dist,
                             power_iteration, run_experiment, saturation_depth, schur_matrix,
                             theorem_constants)


def test_pairwise_dist_examples():
    lo = np.array([[0.0], [2.0], [0.5]])
    side = np.array([1.0, 1.0, 0.25])
    D = pairwise_dist(lo, side)
    assert D[0, 1] == 1.0 and D[1, 0] == 1.0
    assert D[0, 2] == 0.0
    assert D[1, 2] == pytest.approx(1.25)
    lo2 = np.array([[0.0, 0.0], [2.0, 3.0]])
    assert pairwise_dist(lo2, np.array([1.0, 1.0]))[0, 1] == 2.0


def test_power_iteration_matches_eigvalsh(rng):
    B = rng.random((40, 40))
    A = B + B.T
    norm, vec, _ = power_iteration(A)
    assert norm == pytest.approx(np.linalg.eigvalsh(A)[-1], rel=1e-10)
    assert np.linalg.norm(A @ vec - norm * vec) < 1e-6 * norm


def test_power_iteration_reports_failure(rng):
    B = rng.random((50, 50))
    with pytest.raises(RuntimeError):
        power_iteration(B + B.T, max_iter=2)
    assert power_iteration(np.zeros((3, 3)))[0] == 0.0


def test_schur_matrix_structure(default_setup):
    S = default_setup
    M = schur_matrix(S.mu, S.tracked, S.lam, S.params.alpha)
    assert np.array_equal(M.A, M.A.T) and np.all(M.A > 0)
    norm = power_iteration(M.A)[0]
    assert norm == pytest.approx(np.linalg.eigvalsh(M.A)[-1], rel=1e-9)
    # diagonal: l^a / ((2l)^a lam(2l)) mu(Q)
    Q = M.cubes[0]
    lam2 = float(S.lam(np.zeros(1), 2 * Q.side))
    assert M.A[0, 0] == pytest.approx(Q.side / (2 * Q.side * lam2) * S.tracked.mass(Q))


def test_goodness_window_is_enumerable(default_setup):
    p = default_setup.params
    j = goodness_window(p)
    assert j + p.s <= 20
    rep = goodness_experiment(p, j, N=2000, seed=5)
    assert 0 < rep.summary["enumerate"] < 1
    assert rep.summary["patterns"] == 2 ** (j + p.s)


def test_averaging_z_scores_are_calibrated(default_setup):
    # across independent seeds the per-generation z-scores should look standard normal
    zs = []
    for seed in range(12):
        rep = averaging_identity_experiment(default_setup, N=300, seed=1000 + seed)
        zs += [t["mean_diff"] / t["stderr"] for t in rep.trials if t["in_window"] and t["stderr"] > 0]
    zs = np.array(zs)
    assert len(zs) >= 60
    assert abs(zs.mean()) < 4 / math.sqrt(len(zs)) + 0.1
    assert 0.7 < zs.std() < 1.3
    assert np.mean(np.abs(zs) > 3) < 0.02


def test_averaging_rejects_small_N(default_setup):
    with pytest.raises(ValueError):
        averaging_identity_experiment(default_setup, N=10)


def test_pieces_of_b_give_zero_lhs(block_setup):
    # only the top expectation of b survives, and it is never smaller than or far from R
    S = block_setup
    dec = decompose(S.b, S.tracked, S.b)
    out = _case_constants(S, dec, dec)
    assert out["constants"]["lower"] == 0.0
    assert out["constants"]["separated"] == 0.0
    assert out["constants"]["comparable"] > 0


def test_nested_case_on_spread_measure(cantor_setup):
    rep = case_diagnostics(cantor_setup, refine=False)
    tr = rep.trials[0]
    assert tr["pairs"]["nested_b"] > 0 and tr["pairs"]["nested_children"] > 0
    assert tr["constants"]["nested_b"] > 0 and tr["constants"]["nested_children"] > 0
    assert tr["nested_geometry_ok"] and tr["nested_geometry_min_ratio"] >= 1
    assert tr["doubling_step_C"] <= cantor_setup.lam.C_lambda * (1 + 1e-12)


def test_comparable_count_is_bounded(default_setup, cantor_setup):
    for S in (default_setup, cantor_setup):
        rep = case_diagnostics(S, refine=False)
        # at most 3^n neighbours per generation across r + 1 generations
        assert 0 < rep.summary["max_comparable_count"] <= (S.params.r + 1) * 3**S.mu.dim


def test_final_sum_identities(any_b_setup, rng):
    S = any_b_setup
    out = final_sums(decompose(rng.standard_normal(len(S.mu)), S.tracked, S.b), S.params.alpha)
    assert out["reindexed"] == pytest.approx(out["cauchy_schwarz"], rel=1e-12)
    assert out["collapsed"] == pytest.approx(out["reindexed"], rel=1e-12)
    assert out["direct"] <= out["geometric_factor"] * out["cauchy_schwarz"] * (1 + 1e-12)
    alpha, r = S.params.alpha, S.params.r
    q = 2 ** (-alpha / 2)
    assert out["geometric_factor"] == pytest.approx(q ** (r + 1) / (1 - q))


def test_saturation_depth_not_below_g_max(default_setup, rng):
    f = rng.standard_normal(len(default_setup.mu))
    assert saturation_depth(default_setup, f) >= default_setup.params.g_max


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_model_integral(alpha):
    assert model_integral(alpha, 2.0**-30, 1.0, 64) == pytest.approx(1 / (2 * alpha), rel=1e-3)
    assert model_integral(alpha, 2.0**-30, 0.5, 8) == pytest.approx(model_integral(alpha, 2.0**-31, 1.0, 8))


def test_theorem_constants_include_b(default_setup):
    S = default_setup
    F = default_f_samples(S, 3)
    out = theorem_constants(S, F)
    assert out["G"] >= out["G_without_b"] > 0
    assert out["T"] > 0 and out["T_indicator"] > 0
    assert out["samples"] == F.shape[1]


def test_doubled_samples_extend_base(default_setup):
    a = default_f_samples(default_setup, 3)
    b = default_f_samples(default_setup, 3, double=True)
    assert b.shape[1] == 2 * a.shape[1] - 1
    # gauss, boxes and spikes keep their first members
    assert np.array_equal(a[:, :3], b[:, :3])
    assert np.array_equal(a[:, 3:6], b[:, 6:9])


def test_hypotheses_pass_on_builtins(default_setup, cantor_setup):
    for S in (default_setup, cantor_setup):
        rep = hypotheses_experiment(S)
        assert rep.passed
        assert rep.summary["C_size"] == pytest.approx(1.0)


def test_report_json_is_clean():
    rep = ExperimentReport("x", {"a": np.float64(1.5)}, [{"v": np.inf, "cube": Box((0.0,), 1.0)}],
                           {"ok": np.bool_(True), "n": np.int64(3)}, True, {})
    data = json.loads(json.dumps(rep.to_dict()))
    assert data["trials"][0]["v"] == "inf"
    assert data["trials"][0]["cube"] == {"lo": [0.0], "side": 1.0}
    assert data["pass"] is True and data["schema_version"] == 1
    assert _clean((1, np.arange(2))) == [1, [0, 1]]


def test_unknown_experiment(default_setup):
    with pytest.raises(KeyError):
        run_experiment("nope", default_setup)


def test_refined_setup_keeps_grid(default_setup):
    fine = default_setup.refined(2)
    assert fine.params.g_max == default_setup.params.g_max + 2
    for j in default_setup.params.gens:
        for Q in default_setup.tracked.cubes(j)[:4]:
            assert fine.tracked.label_of(fine.grid.cube(j, Q.index)) is not None


def test_schur_single_cube_and_rayleigh(default_setup):
    S = default_setup
    M = schur_matrix(S.mu, S.tracked, S.lam, S.params.alpha)
    one = schur_matrix(S.mu, S.tracked, S.lam, S.params.alpha, cubes=M.cubes[:1])
    assert power_iteration(one.A)[0] == pytest.approx(one.A[0, 0])
    norm = power_iteration(M.A)[0]
    e = np.zeros(len(M.cubes))
    e[5] = 1.0
    assert e @ M.A @ e == M.A[5, 5] <= norm


def test_schur_entries_decay_with_distance(default_setup):
    S = default_setup
    Q = Box((0.0,), 1 / 16)
    far = [Box((x,), 1 / 16) for x in (0.25, 0.5, 1.0, 4.0)]
    M = schur_matrix(S.mu, S.tracked, S.lam, S.params.alpha, cubes=[Q] + far)
    assert np.all(np.diff(M.A[0, 1:]) <= 0)


def test_averaging_zero_function(default_setup):
    rep = averaging_identity_experiment(default_setup, f=np.zeros(len(default_setup.mu)), N=100)
    assert all(t["mean_good"] == 0 and t["all"] == 0 for t in rep.trials)
    assert rep.passed


def test_zero_kernel_gives_zero_constants(default_setup):
    from nhsquare.kernel import KernelSpec
    from nhsquare.verify import Setup
    S = default_setup
    table = {"t": [1e-6, 1e3], "dist": [0.0, 10.0], "values": [[0.0, 0.0], [0.0, 0.0]]}
    Z = Setup(S.mu, S.lam, KernelSpec("user_table", 1.0, S.lam, table), S.params, S.shifts,
              S.quad, S.b, S.seed)
    out = theorem_constants(Z, default_f_samples(Z, 2))
    assert out["T"] == 0 and out["G"] == 0


def test_spike_matches_one_dimensional_integral(default_setup):
    from scipy.integrate import quad
    from nhsquare.sqfn import QuadratureSpec, global_norm
    S = default_setup
    i0 = 21
    spike = np.zeros(len(S.mu))
    spike[i0] = 1.0
    y0, m0 = S.mu.points[i0], S.mu.masses[i0]
    lo, hi = np.log(S.params.t_floor), np.log(2.0**S.params.s)
    ref = 0.0
    for x, mx in zip(S.mu.points, S.mu.masses):
        val, _ = quad(lambda u: (S.kernel(np.exp(u), x, y0) * m0) ** 2, lo, hi, limit=200,
                      points=np.log(2.0) * np.arange(-S.params.g_max - 1, S.params.s + 1))
        ref += mx * val
    got = global_norm(S.kernel, spike, S.mu, S.tracked, QuadratureSpec(64)).total
    assert got == pytest.approx(ref, rel=1e-3)


def test_theorem_constant_is_scale_free(default_setup):
    F = default_f_samples(default_setup, 2)
    a = theorem_constants(default_setup, F)
    b = theorem_constants(default_setup, 2 * F)
    assert b["G"] == pytest.approx(a["G"], rel=1e-12)


def test_necessity_when_3q_holds_everything(default_setup):
    from nhsquare.verify import necessity_experiment
    rep = necessity_experiment(default_setup, corpus=[Box((0.25,), 0.5)])
    assert rep.trials[0]["decay_constant"] == 0 and rep.trials[0]["energy_constant"] == 0


def test_final_sum_of_b_only_sees_the_top(block_setup):
    S = block_setup
    p = S.params
    dec = decompose(S.b, S.tracked, S.b)
    out = final_sums(dec, p.alpha)
    top = float(np.sum(dec.top_norms() ** 2))
    w = sum(2.0 ** (-p.alpha * k / 2) for k in range(p.r + 1, p.s + p.g_max + 1))
    assert out["collapsed"] == pytest.approx(w * top, rel=1e-12)
