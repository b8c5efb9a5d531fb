import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asynclti import (AsyncConfig, CorrelationAccumulator, CorrelationPair, IllConditioned, LtiSystem, NoiseSpec,
                      SimulationPlan, Unidentifiable, ValidationError, accumulate_correlations, average_system,
                      benchmark_identification, compute_M_matrices, estimate_average_system, estimate_p_sigma,
                      identify, identify_correlations, simulate, steady_state_covariance)
from asynclti.fixtures import random_stable_randomized
from asynclti.sysid import MISMATCH_LABEL, P_FLOOR, SIGMA_FLOOR, lyapunov_objective, log_checkpoints

from oracles import grid_objective, lstsq_average_system


def population_pair(system, p, noise):
    Gamma = steady_state_covariance(system, p, noise)
    Abar, Bbar = average_system(system, p)
    return CorrelationPair.population(Gamma, noise.U, Abar, Bbar)


def sim(system, p, noise, steps, seed, **kw):
    return simulate(SimulationPlan(system, AsyncConfig(p), noise, steps=steps, seed=seed, **kw))


@pytest.mark.parametrize("seed", range(5))
def test_population_values_recover_truth(seed):
    system, p, noise = random_stable_randomized(np.random.default_rng(seed))
    res = identify_correlations(population_pair(system, p, noise))
    assert res.p_hat == pytest.approx(p, abs=1e-8)
    assert res.sigma_w2_hat == pytest.approx(noise.sigma_w2, abs=1e-8)
    assert np.allclose(res.A_hat, system.A, atol=1e-8)
    assert np.allclose(res.B_hat, system.B, atol=1e-8)
    assert res.diagnostics["lyapunov_residual_fro"] < 1e-8


def test_population_M_matrices_structure(sys_a1):
    p, noise = 0.5, NoiseSpec([[1.0]], 0.2)
    M1, M2 = compute_M_matrices(population_pair(sys_a1, p, noise))
    assert np.allclose(M1, M2 / p + 0.2 * np.eye(3), atol=1e-10)
    assert np.count_nonzero(M2 - np.diag(np.diag(M2))) == 0


def test_accumulator_matches_direct_sums(rng):
    X = rng.standard_normal((501, 3))
    U = rng.standard_normal((500, 2))
    corr = CorrelationAccumulator(3, 2).add(X, U).correlations()
    Z = np.hstack([X[:-1], U])
    assert np.allclose(corr.C0, Z.T @ Z / 500, rtol=1e-13, atol=1e-15)
    assert np.allclose(corr.C1, X[1:].T @ Z / 500, rtol=1e-13, atol=1e-15)
    assert corr.samples == 500 and np.array_equal(corr.C0, corr.C0.T)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 400), min_size=1, max_size=6), st.integers(0, 2 ** 32 - 1))
def test_chunked_accumulation_is_bit_identical(chunks, seed):
    r = np.random.default_rng(seed)
    T = sum(chunks)
    # widely varying magnitudes stress rounding
    X = r.standard_normal((T + 1, 2)) * 10.0 ** r.integers(-8, 8, size=(T + 1, 1))
    U = r.standard_normal((T, 1))
    whole = CorrelationAccumulator(2, 1).add(X, U).correlations()
    parts, pos = [], 0
    for c in chunks:
        parts.append(CorrelationAccumulator(2, 1).add(X[pos:pos + c + 1], U[pos:pos + c]))
        pos += c
    merged = parts[0]
    for part in reversed(parts[1:]):
        merged = part + merged
    got = merged.correlations()
    assert got.C0.tobytes() == whole.C0.tobytes() and got.C1.tobytes() == whole.C1.tobytes()
    assert got.samples == T


def test_accumulator_is_correctly_rounded():
    # 1e16 + 1 - 1e16 loses the 1 in naive float summation
    X = np.array([[1e8], [0.0], [1.0], [0.0], [1e8], [0.0]])
    U = np.zeros((5, 1))
    corr = CorrelationAccumulator(1, 1).add(X, U).correlations()
    assert corr.C0[0, 0] == (2e16 + 1) / 5


def test_burn_in_normalization(sys_a1):
    traj = sim(sys_a1, 0.5, NoiseSpec([[1.0]], 1.0), 300, 1)
    corr = accumulate_correlations(traj, burn_in=100)
    ref = CorrelationAccumulator(3, 1).update(traj, start=100).correlations()
    assert corr.samples == 200 and np.array_equal(corr.C0, ref.C0)
    with pytest.raises(ValidationError, match="burn_in"):
        accumulate_correlations(traj, burn_in=300)


def test_average_system_matches_lstsq(sys_a1):
    traj = sim(sys_a1, 0.5, NoiseSpec([[1.0]], 1.0), 20_000, 3)
    Abar, Bbar = estimate_average_system(accumulate_correlations(traj))
    ref = lstsq_average_system(traj.states, traj.inputs)
    assert np.allclose(np.hstack([Abar, Bbar]), ref, rtol=1e-9, atol=1e-10)


def test_average_system_single_step_example():
    # one transition with C0 invertible: Theta reproduces it exactly
    X = np.array([[1.0, 0.0], [0.3, -0.2]])
    U = np.array([[0.0]])
    acc = CorrelationAccumulator(2, 1).add(X, U)
    corr = acc.correlations()
    C0 = corr.C0 + np.diag([0.0, 1.0, 1.0])
    Abar, Bbar = estimate_average_system(CorrelationPair(C0, corr.C1, 1))
    assert np.allclose(Abar[:, 0], [0.3, -0.2]) and np.allclose(Abar[:, 1], 0) and np.allclose(Bbar, 0)


def test_M2_vanishes_when_theta_is_selector(rng):
    G = rng.standard_normal((4, 4))
    C0 = G @ G.T + np.eye(4)
    E = np.eye(3, 4)
    corr = CorrelationPair(C0, E @ C0, 10)
    M1, M2 = compute_M_matrices(corr)
    assert np.allclose(M2, 0, atol=1e-12) and np.allclose(M1, 0, atol=1e-10)


def test_p_sigma_zero_residual():
    rng = np.random.default_rng(4)
    M2 = np.diag(rng.uniform(0.5, 2.0, 3))
    M1 = M2 / 0.4 + 0.3 * np.eye(3)
    est = estimate_p_sigma(M1, M2, 3)
    assert est.p_hat == pytest.approx(0.4, abs=1e-12) and est.sigma_w2_hat == pytest.approx(0.3, abs=1e-12)
    assert lyapunov_objective(M1, M2, 1 / est.p_hat, est.sigma_w2_hat) < 1e-24


def test_p_sigma_unidentifiable():
    with pytest.raises(Unidentifiable) as info:
        estimate_p_sigma(np.eye(2) * 3 + np.ones((2, 2)), 0.7 * np.eye(2), 2)
    assert info.value.stage == "estimate_p_sigma"


def test_p_sigma_clamping_and_floor():
    M2 = np.diag([1.0, 2.0])
    with pytest.warns(RuntimeWarning):
        est = estimate_p_sigma(M2 / 5.0 + 0.1 * np.eye(2), M2, 2)  # p_raw = 5
    assert est.p_hat_raw == pytest.approx(5.0) and est.p_hat == 1.0
    with pytest.warns(RuntimeWarning, match="nonpositive"):
        est = estimate_p_sigma(M2 / 0.5 - 0.2 * np.eye(2), M2, 2)
    assert est.sigma_w2_hat == SIGMA_FLOOR and est.sigma_w2_raw == pytest.approx(-0.2)
    with pytest.warns(RuntimeWarning):
        est = estimate_p_sigma(-M2 + np.eye(2), M2, 2)
    assert est.p_hat == P_FLOOR


@pytest.mark.parametrize("seed", range(4))
def test_p_sigma_matches_grid_search(seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((3, 3))
    M2 = np.diag(rng.uniform(0.1, 1.0, 3))
    M1 = rng.uniform(1, 5) * M2 + rng.uniform(0, 1) * np.eye(3) + 0.1 * (G + G.T)
    inv_p = np.linspace(-5, 15, 2001)
    sig = np.linspace(-3, 4, 1401)
    a, s = np.meshgrid(inv_p, sig, indexing="ij")
    J = grid_objective(M1, M2, a, s)
    k = np.unravel_index(np.argmin(J), J.shape)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = estimate_p_sigma(M1, M2, 3)
    inv_raw = 1 / est.p_hat_raw
    s_raw = (np.trace(M1) - inv_raw * np.trace(M2)) / 3
    assert 0 < k[0] < inv_p.size - 1 and 0 < k[1] < sig.size - 1
    assert abs(inv_raw - inv_p[k[0]]) <= 0.02 and abs(s_raw - sig[k[1]]) <= 0.02
    assert lyapunov_objective(M1, M2, inv_raw, s_raw) <= J.min() + 1e-12


def test_estimation_decouples_from_input_block(sys_a1):
    # M1 and M2 only see the state rows, so rescaling U leaves (p, sigma) unchanged
    p = 0.6
    r1 = identify_correlations(population_pair(sys_a1, p, NoiseSpec([[1.0]], 0.1)))
    r2 = identify_correlations(population_pair(sys_a1, p, NoiseSpec([[9.0]], 0.1)))
    assert r1.p_hat == pytest.approx(r2.p_hat, abs=1e-9)
    assert r1.sigma_w2_hat == pytest.approx(r2.sigma_w2_hat, abs=1e-9)


def test_identify_synchronous_data(rng):
    A = rng.standard_normal((2, 2)) * 0.3
    s = LtiSystem(A, rng.standard_normal((2, 1)))
    res = identify(sim(s, 1.0, NoiseSpec([[1.0]], 0.5), 200_000, 2))
    assert res.p_hat_raw == pytest.approx(1.0, abs=0.05)
    assert np.allclose(res.A_hat, A, atol=0.02) and res.sigma_w2_hat == pytest.approx(0.5, abs=0.03)


def test_identify_randomized_converges(sys_a1):
    noise = NoiseSpec([[1.0]], 1.0)
    res = identify(sim(sys_a1, 0.5, noise, 400_000, 5), burn_in=100)
    assert res.p_hat == pytest.approx(0.5, abs=0.03)
    assert np.linalg.norm(res.A_hat - sys_a1.A) < 0.1
    assert res.sigma_w2_hat == pytest.approx(1.0, abs=0.15)
    assert res.label is None and res.diagnostics["samples"] == 400_000 - 100


def test_model_mismatch_label(sys_a1):
    traj = sim(sys_a1, 0.5, NoiseSpec([[1.0]], 0.1), 5000, 1)
    assert identify(traj, assumed_config=AsyncConfig(1.0, 0.5, 2)).label == MISMATCH_LABEL
    assert identify(traj, assumed_config=AsyncConfig(1.0, 0.5, 0)).label is None
    doc = identify(traj, assumed_config=AsyncConfig(1.0, 0.5, 2)).to_dict()
    assert doc["label"] == MISMATCH_LABEL


def test_singular_C0_and_ridge(sys_a1):
    traj = sim(sys_a1, 0.5, NoiseSpec([[1.0]], 0.1), 2000, 1, input_mode="zero")
    with pytest.raises(IllConditioned) as info:
        identify(traj)
    assert info.value.stage == "estimate_average_system"
    res = identify(traj, ridge=1e-6)
    assert res.diagnostics["ridge"] == 1e-6 and np.allclose(res.Bbar_hat, 0, atol=1e-12)


def test_result_json_roundtrip(sys_a1):
    import json
    res = identify_correlations(population_pair(sys_a1, 0.5, NoiseSpec([[1.0]], 0.1)))
    doc = json.loads(res.to_json(meta={"k": 1}))
    assert doc["meta"] == {"k": 1} and np.allclose(doc["A_hat"], res.A_hat)


def test_log_checkpoints():
    cp = log_checkpoints(1000, 1_000_000)
    assert cp[0] == 1000 and cp[-1] == 1_000_000 and len(cp) == 13


def test_small_benchmark_shapes(sys_a1):
    table = benchmark_identification(sys_a1, 0.5, NoiseSpec([[1.0]], 0.1), [500, 2000], 3, base_seed=1)
    assert table.errors.shape == (3, 2, 4) and np.all(table.n_ok == 3)
    text = table.to_csv(["x"])
    assert "T,quantity,mean_error,stderr,n_ok" in text and text.startswith("# x\n# slope A ")
    again = benchmark_identification(sys_a1, 0.5, NoiseSpec([[1.0]], 0.1), [500, 2000], 3, base_seed=1)
    assert np.array_equal(table.errors, again.errors)


def test_benchmark_rejects_unstable(sys_a1):
    from asynclti import NumericalError
    with pytest.raises(NumericalError):
        benchmark_identification(sys_a1, 1.0, NoiseSpec([[1.0]], 0.1), [100], 1)
