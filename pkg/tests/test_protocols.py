import numpy as np
import pytest
from hypothesis import given, strategies as st

from kdcontext.errors import InsufficientSamples, InvalidEpsilon
from kdcontext.kd import mub_qubit, random_basis_pair
from kdcontext.protocols import (
    ShotCounts,
    WeakMeasurementConfig,
    closed_form_distributions,
    estimate_kd,
    estimation_cells,
    exact_distributions,
    hoeffding_halfwidth,
    kraus_distributions,
    kraus_operators,
    marginalization_check,
    outcome_table,
    protocol_cells,
    sample_protocol,
    simulate_counts,
)
from kdcontext.rng import derive_rng
from oracles import kd_by_traces, outer, pointer_circuit, random_rho

seeds = st.integers(0, 2**32 - 1)
EPSILONS = [0.05, 0.2, 0.4, np.pi / 4, np.pi / 2]
PLUS_I = np.array([1, 1j]) / np.sqrt(2)


@given(st.floats(1e-6, np.pi / 2))
def test_config_identity(eps):
    cfg = WeakMeasurementConfig(eps)
    assert 0 <= cfg.p_m <= 1 and 0 <= cfg.p_d <= 1
    assert abs(cfg.p_m**2 - 4 * cfg.p_d * (1 - cfg.p_d)) <= 1e-12


@pytest.mark.parametrize("eps", [0.0, -0.1, np.pi / 2 + 1e-9])
def test_config_rejects_out_of_range(eps):
    with pytest.raises(InvalidEpsilon):
        WeakMeasurementConfig(eps)


def test_kraus_completeness_qubit():
    kp = kraus_operators(mub_qubit(), 0, 0.2)
    for ops in (kp.x_ops, kp.y_ops):
        total = sum(a.conj().T @ a for a in ops)
        assert np.max(np.abs(total - np.eye(2))) <= 1e-14
    assert np.allclose(kp.d_op @ kp.d_op, np.eye(2)) and np.allclose(kp.d_op, kp.d_op.conj().T)


def test_kraus_limits():
    basis = mub_qubit()
    small = kraus_operators(basis, 1, 1e-9)
    for a in (*small.x_ops, *small.y_ops):
        assert np.allclose(a, np.eye(2) / np.sqrt(2), atol=1e-8)
    # the pair becomes the projective A measurement at eps = pi/4
    proj = kraus_operators(basis, 0, np.pi / 4)
    assert np.allclose(proj.x(1), basis.proj_a(0), atol=1e-15)
    assert np.allclose(proj.x(-1), np.eye(2) - basis.proj_a(0), atol=1e-15)
    # at pi/2 each operator is D_j / sqrt(2) up to phase
    full = kraus_operators(basis, 0, np.pi / 2)
    assert np.allclose(full.x(1), full.d_op / np.sqrt(2), atol=1e-15)


def test_kraus_index_check():
    with pytest.raises(IndexError):
        kraus_operators(mub_qubit(), 2, 0.1)


@given(seeds, st.sampled_from([2, 3, 4]), st.sampled_from(EPSILONS))
def test_against_pointer_circuit(seed, d, eps):
    rng = np.random.default_rng(seed)
    basis = random_basis_pair(d, rng)
    rho = random_rho(d, rng)
    j, k = rng.integers(d, size=2)
    dists = exact_distributions(rho, basis, j, k, eps)
    ref = pointer_circuit(rho, basis.a, basis.b, j, k, eps)
    for pid in range(1, 7):
        assert np.max(np.abs(dists.table(pid) - ref[pid])) <= 1e-12, pid


@given(seeds, st.sampled_from([2, 3, 4]), st.sampled_from(EPSILONS))
def test_routes_and_marginals(seed, d, eps):
    rng = np.random.default_rng(seed)
    basis = random_basis_pair(d, rng)
    rho = random_rho(d, rng)
    j, k = rng.integers(d, size=2)
    a = kraus_distributions(rho, basis, j, k, eps)
    b = closed_form_distributions(rho, basis, j, k, eps)
    for pid in range(1, 7):
        assert np.max(np.abs(a.table(pid) - b.table(pid))) <= 1e-12
        t = a.table(pid)
        assert t.min() >= -1e-15 and t.max() <= 1 + 1e-15 and abs(t.sum() - 1) <= 1e-12
    assert marginalization_check(a).max_deviation <= 1e-12
    assert np.all(a.f5 == 0.5)


def test_examples():
    basis = mub_qubit()
    for j in range(2):
        for k in range(2):
            for eps in (0.1, 0.7):
                assert abs(exact_distributions(outer(np.array([1, 0])), basis, j, k, eps).f1[0] - 0.5) < 1e-15
    dists = exact_distributions(outer(PLUS_I), basis, 0, 1, 0.2)
    # closed form with p = 1/2, Im w = 1/2, q = 1/2
    p_m, p_d = np.sin(0.4), np.sin(0.2) ** 2
    expected = 0.5 * (1 - p_d) * 0.5 + p_m * 0.5 * 0.5 + 0.5 * p_d * 0.5
    assert abs(dists.f3[0, 0] - expected) < 1e-14
    assert round(dists.f3[0, 0], 4) == 0.3474


@pytest.mark.parametrize("d", [2, 3])
def test_maximally_mixed_has_f6_equal_f1(d):
    basis = random_basis_pair(d, np.random.default_rng(d))
    dists = exact_distributions(np.eye(d) / d, basis, 0, d - 1, 0.3)
    assert np.allclose(dists.f6, dists.f1, atol=1e-15)
    assert marginalization_check(dists).passed


def test_outcome_table_order_and_json():
    dists = exact_distributions(outer(PLUS_I), mub_qubit(), 0, 1, 0.2)
    labels, probs = outcome_table(dists, 2)
    assert labels == [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    assert np.allclose(probs, dists.f2.reshape(-1))
    tables = dists.to_json()["tables"]
    assert tables["3"]["+1,+1"] == pytest.approx(dists.f3[0, 0])
    assert set(tables["5"]) == {"+1", "-1"}


def test_sampling_protocol5_uniform():
    dists = exact_distributions(outer(PLUS_I), mub_qubit(), 0, 0, 0.2)
    ys = sample_protocol(dists, 5, 17, size=100_000)
    assert abs(ys.mean()) <= 0.02


def test_sampling_determinism_and_eigenstate():
    basis = mub_qubit()
    dists = exact_distributions(outer(basis.b[0]), basis, 0, 0, 0.3)
    a = sample_protocol(dists, 2, 99, size=50)
    assert np.array_equal(a, sample_protocol(dists, 2, 99, size=50))
    assert sample_protocol(dists, 3, 5) == sample_protocol(dists, 3, 5)
    assert np.all(sample_protocol(dists, 1, 3, size=1000) == 1)


def test_sampling_frequencies_match_table():
    dists = exact_distributions(outer(PLUS_I), mub_qubit(), 0, 1, 0.3)
    draws = sample_protocol(dists, 3, derive_rng(4), size=200_000)
    labels, probs = outcome_table(dists, 3)
    freq = np.array([np.mean(np.all(draws == lab, axis=1)) for lab in labels])
    assert np.max(np.abs(freq - probs)) <= 4 * hoeffding_halfwidth(200_000, 0.99)


def test_cells():
    cells = protocol_cells(2)
    assert len(cells) == 2 + 4 + 4 + 2 + 1 + 4
    assert len(set(cells)) == len(cells)
    assert all(c[0] in (1, 2, 3) for c in estimation_cells(3))
    assert len(estimation_cells(3)) == 3 + 9 + 9


def _exact_counts(rho, basis, eps, scale=1e6):
    """Counts object whose frequencies equal the exact probabilities."""
    counts = ShotCounts(basis.d)
    for c in estimation_cells(basis.d):
        dists = exact_distributions(rho, basis, max(c[1], 0), max(c[2], 0), eps)
        counts.counts[c] = outcome_table(dists, c[0])[1] * scale
    return counts


@given(seeds, st.sampled_from([2, 3]), st.sampled_from([0.05, 0.2, 0.7, np.pi / 4]))
def test_estimator_exact_in_infinite_sample_limit(seed, d, eps):
    rng = np.random.default_rng(seed)
    basis = random_basis_pair(d, rng)
    rho = random_rho(d, rng)
    est = estimate_kd(_exact_counts(rho, basis, eps), basis, eps)
    assert np.max(np.abs(est.q - kd_by_traces(rho, basis.a, basis.b))) <= 1e-12


def test_estimator_kd_positive_state():
    basis = mub_qubit()
    rho = outer(np.array([1, 0]))
    counts = simulate_counts(rho, basis, 0.2, 20_000, master_seed=8)
    est = estimate_kd(counts, basis, 0.2)
    assert np.all(np.abs(est.q.imag) <= est.im_halfwidth)


def test_estimator_needs_every_cell():
    basis = mub_qubit()
    counts = simulate_counts(np.eye(2) / 2, basis, 0.2, 100, 1, cells=estimation_cells(2)[:-1])
    with pytest.raises(InsufficientSamples):
        estimate_kd(counts, basis, 0.2)


def test_simulate_counts_reproducible_per_cell():
    basis = mub_qubit()
    rho = outer(PLUS_I)
    full = simulate_counts(rho, basis, 0.2, 500, 42)
    part = simulate_counts(rho, basis, 0.2, 500, 42, cells=[(3, 1, 0), (1, -1, 1)])
    for c in part.counts:
        assert np.array_equal(part.get(c), full.get(c))
    assert ShotCounts.from_json(full.to_json()).counts.keys() == full.counts.keys()


def test_hoeffding_value():
    assert hoeffding_halfwidth(10**6, 0.99) == pytest.approx(np.sqrt(np.log(200) / 2e6))
