import io
import json

import numpy as np
import pytest

from kdcontext.errors import InsufficientSamples, InvalidState, LedgerMismatch
from kdcontext.experiment import (
    AliceConfig,
    AnalysisVerdict,
    BobPolicy,
    PublicRecord,
    SecretLedger,
    alice_postselect,
    bob_analyze,
    estimate_state,
    run_experiment,
)
from kdcontext.certify import Verdict
from kdcontext.kd import mub_qubit
from kdcontext.protocols import PROTOCOL_VARIABLES, estimation_cells, hoeffding_halfwidth, protocol_cells
from oracles import pointer_circuit

PLUS_I = np.array([1, 1j]) / np.sqrt(2)
MINUS_I = np.array([1, -1j]) / np.sqrt(2)


def oracle_table(rho, basis, cell, eps):
    p, j, k = cell
    return pointer_circuit(rho, basis.a, basis.b, max(j, 0), max(k, 0), eps)[p].reshape(-1)


def max_tv(record, rho, basis, eps):
    """Largest total-variation distance between a cell's frequencies and the oracle law, in half-widths."""
    counts = record.counts()
    worst = 0.0
    for c in record.policy.cells:
        n = counts.total(c)
        freq = counts.get(c) / n
        tv = 0.5 * np.abs(freq - oracle_table(rho, basis, c, eps)).sum()
        worst = max(worst, tv / hoeffding_halfwidth(n, 0.99))
    return worst


def small_run(states, rounds=200, seed=0, eps=0.2, **kw):
    alice = AliceConfig(np.asarray(states), rounds, mub_qubit(), eps, permutation_seed=kw.pop("perm", 5))
    return run_experiment(alice, kw.pop("policy", None), seed, **kw)


def test_alice_config_validation():
    basis = mub_qubit()
    cfg = AliceConfig([PLUS_I, MINUS_I], 3, basis, 0.1)
    assert np.allclose(cfg.rho_star, np.eye(2) / 2, atol=1e-15)
    with pytest.raises(InvalidState):
        AliceConfig([[1, 1]], 3, basis, 0.1)
    with pytest.raises(ValueError):
        AliceConfig([PLUS_I], 0, basis, 0.1)


def test_record_shape_and_permutations():
    record, ledger = small_run([PLUS_I, MINUS_I, [1, 0]], rounds=50)
    assert len(record) == 150 == len(ledger.state_index)
    per_round = ledger.state_index.reshape(50, 3)
    assert np.all(np.sort(per_round, axis=1) == np.arange(3))
    assert len({tuple(r) for r in per_round}) > 1


def test_determinism_byte_identical_and_parallel():
    def dump(rec):
        fh = io.StringIO()
        rec.write_jsonl(fh)
        return fh.getvalue()

    a, _ = small_run([PLUS_I, MINUS_I], rounds=300, seed=7)
    b, _ = small_run([PLUS_I, MINUS_I], rounds=300, seed=7)
    c, _ = small_run([PLUS_I, MINUS_I], rounds=300, seed=7, jobs=4)
    d, _ = small_run([PLUS_I, MINUS_I], rounds=300, seed=8)
    assert dump(a) == dump(b) == dump(c)
    assert dump(a) != dump(d)


def test_jsonl_schema_hides_identity_and_round_trips():
    record, _ = small_run([PLUS_I, MINUS_I], rounds=100, seed=3)
    fh = io.StringIO()
    record.write_jsonl(fh)
    lines = fh.getvalue().splitlines()
    assert json.loads(lines[0])["type"] == "header"
    assert len(lines) == len(record) + 1
    allowed = {"round", "delivery", "protocol", "j", "k", "x", "y", "z", "seed_cell"}
    for line in lines[1:]:
        e = json.loads(line)
        assert set(e) == allowed
        reported = {v for v in "xyz" if e[v] is not None}
        assert reported == set(PROTOCOL_VARIABLES[e["protocol"]])
        assert all(e[v] in (1, -1) for v in reported)
    back = PublicRecord.read_jsonl(io.StringIO(fh.getvalue()))
    assert np.array_equal(back.cell, record.cell) and np.array_equal(back.outcome, record.outcome)
    assert back.policy.cells == record.policy.cells


def test_outcome_arity_per_protocol():
    record, _ = small_run([PLUS_I], rounds=2000, seed=1)
    cols = record.outcome_variables()
    for pid, names in PROTOCOL_VARIABLES.items():
        sel = record.protocol == pid
        assert np.any(sel)
        for v in "xyz":
            assert np.all((cols[v][sel] != 0) == (v in names))


def test_single_state_matches_pure_law():
    # N=1: the mixture is the pure state itself
    basis = mub_qubit()
    record, _ = small_run([PLUS_I], rounds=170_000, seed=11)
    assert max_tv(record, np.outer(PLUS_I, PLUS_I.conj()), basis, 0.2) <= 3


def test_mixture_law_across_seeds():
    # pooled {|+i>, |-i>} data follows the law of I/2 within 3 half-widths in >= 95% of runs
    basis = mub_qubit()
    ok = 0
    for seed in range(20):
        record, _ = small_run([PLUS_I, MINUS_I], rounds=20_000, seed=seed, perm=seed)
        ok += max_tv(record, np.eye(2) / 2, basis, 0.2) <= 3
    assert ok >= 19


def test_outcomes_follow_delivered_state_not_mixture():
    basis = mub_qubit()
    record, ledger = small_run([PLUS_I, MINUS_I], rounds=40_000, seed=2)
    cell = record.policy.cells.index((3, 0, 1))
    for s, psi in enumerate([PLUS_I, MINUS_I]):
        mask = (ledger.state_index == s) & (record.cell == cell)
        freq = np.bincount(record.outcome[mask], minlength=4) / mask.sum()
        exact = oracle_table(np.outer(psi, psi.conj()), basis, (3, 0, 1), 0.2)
        assert np.max(np.abs(freq - exact)) <= 3 * hoeffding_halfwidth(mask.sum(), 0.99)


def test_insufficient_samples():
    record, ledger = small_run([PLUS_I], rounds=10 * len(protocol_cells(2)), seed=4)
    with pytest.raises(InsufficientSamples):
        bob_analyze(record, mub_qubit(), 0.2)
    with pytest.raises(InsufficientSamples):
        alice_postselect(record, ledger, mub_qubit(), 0.2)


def test_ledger_mismatch():
    record, ledger = small_run([PLUS_I, MINUS_I], rounds=10)
    with pytest.raises(LedgerMismatch):
        alice_postselect(record, SecretLedger(ledger.state_index[:-1], ledger.states), mub_qubit(), 0.2)
    bad = SecretLedger(ledger.state_index + 5, ledger.states)
    with pytest.raises(LedgerMismatch):
        alice_postselect(record, bad, mub_qubit(), 0.2)
    back = SecretLedger.from_json(json.loads(json.dumps(ledger.to_json())))
    assert np.array_equal(back.state_index, ledger.state_index)


@pytest.fixture(scope="module")
def pair_run():
    basis = mub_qubit()
    alice = AliceConfig(np.array([PLUS_I, MINUS_I]), 250_000, basis, 0.02, permutation_seed=9)
    policy = BobPolicy.uniform(2, estimation_cells(2))
    return run_experiment(alice, policy, 21)


def test_postselection_separates_states(pair_run):
    record, ledger = pair_run
    basis = mub_qubit()
    rep = alice_postselect(record, ledger, basis, 0.02)
    for s in rep.per_state:
        assert abs(s.estimate.n_hat - (np.sqrt(2) - 1)) <= 0.05
        assert s.certification.verdict == Verdict.CONTEXTUAL
        assert s.psi_minus_candidate == (s.estimate.n_hat - s.estimate.band / 3 > rep.threshold_3d2eps)
    pooled = estimate_state(record.counts(), basis, 0.02)
    assert pooled.n_hat <= pooled.band


def test_shuffled_ledger_is_flat(pair_run):
    record, ledger = pair_run
    rng = np.random.default_rng(0)
    fake = SecretLedger(rng.permutation(ledger.state_index), ledger.states)
    rep = alice_postselect(record, fake, mub_qubit(), 0.02)
    for s in rep.per_state:
        assert s.estimate.n_hat <= s.estimate.band
        assert s.certification.verdict != Verdict.CONTEXTUAL
        assert not s.psi_minus_candidate


def test_single_state_postselected_equals_pooled():
    record, ledger = small_run([PLUS_I], rounds=40_000, seed=6)
    basis = mub_qubit()
    rep = alice_postselect(record, ledger, basis, 0.2)
    pooled = estimate_state(record.counts(), basis, 0.2)
    assert np.array_equal(rep.per_state[0].estimate.rho_hat, pooled.rho_hat)
    assert rep.per_state[0].estimate.n_hat == pooled.n_hat


def test_bob_contextual_for_plus_i():
    # 10^6 shots per estimation cell
    basis = mub_qubit()
    cells = estimation_cells(2)
    alice = AliceConfig(np.array([PLUS_I]), 10**6 * len(cells), basis, 0.02)
    record, _ = run_experiment(alice, BobPolicy.uniform(2, cells), 13)
    counts = record.counts()
    assert min(counts.total(c) for c in cells) >= 0.99e6
    rep = bob_analyze(record, basis, 0.02)
    assert abs(rep.estimate.n_hat - (np.sqrt(2) - 1)) <= 0.03
    assert rep.estimate.n_hat > rep.threshold_3d2eps
    assert rep.verdict == AnalysisVerdict.BOB_CONTEXTUAL


def test_psi_minus_flag_with_enough_data():
    # the flag needs the Hoeffding half-band below N - 3 d^2 eps, about 4e6 shots per cell at eps = 0.02
    basis = mub_qubit()
    cells = estimation_cells(2)
    alice = AliceConfig(np.array([PLUS_I]), 4 * 10**6 * len(cells), basis, 0.02)
    record, ledger = run_experiment(alice, BobPolicy.uniform(2, cells), 17)
    (s,) = alice_postselect(record, ledger, basis, 0.02).per_state
    assert s.psi_minus_candidate


def test_bob_cannot_verify_maximally_mixed():
    basis = mub_qubit()
    record, _ = small_run([PLUS_I, MINUS_I], rounds=100_000, seed=3, eps=0.02)
    rep = bob_analyze(record, basis, 0.02, search_budget=8, floor_restarts=4)
    assert rep.kd_positive_within_band and rep.hvm_built
    assert rep.exotic.hull.feasible and not rep.exotic.exotic
    assert rep.verdict == AnalysisVerdict.CANNOT_VERIFY
    assert not rep.alice_contextuality_verified
    assert json.dumps(rep.to_json())
