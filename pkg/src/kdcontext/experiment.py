"""Alice/Bob experiment: simulation, Bob's analysis, Alice's postselection.

Alice sends her N pure states M times, each round in a fresh secret
order. Bob picks a (protocol, j, k) cell for every delivery and publishes
the cell and its outcome. Outcomes are drawn from the exact law of the
state actually delivered, never from the mixture.

Random streams (see :mod:`kdcontext.rng`):
  * round permutations: ``derive_rng(alice.permutation_seed, 0)``
  * Bob's cell choices: ``derive_rng(master_seed, 1)``
  * outcomes of cell c: ``derive_rng(master_seed, 2, c)``, consumed in delivery order
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .certify import Verdict, certify
from .errors import InsufficientSamples, InvalidState, LedgerMismatch
from .geometry import HULL_TOL, ExoticAnalysis, PurePositiveSet, analyze_exotic, pure_positive_search
from .hvm import EPSILON_MAX, build_hvm, verify_noncontextuality
from .kd import BasisPair, complex_from_json, complex_to_json, kd_distribution, nonpositivity, project_psd, reconstruct_state
from .protocols import (
    OUTCOMES,
    PROTOCOL_VARIABLES,
    ShotCounts,
    WeakMeasurementConfig,
    cell_distribution,
    estimate_kd,
    estimation_cells,
    hoeffding_halfwidth,
    protocol_cells,
)
from .rng import derive_rng, derive_seed

MIN_SAMPLES = 1000
BAND_FACTOR = 3.0


@dataclass(frozen=True)
class AliceConfig:
    states: np.ndarray  # (N, d) pure states as rows
    rounds: int
    basis: BasisPair
    epsilon: float
    permutation_seed: int = 0
    rho_star: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=complex))
        if states.shape[1] != self.basis.d:
            raise InvalidState(f"states have dimension {states.shape[1]}, basis has {self.basis.d}")
        norms = np.linalg.norm(states, axis=1)
        if np.any(np.abs(norms - 1) > 1e-12):
            raise InvalidState("every state must be a unit vector")
        if int(self.rounds) < 1:
            raise ValueError("rounds must be >= 1")
        WeakMeasurementConfig(self.epsilon)
        rho = np.einsum("ni,nj->ij", states, states.conj()) / len(states)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "rounds", int(self.rounds))
        object.__setattr__(self, "rho_star", rho)

    @property
    def n_states(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class BobPolicy:
    """Distribution over (protocol, j, k) cells; defaults to uniform over the full grid."""

    cells: tuple
    weights: np.ndarray

    @classmethod
    def uniform(cls, d: int, cells=None) -> "BobPolicy":
        cells = tuple(protocol_cells(d) if cells is None else (tuple(c) for c in cells))
        return cls(cells, np.full(len(cells), 1 / len(cells)))

    def descriptor(self) -> dict:
        return {"cells": [list(c) for c in self.cells], "weights": self.weights.tolist()}

    @classmethod
    def from_descriptor(cls, obj) -> "BobPolicy":
        w = np.asarray(obj["weights"], dtype=float)
        return cls(tuple(tuple(c) for c in obj["cells"]), w / w.sum())


@dataclass
class PublicRecord:
    """Bob's announcements: one entry per delivery, in delivery order.

    Stored column-wise; ``cell`` indexes ``policy.cells`` and ``outcome``
    indexes the cell's outcome table. No state identity is stored.
    """

    d: int
    n_per_round: int
    rounds: int
    policy: BobPolicy
    cell: np.ndarray
    outcome: np.ndarray
    seed_cells: np.ndarray

    def __len__(self) -> int:
        return len(self.cell)

    @property
    def round(self) -> np.ndarray:
        return np.arange(len(self)) // self.n_per_round

    @property
    def delivery(self) -> np.ndarray:
        return np.arange(len(self)) % self.n_per_round

    def _cell_array(self, pos):
        return np.array([c[pos] for c in self.policy.cells], dtype=np.int8)[self.cell]

    @property
    def protocol(self) -> np.ndarray:
        return self._cell_array(0)

    def outcome_variables(self) -> dict:
        """Columns x, y, z with 0 where the protocol does not report the variable."""
        cols = {v: np.zeros(len(self), dtype=np.int8) for v in "xyz"}
        protocol = self.protocol
        out = np.asarray(OUTCOMES, dtype=np.int8)
        for pid, names in PROTOCOL_VARIABLES.items():
            sel = protocol == pid
            if not np.any(sel):
                continue
            o = self.outcome[sel]
            if len(names) == 1:
                cols[names[0]][sel] = out[o]
            else:
                cols[names[0]][sel] = out[o // 2]
                cols[names[1]][sel] = out[o % 2]
        return cols

    def counts(self, mask=None) -> ShotCounts:
        cell, outcome = self.cell, self.outcome
        if mask is not None:
            cell, outcome = cell[mask], outcome[mask]
        n_cells = len(self.policy.cells)
        tab = np.bincount(cell.astype(np.int64) * 4 + outcome, minlength=4 * n_cells).reshape(n_cells, 4)
        out = ShotCounts(self.d)
        for i, c in enumerate(self.policy.cells):
            width = 4 if c[0] in (2, 3) else 2
            out.add(c, tab[i, :width])
        return out

    def write_jsonl(self, fh) -> None:
        header = {"type": "header", "d": self.d, "n_per_round": self.n_per_round, "rounds": self.rounds,
                  "policy": self.policy.descriptor()}
        fh.write(json.dumps(header) + "\n")
        cols = self.outcome_variables()
        rnd, dlv = self.round, self.delivery
        for i in range(len(self)):
            p, j, k = self.policy.cells[self.cell[i]]
            entry = {
                "round": int(rnd[i]), "delivery": int(dlv[i]), "protocol": int(p),
                "j": None if j < 0 else int(j), "k": None if k < 0 else int(k),
                "x": int(cols["x"][i]) or None, "y": int(cols["y"][i]) or None, "z": int(cols["z"][i]) or None,
                "seed_cell": int(self.seed_cells[self.cell[i]]),
            }
            fh.write(json.dumps(entry) + "\n")

    @classmethod
    def read_jsonl(cls, fh) -> "PublicRecord":
        header = json.loads(fh.readline())
        policy = BobPolicy.from_descriptor(header["policy"])
        index = {tuple(c): i for i, c in enumerate(policy.cells)}
        cells, outcomes = [], []
        seeds = np.zeros(len(policy.cells), dtype=np.uint64)
        for line in fh:
            e = json.loads(line)
            key = (e["protocol"], -1 if e["j"] is None else e["j"], -1 if e["k"] is None else e["k"])
            ci = index[key]
            vals = [e[v] for v in PROTOCOL_VARIABLES[e["protocol"]]]
            o = 0
            for v in vals:
                o = o * 2 + (0 if v == 1 else 1)
            cells.append(ci)
            outcomes.append(o)
            seeds[ci] = e["seed_cell"]
        return cls(header["d"], header["n_per_round"], header["rounds"], policy,
                   np.asarray(cells, dtype=np.int16), np.asarray(outcomes, dtype=np.int8), seeds)


@dataclass
class SecretLedger:
    """Alice's private map from delivery to the index of the state she sent."""

    state_index: np.ndarray
    states: np.ndarray

    def to_json(self) -> dict:
        return {"states": complex_to_json(self.states), "state_index": self.state_index.tolist()}

    @classmethod
    def from_json(cls, obj) -> "SecretLedger":
        return cls(np.asarray(obj["state_index"], dtype=np.int32), complex_from_json(obj["states"]))


def run_experiment(alice: AliceConfig, policy: BobPolicy | None, master_seed: int,
                   jobs: int = 1) -> tuple[PublicRecord, SecretLedger]:
    """Simulate all N*M deliveries. ``jobs > 1`` samples cells in threads; output is identical."""
    d = alice.basis.d
    policy = BobPolicy.uniform(d) if policy is None else policy
    n, m = alice.n_states, alice.rounds
    total = n * m

    order = np.tile(np.arange(n, dtype=np.int32), (m, 1))
    state_index = derive_rng(alice.permutation_seed, 0).permuted(order, axis=1).reshape(-1)
    cell = derive_rng(master_seed, 1).choice(len(policy.cells), size=total, p=policy.weights).astype(np.int16)
    outcome = np.zeros(total, dtype=np.int8)
    seeds = np.zeros(len(policy.cells), dtype=np.uint64)

    rhos = np.einsum("ni,nj->nij", alice.states, alice.states.conj())

    def sample_cell(ci):
        seeds[ci] = derive_seed(master_seed, 2, ci)
        idx = np.flatnonzero(cell == ci)
        if len(idx) == 0:
            return
        u = derive_rng(master_seed, 2, ci).random(len(idx))
        who = state_index[idx]
        for s in range(n):
            sel = who == s
            if not np.any(sel):
                continue
            probs = np.clip(cell_distribution(rhos[s], alice.basis, policy.cells[ci], alice.epsilon), 0, None)
            cdf = np.cumsum(probs) / probs.sum()
            outcome[idx[sel]] = np.minimum(np.searchsorted(cdf, u[sel], side="right"), len(probs) - 1)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            list(pool.map(sample_cell, range(len(policy.cells))))
    else:
        for ci in range(len(policy.cells)):
            sample_cell(ci)

    record = PublicRecord(d, n, m, policy, cell, outcome, seeds)
    return record, SecretLedger(state_index, alice.states.copy())


@dataclass
class StateEstimate:
    """Everything inferred about one (possibly mixed) source from its counts."""

    kd: object  # KDEstimate
    rho_raw: np.ndarray
    rho_hat: np.ndarray
    n_hat: float
    band: float
    f_tables: dict

    def to_json(self) -> dict:
        return {
            "q_hat": complex_to_json(self.kd.q),
            "q_halfwidth": self.kd.halfwidth.tolist(),
            "rho_hat": complex_to_json(self.rho_hat),
            "N_hat": self.n_hat,
            "noise_band": self.band,
            "f_tables": self.f_tables,
        }


def estimate_state(counts: ShotCounts, basis: BasisPair, epsilon: float, confidence: float = 0.99,
                   min_samples: int = MIN_SAMPLES) -> StateEstimate:
    """KD estimate -> reconstruction -> PSD projection -> nonpositivity, with a noise band.

    The band is BAND_FACTOR times the sum of per-entry Hoeffding half-widths.
    """
    for c in estimation_cells(basis.d):
        if counts.total(c) < min_samples:
            raise InsufficientSamples(f"cell {c} has {counts.total(c)} samples, need {min_samples}")
    est = estimate_kd(counts, basis, epsilon, confidence)
    rho_raw = reconstruct_state(est.q, basis)
    rho_hat = project_psd(rho_raw)
    n_hat = nonpositivity(kd_distribution(rho_hat, basis))
    tables = {}
    for c, cnt in sorted(counts.counts.items()):
        tot = int(cnt.sum())
        if tot == 0:
            continue
        tables[",".join(map(str, c))] = {
            "n": tot,
            "freq": (cnt / tot).tolist(),
            "halfwidth": float(hoeffding_halfwidth(tot, confidence)),
        }
    return StateEstimate(est, rho_raw, rho_hat, n_hat, BAND_FACTOR * est.nonpositivity_band(), tables)


class AnalysisVerdict:
    ALICE_VERIFIED = "alice_contextuality_verified"
    BOB_CONTEXTUAL = "bob_data_contextual"
    CANNOT_VERIFY = "cannot_verify"
    INDETERMINATE = "indeterminate"


@dataclass
class AnalysisReport:
    estimate: StateEstimate
    epsilon: float
    threshold_3d2eps: float
    certification: object
    kd_positive_within_band: bool
    hvm_built: bool
    hvm_noncontextuality_deviation: float | None
    exotic: ExoticAnalysis | None
    verdict: str
    margins: dict

    @property
    def alice_contextuality_verified(self) -> bool:
        return self.verdict == AnalysisVerdict.ALICE_VERIFIED

    def to_json(self) -> dict:
        return {
            "estimate": self.estimate.to_json(),
            "epsilon": self.epsilon,
            "threshold_3d2eps": self.threshold_3d2eps,
            "certification": self.certification.to_json(),
            "kd_positive_within_band": self.kd_positive_within_band,
            "hvm_built": self.hvm_built,
            "hvm_noncontextuality_deviation": self.hvm_noncontextuality_deviation,
            "exotic": None if self.exotic is None else self.exotic.to_json(),
            "verdict": self.verdict,
            "margins": self.margins,
        }


def bob_analyze(record: PublicRecord, basis: BasisPair, epsilon: float, *, confidence: float = 0.99,
                min_samples: int = MIN_SAMPLES, generators: PurePositiveSet | None = None,
                search_budget: int = 64, floor_restarts: int = 32, rng_seed: int = 0) -> AnalysisReport:
    est = estimate_state(record.counts(), basis, epsilon, confidence, min_samples)
    threshold = 3 * basis.d**2 * epsilon
    cert = certify(est.rho_hat, basis, epsilon)
    margins = {"N_hat": est.n_hat, "noise_band": est.band, "N_minus_threshold": est.n_hat - threshold}

    if cert.verdict == Verdict.CONTEXTUAL:
        return AnalysisReport(est, epsilon, threshold, cert, False, False, None, None, AnalysisVerdict.BOB_CONTEXTUAL, margins)

    within = est.n_hat <= est.band
    if not within:
        return AnalysisReport(est, epsilon, threshold, cert, False, False, None, None, AnalysisVerdict.INDETERMINATE, margins)

    hvm_built, nc_dev = False, None
    if epsilon < EPSILON_MAX:
        model = build_hvm(est.rho_hat, basis, epsilon, kd_positive_tol=max(est.band, 1e-10))
        nc_dev = verify_noncontextuality(model).max_deviation
        hvm_built = True

    if generators is None:
        generators = pure_positive_search(basis, search_budget, rng_seed=rng_seed)
    # rho_hat is only known up to the sampling noise, so a separation from
    # the hull counts only if it exceeds the propagated half-widths
    rho_noise = float(np.sum(est.kd.halfwidth / np.abs(basis.overlaps)))
    margins["rho_noise"] = rho_noise
    exotic = analyze_exotic(est.rho_hat, basis, generators, kd_tol=est.band, hull_tol=max(HULL_TOL, rho_noise),
                            gap_tol=max(1e-6, rho_noise), floor_restarts=floor_restarts, rng_seed=rng_seed)
    verdict = AnalysisVerdict.CANNOT_VERIFY
    if exotic.exotic and exotic.floor is not None:
        margins["delta_minus_threshold"] = exotic.floor.delta - threshold
        if exotic.floor.delta > threshold:
            verdict = AnalysisVerdict.ALICE_VERIFIED
    return AnalysisReport(est, epsilon, threshold, cert, True, hvm_built, nc_dev, exotic, verdict, margins)


@dataclass
class PostselectedState:
    index: int
    state: np.ndarray
    deliveries: int
    estimate: StateEstimate
    certification: object
    psi_minus_candidate: bool

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "state": complex_to_json(self.state),
            "deliveries": self.deliveries,
            "estimate": self.estimate.to_json(),
            "certification": self.certification.to_json(),
            "psi_minus_candidate": self.psi_minus_candidate,
        }


@dataclass
class PostselectionReport:
    per_state: list
    threshold_3d2eps: float

    def to_json(self) -> dict:
        return {"threshold_3d2eps": self.threshold_3d2eps, "per_state": [p.to_json() for p in self.per_state]}


def alice_postselect(record: PublicRecord, ledger: SecretLedger, basis: BasisPair, epsilon: float, *,
                     confidence: float = 0.99, min_samples: int = MIN_SAMPLES) -> PostselectionReport:
    """Group Bob's public outcomes by the state Alice actually sent and analyze each group.

    A state is flagged as a psi_- candidate when its estimated N exceeds
    3 d^2 epsilon by more than one noise half-band.
    """
    if len(ledger.state_index) != len(record):
        raise LedgerMismatch(f"ledger has {len(ledger.state_index)} entries, record has {len(record)}")
    if ledger.state_index.max(initial=0) >= len(ledger.states):
        raise LedgerMismatch("ledger refers to a state index it does not define")
    threshold = 3 * basis.d**2 * epsilon
    out = []
    for s in range(len(ledger.states)):
        mask = ledger.state_index == s
        est = estimate_state(record.counts(mask), basis, epsilon, confidence, min_samples)
        cert = certify(est.rho_hat, basis, epsilon)
        flagged = est.n_hat - est.band / BAND_FACTOR > threshold
        out.append(PostselectedState(s, ledger.states[s], int(mask.sum()), est, cert, bool(flagged)))
    return PostselectionReport(out, threshold)
