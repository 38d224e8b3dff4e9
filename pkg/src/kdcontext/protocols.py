"""The six measurement protocols: exact outcome laws, sampling, estimation.

Outcomes are encoded as +1/-1 everywhere. Probability tables index an
outcome by position in ``OUTCOMES``: index 0 is +1, index 1 is -1, so
``f2[0, 1]`` is f2(x=+1, z=-1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientSamples, InternalInconsistency, InvalidEpsilon
from .kd import BasisPair, kd_distribution
from .rng import derive_rng

OUTCOMES = (1, -1)
ROUTE_TOL = 1e-10

# Outcome variables reported by each protocol, in tuple order.
PROTOCOL_VARIABLES = {1: ("z",), 2: ("x", "z"), 3: ("y", "z"), 4: ("x",), 5: ("y",), 6: ("z",)}


def _idx(s: int) -> int:
    return 0 if s == 1 else 1


@dataclass(frozen=True)
class WeakMeasurementConfig:
    epsilon: float

    def __post_init__(self):
        eps = float(self.epsilon)
        if not (0 < eps <= np.pi / 2):
            raise InvalidEpsilon(f"epsilon must lie in (0, pi/2], got {eps}")
        object.__setattr__(self, "epsilon", eps)

    @property
    def p_m(self) -> float:
        return float(np.sin(2 * self.epsilon))

    @property
    def p_d(self) -> float:
        return float(np.sin(self.epsilon) ** 2)


@dataclass(frozen=True)
class KrausPair:
    """X- and Y-pointer Kraus operators for one projector, indexed by outcome position."""

    x_ops: np.ndarray  # (2, d, d)
    y_ops: np.ndarray  # (2, d, d)
    d_op: np.ndarray

    def x(self, outcome: int) -> np.ndarray:
        return self.x_ops[_idx(outcome)]

    def y(self, outcome: int) -> np.ndarray:
        return self.y_ops[_idx(outcome)]


def _check_index(i: int, d: int, name: str) -> int:
    if not (0 <= int(i) < d):
        raise IndexError(f"{name}={i} out of range for d={d}")
    return int(i)


def kraus_operators(basis: BasisPair, j: int, epsilon: float) -> KrausPair:
    j = _check_index(j, basis.d, "j")
    eps = WeakMeasurementConfig(epsilon).epsilon
    eye = np.eye(basis.d, dtype=complex)
    d_op = 2 * basis.proj_a(j) - eye
    c, s = np.cos(eps), np.sin(eps)
    x_ops = np.stack([(c * eye + x * s * d_op) / np.sqrt(2) for x in OUTCOMES])
    y_ops = np.stack([(c * eye - 1j * y * s * d_op) / np.sqrt(2) for y in OUTCOMES])
    return KrausPair(x_ops, y_ops, d_op)


@dataclass(frozen=True)
class ProtocolDistributions:
    """Exact outcome tables of protocols 1-6 for one (rho, j, k, epsilon).

    ``p[z]`` is Tr(P^{B,z}_k rho) and ``q[z]`` is Tr(P^{B,z}_k D_j rho D_j^+).
    """

    j: int
    k: int
    epsilon: float
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    f4: np.ndarray
    f5: np.ndarray
    f6: np.ndarray
    p: np.ndarray
    q: np.ndarray

    def table(self, protocol: int) -> np.ndarray:
        return {1: self.f1, 2: self.f2, 3: self.f3, 4: self.f4, 5: self.f5, 6: self.f6}[protocol]

    def to_json(self) -> dict:
        out = {"j": self.j, "k": self.k, "epsilon": self.epsilon, "tables": {}}
        for pid in range(1, 7):
            labels, probs = outcome_table(self, pid)
            out["tables"][str(pid)] = {",".join(f"{v:+d}" for v in lab): float(pr) for lab, pr in zip(labels, probs)}
        return out


def _b_projectors(basis: BasisPair, k: int) -> np.ndarray:
    pk = basis.proj_b(k)
    return np.stack([pk, np.eye(basis.d) - pk])


def _kraus_route(rho, basis, j, k, eps):
    cfg = WeakMeasurementConfig(eps)
    kp = kraus_operators(basis, j, eps)
    pz = _b_projectors(basis, k)
    pa = np.stack([basis.proj_a(j), np.eye(basis.d) - basis.proj_a(j)])

    def tr(m):
        return np.trace(m).real

    f1 = np.array([tr(pz[z] @ rho) for z in range(2)])
    f2 = np.array([[tr(pz[z] @ kp.x_ops[x] @ rho @ kp.x_ops[x].conj().T) for z in range(2)] for x in range(2)])
    f3 = np.array([[tr(pz[z] @ kp.y_ops[y] @ rho @ kp.y_ops[y].conj().T) for z in range(2)] for y in range(2)])
    # protocol 4: coin with probability p_m of a projective A_j measurement
    f4 = np.array([(1 - cfg.p_m) / 2 + cfg.p_m * tr(pa[x] @ rho) for x in range(2)])
    f5 = np.array([0.5, 0.5])
    # protocol 6: D_j channel with probability p_d, then the B_k measurement
    rho6 = (1 - cfg.p_d) * rho + cfg.p_d * kp.d_op @ rho @ kp.d_op.conj().T
    f6 = np.array([tr(pz[z] @ rho6) for z in range(2)])
    return f1, f2, f3, f4, f5, f6


def _closed_route(rho, basis, j, k, eps):
    cfg = WeakMeasurementConfig(eps)
    p_m, p_d = cfg.p_m, cfg.p_d
    qkd = kd_distribution(rho, basis).q
    d_op = 2 * basis.proj_a(j) - np.eye(basis.d)
    p_plus = qkd.sum(axis=0).real
    p = np.array([p_plus[k], 1 - p_plus[k]])
    dr = d_op @ rho @ d_op.conj().T
    q_plus = np.real(basis.b[k].conj() @ dr @ basis.b[k])
    q = np.array([q_plus, 1 - q_plus])
    # p^z w^z_{j,k}: the KD mass of row j inside the z-th B outcome
    pw = np.array([qkd[j, k], qkd[j].sum() - qkd[j, k]])
    a_prob = qkd[j].sum().real
    pa = np.array([a_prob, 1 - a_prob])

    f1 = p.copy()
    f2 = np.array(
        [[0.5 * (1 - p_d) * p[z] + 0.5 * x * p_m * (2 * pw[z].real - p[z]) + 0.5 * p_d * q[z] for z in range(2)] for x in OUTCOMES]
    )
    f3 = np.array([[0.5 * (1 - p_d) * p[z] + y * p_m * pw[z].imag + 0.5 * p_d * q[z] for z in range(2)] for y in OUTCOMES])
    f4 = np.array([(1 - p_m) / 2 + p_m * pa[x] for x in range(2)])
    f5 = np.array([0.5, 0.5])
    f6 = (1 - p_d) * p + p_d * q
    return (f1, f2, f3, f4, f5, f6), p, q


def exact_distributions(rho, basis: BasisPair, j: int, k: int, epsilon: float) -> ProtocolDistributions:
    """Outcome laws of protocols 1-6, evaluated by Kraus algebra and by closed form.

    Raises InternalInconsistency if the two evaluations differ by more than 1e-10.
    """
    rho = np.asarray(rho, dtype=complex)
    j = _check_index(j, basis.d, "j")
    k = _check_index(k, basis.d, "k")
    kraus = _kraus_route(rho, basis, j, k, epsilon)
    closed, p, q = _closed_route(rho, basis, j, k, epsilon)
    names = ("f1", "f2", "f3", "f4", "f5", "f6")
    for name, a, b in zip(names, kraus, closed):
        dev = np.max(np.abs(a - b))
        if dev > ROUTE_TOL:
            raise InternalInconsistency(f"{name}: Kraus and closed-form routes differ by {dev:.3g}")
    return ProtocolDistributions(j, k, float(epsilon), *kraus, p=p, q=q)


def closed_form_distributions(rho, basis: BasisPair, j: int, k: int, epsilon: float) -> ProtocolDistributions:
    """Closed-form route alone (no cross-check)."""
    closed, p, q = _closed_route(np.asarray(rho, dtype=complex), basis, j, k, epsilon)
    return ProtocolDistributions(j, k, float(epsilon), *closed, p=p, q=q)


def kraus_distributions(rho, basis: BasisPair, j: int, k: int, epsilon: float) -> ProtocolDistributions:
    """Kraus-algebra route alone (no cross-check)."""
    rho = np.asarray(rho, dtype=complex)
    f = _kraus_route(rho, basis, j, k, epsilon)
    _, p, q = _closed_route(rho, basis, j, k, epsilon)
    return ProtocolDistributions(j, k, float(epsilon), *f, p=p, q=q)


@dataclass(frozen=True)
class MarginalizationReport:
    f4_from_f2: float
    f5_from_f3: float
    f6_from_f2: float
    f6_from_f3: float
    tol: float = 1e-12

    @property
    def max_deviation(self) -> float:
        return max(self.f4_from_f2, self.f5_from_f3, self.f6_from_f2, self.f6_from_f3)

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def marginalization_check(dists: ProtocolDistributions, tol: float = 1e-12) -> MarginalizationReport:
    return MarginalizationReport(
        f4_from_f2=float(np.max(np.abs(dists.f2.sum(axis=1) - dists.f4))),
        f5_from_f3=float(np.max(np.abs(dists.f3.sum(axis=1) - dists.f5))),
        f6_from_f2=float(np.max(np.abs(dists.f2.sum(axis=0) - dists.f6))),
        f6_from_f3=float(np.max(np.abs(dists.f3.sum(axis=0) - dists.f6))),
        tol=tol,
    )


def outcome_table(dists: ProtocolDistributions, protocol: int) -> tuple[list[tuple[int, ...]], np.ndarray]:
    """Outcome tuples and their probabilities, in a fixed order."""
    if protocol not in PROTOCOL_VARIABLES:
        raise ValueError(f"protocol must be 1..6, got {protocol}")
    table = dists.table(protocol)
    if table.ndim == 1:
        return [(o,) for o in OUTCOMES], table.copy()
    labels = [(a, b) for a in OUTCOMES for b in OUTCOMES]
    return labels, table.reshape(-1).copy()


def _draw(probs: np.ndarray, rng: np.random.Generator, size: int) -> np.ndarray:
    # inverse CDF over at most four outcomes
    cdf = np.cumsum(np.clip(probs, 0, None))
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    return np.minimum(idx, len(probs) - 1)


def sample_protocol(dists: ProtocolDistributions, protocol: int, rng_seed, size: int | None = None):
    """Draw outcome tuple(s) from the exact table.

    ``rng_seed`` is an int (the stream seed) or a ``numpy.random.Generator``.
    Returns one tuple, or an ``(size, n_vars)`` int array when ``size`` is given.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else derive_rng(rng_seed)
    labels, probs = outcome_table(dists, protocol)
    idx = _draw(probs, rng, 1 if size is None else size)
    arr = np.asarray(labels, dtype=np.int8)[idx]
    return tuple(int(v) for v in arr[0]) if size is None else arr


# --- shot counts and the estimator -------------------------------------------------

def protocol_cells(d: int) -> list[tuple[int, int, int]]:
    """Canonical (protocol, j, k) grid; -1 marks an index the protocol does not use.

    The position of a cell in this list is its cell index for seed derivation.
    """
    cells = [(1, -1, k) for k in range(d)]
    cells += [(2, j, k) for j in range(d) for k in range(d)]
    cells += [(3, j, k) for j in range(d) for k in range(d)]
    cells += [(4, j, -1) for j in range(d)]
    cells.append((5, -1, -1))
    cells += [(6, j, k) for j in range(d) for k in range(d)]
    return cells


def estimation_cells(d: int) -> list[tuple[int, int, int]]:
    """Cells the KD estimator needs: protocol 1 per k, protocols 2 and 3 per (j, k)."""
    return [c for c in protocol_cells(d) if c[0] in (1, 2, 3)]


def cell_distribution(rho, basis: BasisPair, cell, epsilon: float) -> np.ndarray:
    protocol, j, k = cell
    dists = exact_distributions(rho, basis, max(j, 0), max(k, 0), epsilon)
    return outcome_table(dists, protocol)[1]


@dataclass
class ShotCounts:
    """Outcome counts per (protocol, j, k) cell, in ``outcome_table`` order."""

    d: int
    counts: dict = field(default_factory=dict)

    def add(self, cell, counts) -> None:
        cell = tuple(int(c) for c in cell)
        counts = np.asarray(counts, dtype=np.int64)
        if cell in self.counts:
            self.counts[cell] = self.counts[cell] + counts
        else:
            self.counts[cell] = counts.copy()

    def get(self, cell) -> np.ndarray:
        return self.counts.get(tuple(cell), np.zeros(4 if cell[0] in (2, 3) else 2, dtype=np.int64))

    def total(self, cell) -> int:
        return int(self.get(cell).sum())

    def frequencies(self, cell) -> np.ndarray:
        c = self.get(cell)
        return c / c.sum()

    def to_json(self) -> dict:
        return {"d": self.d, "cells": [{"cell": list(k), "counts": v.tolist()} for k, v in sorted(self.counts.items())]}

    @classmethod
    def from_json(cls, obj) -> "ShotCounts":
        out = cls(int(obj["d"]))
        for item in obj["cells"]:
            out.add(item["cell"], item["counts"])
        return out


def simulate_counts(rho, basis: BasisPair, epsilon: float, shots: int, master_seed: int, cells=None) -> ShotCounts:
    """Multinomial shot counts for every cell, one derived stream per cell index."""
    all_cells = protocol_cells(basis.d)
    cells = all_cells if cells is None else [tuple(c) for c in cells]
    out = ShotCounts(basis.d)
    for cell in cells:
        rng = derive_rng(master_seed, all_cells.index(cell))
        probs = np.clip(cell_distribution(rho, basis, cell, epsilon), 0, None)
        out.add(cell, rng.multinomial(shots, probs / probs.sum()))
    return out


def hoeffding_halfwidth(n, confidence: float = 0.99):
    """Two-sided Hoeffding half-width for a frequency from n Bernoulli trials."""
    alpha = 1 - confidence
    return np.sqrt(np.log(2 / alpha) / (2 * np.asarray(n, dtype=float)))


@dataclass(frozen=True)
class KDEstimate:
    q: np.ndarray
    re_halfwidth: np.ndarray
    im_halfwidth: np.ndarray
    confidence: float
    min_count: int

    @property
    def halfwidth(self) -> np.ndarray:
        return self.re_halfwidth + self.im_halfwidth

    def nonpositivity_band(self) -> float:
        """Bound on |N(Q_hat) - N(Q)| implied by the per-entry half-widths."""
        return float(self.halfwidth.sum())


def estimate_kd(counts: ShotCounts, basis: BasisPair, epsilon: float, confidence: float = 0.99) -> KDEstimate:
    """Invert protocol 1-3 frequencies to a KD matrix using the exact closed forms.

    Re Q = ((f2(+,+) - f2(-,+)) / p_m + p_k) / 2 and
    Im Q = (f3(+,+) - f3(-,+)) / (2 p_m); these hold at any epsilon.
    """
    d = basis.d
    cfg = WeakMeasurementConfig(epsilon)
    p_m = cfg.p_m
    for cell in estimation_cells(d):
        if counts.total(cell) == 0:
            raise InsufficientSamples(f"no counts for cell {cell}")
    q = np.zeros((d, d), dtype=complex)
    re_hw = np.zeros((d, d))
    im_hw = np.zeros((d, d))
    n_min = min(counts.total(c) for c in estimation_cells(d))
    for k in range(d):
        c1 = (1, -1, k)
        p_hat = counts.frequencies(c1)[0]
        h1 = hoeffding_halfwidth(counts.total(c1), confidence)
        for j in range(d):
            f2 = counts.frequencies((2, j, k))  # order (+,+), (+,-), (-,+), (-,-)
            f3 = counts.frequencies((3, j, k))
            h2 = hoeffding_halfwidth(counts.total((2, j, k)), confidence)
            h3 = hoeffding_halfwidth(counts.total((3, j, k)), confidence)
            re = 0.5 * ((f2[0] - f2[2]) / p_m + p_hat)
            im = (f3[0] - f3[2]) / (2 * p_m)
            q[j, k] = re + 1j * im
            re_hw[j, k] = 0.5 * (2 * h2 / p_m + h1)
            im_hw[j, k] = h3 / p_m
    return KDEstimate(q, re_hw, im_hw, confidence, n_min)
