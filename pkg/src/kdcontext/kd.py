"""Kirkwood-Dirac distributions over a pair of orthonormal bases.

States are plain ``(d, d)`` complex numpy arrays; pure states are unit
vectors. Basis vectors are stored as rows: ``basis.a[j]`` is the j-th
eigenvector of A.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, IllConditionedOverlap, InvalidBasis, InvalidState

ORTHO_TOL = 1e-12
SHARED_PROJECTOR_TOL = 1e-9
WEAK_VALUE_FLOOR = 1e-12


def _as_rows(vectors, name):
    arr = np.asarray(vectors, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidBasis(f"{name} must be d unit vectors of length d, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class BasisPair:
    """Eigenbases of two nondegenerate observables A and B."""

    a: np.ndarray
    b: np.ndarray
    overlaps: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = _as_rows(self.a, "a_vectors")
        b = _as_rows(self.b, "b_vectors")
        if a.shape != b.shape:
            raise DimensionMismatch(f"basis shapes differ: {a.shape} vs {b.shape}")
        d = a.shape[0]
        eye = np.eye(d)
        for name, vecs in (("a_vectors", a), ("b_vectors", b)):
            gram = vecs.conj() @ vecs.T
            if np.max(np.abs(gram - eye)) > ORTHO_TOL:
                raise InvalidBasis(f"{name} is not orthonormal")
        # overlaps[j, k] = <b_k|a_j>
        overlaps = (b.conj() @ a.T).T
        if np.any(1.0 - np.abs(overlaps) ** 2 <= SHARED_PROJECTOR_TOL):
            raise InvalidBasis("A and B share an eigenprojector")
        a.setflags(write=False)
        b.setflags(write=False)
        overlaps.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "overlaps", overlaps)

    @property
    def d(self) -> int:
        return self.a.shape[0]

    def proj_a(self, j: int) -> np.ndarray:
        return np.outer(self.a[j], self.a[j].conj())

    def proj_b(self, k: int) -> np.ndarray:
        return np.outer(self.b[k], self.b[k].conj())

    def basis_states(self) -> np.ndarray:
        """The 2d eigenvectors, A first then B, as rows."""
        return np.vstack([self.a, self.b])


def mub_qubit() -> BasisPair:
    """Computational basis for A, Hadamard (+, -) basis for B."""
    s = 1 / np.sqrt(2)
    return BasisPair(np.eye(2), np.array([[s, s], [s, -s]]))


def fourier_pair(d: int) -> BasisPair:
    """Computational basis and its discrete Fourier transform (a MUB pair)."""
    idx = np.arange(d)
    f = np.exp(2j * np.pi * np.outer(idx, idx) / d) / np.sqrt(d)
    return BasisPair(np.eye(d), f)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_basis_pair(d: int, rng: np.random.Generator) -> BasisPair:
    """Haar-random pair; almost surely every overlap is bounded away from 0."""
    return BasisPair(random_unitary(d, rng).T, random_unitary(d, rng).T)


def random_pure_state(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_density_matrix(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random mixed state (Ginibre ensemble of the given rank)."""
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def check_density_matrix(rho, d: int | None = None) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidState(f"density matrix must be square, got shape {rho.shape}")
    if d is not None and rho.shape[0] != d:
        raise DimensionMismatch(f"state has dimension {rho.shape[0]}, basis has {d}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
        raise InvalidState("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > 1e-12:
        raise InvalidState("density matrix does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise InvalidState("density matrix is not positive semidefinite")
    return rho


@dataclass(frozen=True)
class WeakValues:
    """Weak-value matrix ``w[j, k] = Q[j, k] / Tr(P^B_k rho)``.

    Entries whose denominator is below 1e-12 are set to 0 and flagged
    False in the matching ``*_defined`` mask. ``w_minus`` holds the
    conditional weak values for the outcome z = -1.
    """

    w: np.ndarray
    defined: np.ndarray
    w_minus: np.ndarray
    minus_defined: np.ndarray

    def conditional(self, z: int) -> tuple[np.ndarray, np.ndarray]:
        return (self.w, self.defined) if z == 1 else (self.w_minus, self.minus_defined)


@dataclass(frozen=True)
class KDDistribution:
    """``q[j, k] = Tr(P^B_k P^A_j rho)``."""

    q: np.ndarray
    basis: BasisPair

    @property
    def d(self) -> int:
        return self.q.shape[0]

    @property
    def nonpositivity(self) -> float:
        return nonpositivity(self.q)

    @property
    def a_marginal(self) -> np.ndarray:
        # Born probabilities; the imaginary parts cancel for Hermitian rho
        return self.q.sum(axis=1).real

    @property
    def b_marginal(self) -> np.ndarray:
        return self.q.sum(axis=0).real

    def weak_values(self) -> WeakValues:
        return weak_values(self)


def kd_distribution(rho, basis: BasisPair) -> KDDistribution:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (basis.d, basis.d):
        raise DimensionMismatch(f"state shape {rho.shape} does not match basis dimension {basis.d}")
    # <a_j| rho |b_k> <b_k|a_j>
    inner = basis.a.conj() @ rho @ basis.b.T
    return KDDistribution(inner * basis.overlaps, basis)


def kd_of_pure(psi, basis: BasisPair) -> np.ndarray:
    """KD matrix of a pure state, without forming the projector."""
    psi = np.asarray(psi, dtype=complex)
    return np.outer(basis.a.conj() @ psi, psi.conj() @ basis.b.T) * basis.overlaps


def nonpositivity(q) -> float:
    """``-1 + sum |Q_jk|``; tiny negative round-off is clamped to 0."""
    q = q.q if isinstance(q, KDDistribution) else np.asarray(q)
    n = float(np.abs(q).sum() - 1.0)
    if -1e-12 <= n < 0:
        n = 0.0
    return n


def pure_nonpositivity(psi, basis: BasisPair) -> float:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return nonpositivity(kd_of_pure(psi, basis))


def reconstruct_state(q, basis: BasisPair, overlap_floor: float = 1e-8) -> np.ndarray:
    """Invert the KD map: ``rho = sum_jk Q_jk |a_j><b_k| / <b_k|a_j>``, then Hermitize."""
    q = q.q if isinstance(q, KDDistribution) else np.asarray(q, dtype=complex)
    if q.shape != (basis.d, basis.d):
        raise DimensionMismatch(f"KD matrix shape {q.shape} does not match basis dimension {basis.d}")
    mags = np.abs(basis.overlaps)
    if np.any(mags <= overlap_floor):
        j, k = np.argwhere(mags <= overlap_floor)[0]
        raise IllConditionedOverlap(f"|<b_{k}|a_{j}>| = {mags[j, k]:.3g} <= {overlap_floor:g}")
    rho = basis.a.T @ (q / basis.overlaps) @ basis.b.conj()
    return (rho + rho.conj().T) / 2


def weak_values(q: KDDistribution) -> WeakValues:
    qm = q.q
    d = q.d
    p_plus = qm.sum(axis=0).real
    defined = np.broadcast_to(p_plus > WEAK_VALUE_FLOOR, (d, d)).copy()
    w = np.divide(qm, p_plus[None, :], out=np.zeros_like(qm), where=defined)

    # z = -1: sum over the complement m != k
    rest = qm.sum(axis=1, keepdims=True) - qm
    p_rest = p_plus.sum() - p_plus
    minus_defined = np.broadcast_to(p_rest > WEAK_VALUE_FLOOR, (d, d)).copy()
    w_minus = np.divide(rest, p_rest[None, :], out=np.zeros_like(qm), where=minus_defined)
    return WeakValues(w, defined, w_minus, minus_defined)


def project_psd(rho) -> np.ndarray:
    """Clip negative eigenvalues to 0 and renormalize the trace."""
    rho = np.asarray(rho, dtype=complex)
    rho = (rho + rho.conj().T) / 2
    vals, vecs = np.linalg.eigh(rho)
    vals = np.clip(vals, 0.0, None)
    if vals.sum() <= 0:
        return np.eye(rho.shape[0], dtype=complex) / rho.shape[0]
    vals = vals / vals.sum()
    out = (vecs * vals) @ vecs.conj().T
    return (out + out.conj().T) / 2


# JSON encoding: complex entries as [re, im], matrices row-major.

def complex_to_json(arr) -> list:
    arr = np.asarray(arr, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def complex_from_json(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def basis_to_json(basis: BasisPair) -> dict:
    return {"d": basis.d, "a_vectors": complex_to_json(basis.a), "b_vectors": complex_to_json(basis.b)}


def basis_from_json(obj: dict) -> BasisPair:
    basis = BasisPair(complex_from_json(obj["a_vectors"]), complex_from_json(obj["b_vectors"]))
    if "d" in obj and int(obj["d"]) != basis.d:
        raise DimensionMismatch(f"declared d={obj['d']} but vectors have d={basis.d}")
    return basis


def rho_to_json(rho) -> dict:
    return {"rho": complex_to_json(rho)}


def rho_from_json(obj: dict) -> np.ndarray:
    return complex_from_json(obj["rho"])


def kd_to_json(q: KDDistribution) -> dict:
    wv = q.weak_values()
    return {
        "q": complex_to_json(q.q),
        "N": q.nonpositivity,
        "weak_values": complex_to_json(wv.w),
        "weak_values_defined": wv.defined.tolist(),
        "weak_values_minus": complex_to_json(wv.w_minus),
        "weak_values_minus_defined": wv.minus_defined.tolist(),
    }
