"""Convex geometry of KD-positive states.

Hermitian d x d matrices are mapped to R^{d^2} by an orthonormal
coordinate map (diagonal entries, then sqrt(2) Re and sqrt(2) Im of the
upper triangle), so Euclidean dot products equal Tr(A B).

Hull membership is a linear program over a finite generator set; the
reported residual is the max-abs entry of ``sum_i p_i psi_i - rho``,
recomputed from the returned weights, independent of the LP solver.
Separating witnesses come from the Euclidean nearest point of the hull
(Wolfe's minimum-norm-point algorithm): the unit vector from that point
to the state maximizes the separation gap over ||H||_F = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .errors import EmptyFeasibleSet, NoSeparation, NotADecomposition, SetEmpty
from .kd import BasisPair, kd_distribution, kd_of_pure, nonpositivity, complex_to_json, complex_from_json
from .rng import derive_rng

PURE_TOL = 1e-9
DEDUP_TOL = 1e-6
HULL_TOL = 1e-8
GAP_TOL = 1e-9


def herm_to_vec(h) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    d = h.shape[0]
    iu = np.triu_indices(d, 1)
    return np.concatenate([np.diag(h).real, np.sqrt(2) * h[iu].real, np.sqrt(2) * h[iu].imag])


def vec_to_herm(v, d: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    iu = np.triu_indices(d, 1)
    m = len(iu[0])
    h = np.diag(v[:d]).astype(complex)
    off = (v[d : d + m] + 1j * v[d + m :]) / np.sqrt(2)
    h[iu] = off
    h[(iu[1], iu[0])] = off.conj()
    return h


def _vec_to_state(v: np.ndarray, d: int) -> np.ndarray:
    psi = v[:d] + 1j * v[d:]
    return psi / np.linalg.norm(psi)


def _same_ray(psi, phi, tol=DEDUP_TOL) -> bool:
    return 1 - abs(np.vdot(psi, phi)) <= tol


@dataclass
class PurePositiveSet:
    """Pure KD-positive states (rows of ``states``) with a provenance tag each."""

    basis: BasisPair
    states: np.ndarray
    provenance: list
    tol: float = PURE_TOL

    def __len__(self) -> int:
        return len(self.states)

    def projectors(self) -> np.ndarray:
        return np.einsum("ni,nj->nij", self.states, self.states.conj())

    def to_json(self) -> dict:
        return {"tol": self.tol, "states": complex_to_json(self.states), "provenance": list(self.provenance)}

    @classmethod
    def from_json(cls, obj, basis: BasisPair) -> "PurePositiveSet":
        return cls(basis, complex_from_json(obj["states"]), list(obj["provenance"]), float(obj.get("tol", PURE_TOL)))


def _pure_n_from_params(v, basis):
    psi = v[: basis.d] + 1j * v[basis.d :]
    nrm = np.linalg.norm(psi)
    if nrm < 1e-12:
        return 1.0
    return nonpositivity(kd_of_pure(psi / nrm, basis))


def _snap(psi, basis, tol):
    """Zero tiny coefficients in the A or B basis; KD-positive pure states often sit on such faces."""
    best = psi
    best_n = nonpositivity(kd_of_pure(psi, basis))
    for vecs in (basis.a, basis.b):
        coeff = vecs.conj() @ psi
        for cut in (1e-3, 1e-4, 1e-6):
            c = np.where(np.abs(coeff) < cut, 0, coeff)
            if not np.any(c):
                continue
            cand = vecs.T @ c
            cand /= np.linalg.norm(cand)
            n = nonpositivity(kd_of_pure(cand, basis))
            if n < best_n:
                best, best_n = cand, n
    return best, best_n


def pure_positive_search(basis: BasisPair, budget: int = 64, tol: float = PURE_TOL, rng_seed: int = 0) -> PurePositiveSet:
    """The 2d basis states plus any further pure states with N <= tol found by local search.

    Each of ``budget`` restarts draws a Haar-random state from its own
    derived stream and minimizes N over the unit sphere with Nelder-Mead.
    """
    d = basis.d
    states = [v for v in basis.basis_states()]
    provenance = ["basis-state"] * (2 * d)

    for r in range(budget):
        rng = derive_rng(rng_seed, r)
        v0 = rng.standard_normal(2 * d)
        res = minimize(
            _pure_n_from_params, v0, args=(basis,), method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000 * d, "maxfev": 8000 * d},
        )
        psi = _vec_to_state(res.x, d)
        psi, n = _snap(psi, basis, tol)
        if n > tol:
            continue
        if any(_same_ray(psi, s) for s in states):
            continue
        states.append(psi)
        provenance.append("numerical-search")
    return PurePositiveSet(basis, np.array(states), provenance, tol)


@dataclass(frozen=True)
class HullMembership:
    feasible: bool
    weights: np.ndarray
    residual: float
    tol: float


def _generator_vectors(generators) -> np.ndarray:
    if isinstance(generators, PurePositiveSet):
        states = generators.states
    else:
        states = np.asarray(generators, dtype=complex)
    if len(states) == 0:
        raise SetEmpty("generator set is empty")
    if states.ndim == 2:
        mats = np.einsum("ni,nj->nij", states, states.conj())
    else:
        mats = states
    return np.array([herm_to_vec(m) for m in mats])


def mixture_residual(rho, weights, generators) -> float:
    """Frobenius norm of sum_i p_i G_i - rho."""
    vecs = _generator_vectors(generators)
    d = np.asarray(rho).shape[0]
    mix = vec_to_herm(np.asarray(weights) @ vecs, d)
    return float(np.linalg.norm(mix - np.asarray(rho)))


def hull_membership(rho, generators, tol: float = HULL_TOL) -> HullMembership:
    """Is ``rho`` a convex combination of the generators (within ``tol``)?

    Solves min ||V p - r||_1 subject to p >= 0, sum p = 1 as an LP (HiGHS),
    then reports the Frobenius residual of the returned mixture.
    """
    rho = np.asarray(rho, dtype=complex)
    vecs = _generator_vectors(generators)
    n, m = vecs.shape
    r = herm_to_vec(rho)
    # variables: p (n), s_plus (m), s_minus (m)
    c = np.concatenate([np.zeros(n), np.ones(2 * m)])
    a_eq = np.zeros((m + 1, n + 2 * m))
    a_eq[:m, :n] = vecs.T
    a_eq[:m, n : n + m] = np.eye(m)
    a_eq[:m, n + m :] = -np.eye(m)
    a_eq[m, :n] = 1.0
    b_eq = np.concatenate([r, [1.0]])
    res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * (n + 2 * m), method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    w = np.clip(res.x[:n], 0, None)
    w = w / w.sum()
    resid = float(np.linalg.norm(vec_to_herm(w @ vecs, rho.shape[0]) - rho))
    return HullMembership(resid <= tol, w, resid, tol)


def _affine_minimizer(ps: np.ndarray) -> np.ndarray:
    k = len(ps)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = ps @ ps.T
    kkt[:k, k] = 1
    kkt[k, :k] = 1
    rhs = np.zeros(k + 1)
    rhs[k] = 1
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:k]


def min_norm_point(points: np.ndarray, tol: float = 1e-13, max_iter: int = 10_000):
    """Wolfe's algorithm: the point of conv(points) closest to the origin.

    Returns (x, support indices, barycentric weights on the support).
    """
    points = np.asarray(points, dtype=float)
    scale = max(1.0, float(np.max(np.sum(points**2, axis=1))))
    i0 = int(np.argmin(np.sum(points**2, axis=1)))
    support = [i0]
    lam = np.array([1.0])
    x = points[i0].copy()
    for _ in range(max_iter):
        g = points @ x
        j = int(np.argmin(g))
        if x @ x - g[j] <= tol * scale or j in support:
            break
        support.append(j)
        lam = np.append(lam, 0.0)
        for _ in range(len(points) + 5):
            alpha = _affine_minimizer(points[support])
            if np.all(alpha > 1e-15):
                lam = alpha
                break
            neg = alpha <= 1e-15
            denom = lam[neg] - alpha[neg]
            ratios = np.where(denom > 0, lam[neg] / np.where(denom > 0, denom, 1), np.inf)
            theta = min(1.0, float(ratios.min()))
            lam = (1 - theta) * lam + theta * alpha
            keep = lam > 1e-15
            if keep.all():
                keep[np.argmin(lam)] = False
            support = [s for s, kp in zip(support, keep) if kp]
            lam = lam[keep] / lam[keep].sum()
        x = lam @ points[support]
    return x, support, lam


@dataclass(frozen=True)
class SeparatingWitness:
    """H with ||H||_F = 1 and Tr(H rho*) = c_star > c_hull = max_i Tr(H psi_i)."""

    h: np.ndarray
    c_hull: float
    c_star: float

    @property
    def gap(self) -> float:
        return self.c_star - self.c_hull

    def to_json(self) -> dict:
        return {"H": complex_to_json(self.h), "c_hull": self.c_hull, "c_star": self.c_star, "gap": self.gap}

    @classmethod
    def from_json(cls, obj) -> "SeparatingWitness":
        return cls(complex_from_json(obj["H"]), float(obj["c_hull"]), float(obj["c_star"]))


def nearest_hull_point(rho, generators):
    """Frobenius-nearest point of the hull and its weights over the generators."""
    rho = np.asarray(rho, dtype=complex)
    vecs = _generator_vectors(generators)
    x, weights = _nearest(herm_to_vec(rho), vecs)
    return vec_to_herm(x, rho.shape[0]), weights


def _nearest(r, vecs):
    x, support, lam = min_norm_point(vecs - r)
    weights = np.zeros(len(vecs))
    weights[support] = lam
    return x + r, weights


def find_witness(rho_star, generators, gap_tol: float = GAP_TOL) -> SeparatingWitness:
    rho_star = np.asarray(rho_star, dtype=complex)
    d = rho_star.shape[0]
    vecs = _generator_vectors(generators)
    r = herm_to_vec(rho_star)
    nearest, _ = _nearest(r, vecs)
    u = r - nearest
    dist = np.linalg.norm(u)
    if dist <= gap_tol:
        raise NoSeparation(f"state lies within {dist:.3g} of the generator hull")
    hv = u / dist
    c_hull = float(np.max(vecs @ hv))
    c_star = float(r @ hv)
    if c_star - c_hull <= gap_tol:
        raise NoSeparation(f"optimal gap {c_star - c_hull:.3g} <= {gap_tol:g}")
    return SeparatingWitness(vec_to_herm(hv, d), c_hull, c_star)


@dataclass(frozen=True)
class FloorEstimate:
    """Smallest N found over pure states with Tr(H psi) >= c_star.

    A numerical upper bound on the true floor.
    """

    delta: float
    state: np.ndarray
    feasible_restarts: int
    restarts: int
    values: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "state": complex_to_json(self.state),
            "feasible_restarts": self.feasible_restarts,
            "restarts": self.restarts,
        }


def _restore_feasibility(psi, top, h, c_star):
    """Move psi along the great circle toward the top eigenvector until Tr(H psi) >= c_star."""
    if np.real(np.vdot(psi, h @ psi)) >= c_star:
        return psi
    phase = np.vdot(top, psi)
    top = top * (phase / abs(phase) if abs(phase) > 1e-15 else 1)

    def mix(t):
        v = (1 - t) * psi + t * top
        return v / np.linalg.norm(v)

    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = (lo + hi) / 2
        v = mix(mid)
        if np.real(np.vdot(v, h @ v)) >= c_star:
            hi = mid
        else:
            lo = mid
    return mix(hi)


def negativity_floor(
    witness: SeparatingWitness, basis: BasisPair, restarts: int = 32, rng_seed: int = 0, penalty: float = 100.0
) -> FloorEstimate:
    """Estimate min N(psi) over pure psi in the witness half-space by penalized multi-start search."""
    h = np.asarray(witness.h, dtype=complex)
    if np.linalg.norm(h) < 1e-12:
        raise ValueError("witness operator is zero")
    d = basis.d
    c_star = witness.c_star
    vals, vecs = np.linalg.eigh(h)
    if vals[-1] < c_star - 1e-12:
        raise EmptyFeasibleSet(f"largest eigenvalue {vals[-1]:.6g} of H is below c_star {c_star:.6g}")
    top = vecs[:, -1]

    def objective(v):
        psi = v[:d] + 1j * v[d:]
        nrm = np.linalg.norm(psi)
        if nrm < 1e-12:
            return 10.0
        psi = psi / nrm
        viol = max(0.0, c_star - np.real(np.vdot(psi, h @ psi)))
        return nonpositivity(kd_of_pure(psi, basis)) + penalty * viol

    starts = [np.concatenate([top.real, top.imag])]
    for r in range(restarts - 1):
        rng = derive_rng(rng_seed, r)
        starts.append(rng.standard_normal(2 * d))

    best_n, best_psi, found = np.inf, None, []
    for v0 in starts:
        res = minimize(objective, v0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 3000 * d})
        psi = _restore_feasibility(_vec_to_state(res.x, d), top, h, c_star)
        if np.real(np.vdot(psi, h @ psi)) < c_star - 1e-12:
            continue
        n = nonpositivity(kd_of_pure(psi, basis))
        found.append(n)
        if n < best_n:
            best_n, best_psi = n, psi
    if best_psi is None:
        raise EmptyFeasibleSet("no restart reached the feasible set")
    return FloorEstimate(float(best_n), best_psi, len(found), len(starts), np.array(found))


@dataclass(frozen=True)
class DecompositionReport:
    component_n: np.ndarray
    max_n: float
    argmax: int
    exceeds_delta: bool
    in_witness_set: np.ndarray | None
    residual: float

    def to_json(self) -> dict:
        return {
            "component_N": self.component_n.tolist(),
            "max_N": self.max_n,
            "psi_minus_index": self.argmax,
            "exceeds_delta": self.exceeds_delta,
            "in_witness_set": None if self.in_witness_set is None else self.in_witness_set.tolist(),
            "residual": self.residual,
        }


def check_decomposition(rho_star, weights, states, basis: BasisPair, delta: float,
                        witness: SeparatingWitness | None = None, tol: float = HULL_TOL) -> DecompositionReport:
    """Check a pure-state decomposition of ``rho_star`` and locate its most KD-nonpositive member."""
    weights = np.asarray(weights, dtype=float)
    states = np.asarray(states, dtype=complex)
    if np.any(weights < -1e-12) or abs(weights.sum() - 1) > tol:
        raise NotADecomposition(f"weights must be a probability vector (sum = {weights.sum():.6g})")
    states = states / np.linalg.norm(states, axis=1, keepdims=True)
    mix = np.einsum("n,ni,nj->ij", weights, states, states.conj())
    resid = float(np.max(np.abs(mix - np.asarray(rho_star))))
    if resid > tol:
        raise NotADecomposition(f"mixture differs from the state by {resid:.3g}")
    ns = np.array([nonpositivity(kd_of_pure(s, basis)) for s in states])
    i = int(np.argmax(ns))
    in_set = None
    if witness is not None:
        hv = np.real(np.einsum("ni,ij,nj->n", states.conj(), witness.h, states))
        in_set = hv >= witness.c_star - 1e-10
    return DecompositionReport(ns, float(ns[i]), i, bool(ns[i] > delta), in_set, resid)


def random_decomposition(rho, n_components: int, rng: np.random.Generator):
    """Random pure-state decomposition rho = sum p_i psi_i via a Haar isometry."""
    vals, vecs = np.linalg.eigh(np.asarray(rho, dtype=complex))
    vals = np.clip(vals, 0, None)
    d = len(vals)
    if n_components < d:
        raise ValueError("need at least d components")
    z = rng.standard_normal((n_components, n_components)) + 1j * rng.standard_normal((n_components, n_components))
    u, _ = np.linalg.qr(z)
    u = u[:, :d]  # isometry: columns orthonormal
    raw = (u * np.sqrt(vals)) @ vecs.T  # row i: sum_k u_ik sqrt(l_k) e_k
    p = np.sum(np.abs(raw) ** 2, axis=1)
    keep = p > 1e-15
    return p[keep], raw[keep] / np.sqrt(p[keep])[:, None]


@dataclass
class ExoticAnalysis:
    rho: np.ndarray
    n: float
    kd_positive: bool
    hull: HullMembership
    witness: SeparatingWitness | None
    floor: FloorEstimate | None
    exotic: bool
    generators: int
    caveat: str = (
        "hull taken over the discovered generator set; a missed pure KD-positive "
        "state could place the state inside the true hull"
    )

    def to_json(self) -> dict:
        return {
            "N": self.n,
            "kd_positive": self.kd_positive,
            "hull_feasible": self.hull.feasible,
            "hull_residual": self.hull.residual,
            "witness": None if self.witness is None else self.witness.to_json(),
            "set_A_threshold": None if self.witness is None else self.witness.c_star,
            "delta": None if self.floor is None else self.floor.to_json(),
            "exotic": self.exotic,
            "generators": self.generators,
            "caveat": self.caveat,
        }


def analyze_exotic(rho, basis: BasisPair, generators: PurePositiveSet | None = None, *, kd_tol: float = PURE_TOL,
                   hull_tol: float = HULL_TOL, gap_tol: float = 1e-6, search_budget: int = 64,
                   floor_restarts: int = 32, rng_seed: int = 0) -> ExoticAnalysis:
    """KD-positivity, hull membership, witness and negativity floor for one state."""
    rho = np.asarray(rho, dtype=complex)
    if generators is None:
        generators = pure_positive_search(basis, search_budget, rng_seed=rng_seed)
    n = nonpositivity(kd_distribution(rho, basis))
    hull = hull_membership(rho, generators, hull_tol)
    witness = floor = None
    if not hull.feasible:
        try:
            witness = find_witness(rho, generators, gap_tol)
        except NoSeparation:
            witness = None
    if witness is not None:
        floor = negativity_floor(witness, basis, floor_restarts, rng_seed)
    exotic = n <= kd_tol and not hull.feasible and witness is not None and witness.gap > gap_tol
    return ExoticAnalysis(rho, n, n <= kd_tol, hull, witness, floor, exotic, len(generators))
