"""Noncontextual hidden-variable model for KD-positive states.

The ontic space is {0, ..., d-1}: an ontic state records which B outcome
will occur. Kernel tensors are indexed ``[j, outcome, lam, lam_prime]``
(transition from ``lam`` to ``lam_prime``) with outcome position 0 for +1
and 1 for -1, matching :mod:`kdcontext.protocols`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EpsilonTooLarge, NotKDPositive
from .kd import BasisPair, kd_distribution, nonpositivity, weak_values
from .protocols import OUTCOMES, WeakMeasurementConfig, exact_distributions

EPSILON_MAX = np.sqrt(5) / 5
KD_POSITIVE_TOL = 1e-10


@dataclass(frozen=True)
class HiddenVariableModel:
    epsilon: float
    mu: np.ndarray  # (d,)
    xi_b: np.ndarray  # (k, z, lam)
    xi_a: np.ndarray  # (j, x, lam)
    gamma_x: np.ndarray  # (j, x, lam, lam')
    gamma_y: np.ndarray  # (j, y, lam, lam')
    gamma_d: np.ndarray  # (j, lam, lam')
    m: np.ndarray  # (j, lam, lam')

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def p_m(self) -> float:
        return WeakMeasurementConfig(self.epsilon).p_m

    @property
    def p_d(self) -> float:
        return WeakMeasurementConfig(self.epsilon).p_d

    def min_entry(self) -> float:
        return float(min(a.min() for a in (self.mu, self.xi_b, self.xi_a, self.gamma_x, self.gamma_y, self.gamma_d)))

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "mu": self.mu.tolist(),
            "xi_b": self.xi_b.tolist(),
            "xi_a": self.xi_a.tolist(),
            "gamma_x": self.gamma_x.tolist(),
            "gamma_y": self.gamma_y.tolist(),
            "gamma_d": self.gamma_d.tolist(),
            "m": self.m.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "HiddenVariableModel":
        arrays = {k: np.asarray(obj[k], dtype=float) for k in ("mu", "xi_b", "xi_a", "gamma_x", "gamma_y", "gamma_d", "m")}
        return cls(epsilon=float(obj["epsilon"]), **arrays)


def build_hvm(rho, basis: BasisPair, epsilon: float, kd_positive_tol: float = KD_POSITIVE_TOL) -> HiddenVariableModel:
    """Construct the model for a KD-positive ``rho`` at coupling ``epsilon < sqrt(5)/5``.

    Weak values are clipped to [0, 1] before use; for an exactly KD-positive
    state this only removes round-off. Ontic states with zero preparation
    weight and an undefined weak value get xi_A(+1) = 1/2 and no
    weak-value term in the X kernel.
    """
    rho = np.asarray(rho, dtype=complex)
    cfg = WeakMeasurementConfig(epsilon)
    if cfg.epsilon >= EPSILON_MAX:
        raise EpsilonTooLarge(f"epsilon={cfg.epsilon} >= sqrt(5)/5; kernel positivity is not guaranteed")
    kd = kd_distribution(rho, basis)
    n = nonpositivity(kd)
    if n > kd_positive_tol:
        raise NotKDPositive(f"N(rho)={n:.3g} exceeds tolerance {kd_positive_tol:g}")

    d = basis.d
    p_m, p_d = cfg.p_m, cfg.p_d
    wv = weak_values(kd)
    mu = np.clip(kd.q.sum(axis=0).real, 0, None)
    undefined = ~wv.defined[0]
    mu[undefined] = 0.0  # below the weak-value floor: treated as unreachable
    mu = mu / mu.sum()

    re_w = np.clip(wv.w.real, 0.0, 1.0)  # (j, lam)
    re_w[:, undefined] = 0.5  # unreachable ontic states; 2*0.5 - 1 = 0 drops the term

    eye = np.eye(d)
    xi_b = np.stack([np.stack([eye[k], 1 - eye[k]]) for k in range(d)])
    xi_a = np.stack([re_w, 1 - re_w], axis=1)

    # m_j(lam'|lam) = Tr(P^B_lam' D_j rho D_j^+), identical rows
    m = np.empty((d, d, d))
    for j in range(d):
        d_op = 2 * basis.proj_a(j) - eye
        dr = d_op @ rho @ d_op.conj().T
        q_plus = np.clip(np.real(np.einsum("ki,ij,kj->k", basis.b.conj(), dr, basis.b)), 0, None)
        m[j] = np.tile(q_plus / q_plus.sum(), (d, 1))

    gamma_x = np.empty((d, 2, d, d))
    gamma_y = np.empty((d, 2, d, d))
    for j in range(d):
        for xi, x in enumerate(OUTCOMES):
            diag = 0.5 * (1 - p_d) + 0.5 * x * p_m * (2 * re_w[j] - 1)
            gamma_x[j, xi] = np.diag(diag) + 0.5 * p_d * m[j]
            gamma_y[j, xi] = 0.5 * (1 - p_d) * eye + 0.5 * p_d * m[j]
    return HiddenVariableModel(cfg.epsilon, mu, xi_b, xi_a, gamma_x, gamma_y, m.copy(), m)


def hvm_predict(model: HiddenVariableModel, protocol: int, j: int = 0, k: int = 0) -> np.ndarray:
    """Outcome table predicted by the model, shaped like the quantum tables."""
    mu = model.mu
    if protocol == 1:
        return model.xi_b[k] @ mu
    if protocol == 2:
        return np.einsum("l,xlm,zm->xz", mu, model.gamma_x[j], model.xi_b[k])
    if protocol == 3:
        return np.einsum("l,ylm,zm->yz", mu, model.gamma_y[j], model.xi_b[k])
    if protocol == 4:
        return (1 - model.p_m) / 2 + model.p_m * (model.xi_a[j] @ mu)
    if protocol == 5:
        return np.array([0.5, 0.5])
    if protocol == 6:
        trans = (1 - model.p_d) * np.eye(model.d) + model.p_d * model.gamma_d[j]
        return model.xi_b[k] @ (mu @ trans)
    raise ValueError(f"protocol must be 1..6, got {protocol}")


@dataclass(frozen=True)
class CorrectnessReport:
    f1: float
    f2: float
    f3: float
    tol: float = 1e-10

    @property
    def max_deviation(self) -> float:
        return max(self.f1, self.f2, self.f3)

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol

    def to_json(self) -> dict:
        return {"f1": self.f1, "f2": self.f2, "f3": self.f3, "max_deviation": self.max_deviation, "passed": self.passed}


def verify_correctness(model: HiddenVariableModel, rho, basis: BasisPair, epsilon: float, tol: float = 1e-10) -> CorrectnessReport:
    """Compare model predictions for protocols 1-3 with quantum theory over all (j, k)."""
    dev = {1: 0.0, 2: 0.0, 3: 0.0}
    for j in range(basis.d):
        for k in range(basis.d):
            dists = exact_distributions(rho, basis, j, k, epsilon)
            for pid in dev:
                dev[pid] = max(dev[pid], float(np.max(np.abs(hvm_predict(model, pid, j, k) - dists.table(pid)))))
    return CorrectnessReport(dev[1], dev[2], dev[3], tol)


@dataclass(frozen=True)
class NoncontextualityReport:
    y_marginal: float  # sum_lam' Gamma^Y(y, lam'|lam) = 1/2
    x_marginal: float  # sum_lam' Gamma^X(x, lam'|lam) = (1-p_m)/2 + p_m xi_A(x|lam)
    x_transition: float  # sum_x Gamma^X = (1-p_d) delta + p_d Gamma_D
    y_transition: float  # sum_y Gamma^Y = (1-p_d) delta + p_d Gamma_D
    tol: float = 1e-12

    @property
    def max_deviation(self) -> float:
        return max(self.y_marginal, self.x_marginal, self.x_transition, self.y_transition)

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol

    def to_json(self) -> dict:
        return {
            "y_marginal": self.y_marginal,
            "x_marginal": self.x_marginal,
            "x_transition": self.x_transition,
            "y_transition": self.y_transition,
            "max_deviation": self.max_deviation,
            "passed": self.passed,
        }


def verify_noncontextuality(model: HiddenVariableModel, tol: float = 1e-12) -> NoncontextualityReport:
    p_m, p_d = model.p_m, model.p_d
    eye = np.eye(model.d)
    y_marg = np.abs(model.gamma_y.sum(axis=3) - 0.5).max()
    x_marg = np.abs(model.gamma_x.sum(axis=3) - ((1 - p_m) / 2 + p_m * model.xi_a)).max()
    target = (1 - p_d) * eye[None] + p_d * model.gamma_d
    x_tr = np.abs(model.gamma_x.sum(axis=1) - target).max()
    y_tr = np.abs(model.gamma_y.sum(axis=1) - target).max()
    return NoncontextualityReport(float(y_marg), float(x_marg), float(x_tr), float(y_tr), tol)


def check_model_probabilities(model: HiddenVariableModel, tol: float = 1e-12) -> float:
    """Largest violation of the stochasticity invariants (0 when the model is valid)."""
    worst = [
        -model.min_entry(),
        abs(model.mu.sum() - 1),
        np.abs(model.gamma_x.sum(axis=(1, 3)) - 1).max(),
        np.abs(model.gamma_y.sum(axis=(1, 3)) - 1).max(),
        np.abs(model.gamma_d.sum(axis=2) - 1).max(),
        np.abs(model.xi_a.sum(axis=1) - 1).max(),
        np.abs(model.xi_b.sum(axis=1) - 1).max(),
    ]
    return float(max(0.0, *worst))
