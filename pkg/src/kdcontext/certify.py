"""Contextuality certification from the KD distribution of a state."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidEpsilon
from .hvm import EPSILON_MAX, KD_POSITIVE_TOL, build_hvm, verify_correctness, verify_noncontextuality
from .kd import BasisPair, KDDistribution, kd_distribution, nonpositivity
from .protocols import WeakMeasurementConfig, exact_distributions

MARGIN_TOL = 1e-9
ENTRY_TOL = 1e-12


class Verdict(str, Enum):
    CONTEXTUAL = "Contextual"
    NONCONTEXTUAL_MODEL_EXISTS = "NoncontextualModelExists"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class CapViolation:
    """Quantum probability minus the bound every noncontextual model obeys.

    A strictly positive margin certifies that no noncontextual model exists.
    """

    f3_plus: float
    f3_minus: float
    f2_minus: float

    @property
    def max_margin(self) -> float:
        return max(self.f3_plus, self.f3_minus, self.f2_minus)

    def to_json(self) -> dict:
        return {"f3_plus": self.f3_plus, "f3_minus": self.f3_minus, "f2_minus": self.f2_minus}


@dataclass(frozen=True)
class CertificationVerdict:
    verdict: Verdict
    n: float
    threshold_3d2eps: float
    epsilon: float
    delta: float | None
    justification: str
    witness_margins: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "N": self.n,
            "threshold_3d2eps": self.threshold_3d2eps,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "justification": self.justification,
            "witness_margins": self.witness_margins,
        }


def hvm_cap_violation(rho, basis: BasisPair, j: int, k: int, epsilon: float) -> CapViolation:
    """Margins of f3(+1,+1), f3(-1,+1) and f2(-1,+1) over their noncontextual caps."""
    if not (0 < epsilon <= np.pi / 4):
        raise InvalidEpsilon(f"cap inequalities need epsilon in (0, pi/4], got {epsilon}")
    cfg = WeakMeasurementConfig(epsilon)
    dists = exact_distributions(rho, basis, j, k, epsilon)
    p = dists.p[0]
    cap3 = 0.5 * p + cfg.p_d
    cap2 = 0.5 * (1 + cfg.p_m) * p + cfg.p_d
    return CapViolation(
        f3_plus=float(dists.f3[0, 0] - cap3),
        f3_minus=float(dists.f3[1, 0] - cap3),
        f2_minus=float(dists.f2[1, 0] - cap2),
    )


@dataclass(frozen=True)
class LemmaThresholds:
    """Per-entry epsilon below which a single KD entry already forces contextuality."""

    imag: np.ndarray
    real: np.ndarray

    @property
    def best(self) -> float:
        return float(max(self.imag.max(), self.real.max()))

    @property
    def best_entry(self) -> tuple[str, int, int]:
        if self.imag.max() >= self.real.max():
            j, k = np.unravel_index(np.argmax(self.imag), self.imag.shape)
            return "imag", int(j), int(k)
        j, k = np.unravel_index(np.argmax(self.real), self.real.shape)
        return "real", int(j), int(k)


def lemma_thresholds(q) -> LemmaThresholds:
    q = q.q if isinstance(q, KDDistribution) else np.asarray(q)
    im = np.abs(q.imag)
    im = np.where(im > ENTRY_TOL, np.minimum(im, np.pi / 4), 0.0)
    neg = -q.real
    re = np.where(neg > ENTRY_TOL, np.minimum(neg, np.pi / 4), 0.0)
    return LemmaThresholds(im, re)


def _best_cap_margins(rho, basis, epsilon):
    best, where = None, None
    for j in range(basis.d):
        for k in range(basis.d):
            cv = hvm_cap_violation(rho, basis, j, k, epsilon)
            if best is None or cv.max_margin > best.max_margin:
                best, where = cv, (j, k)
    return {"j": where[0], "k": where[1], **best.to_json(), "max": best.max_margin}


def certify(rho, basis: BasisPair, epsilon: float) -> CertificationVerdict:
    """Decide contextuality of protocols 1-6 on ``rho`` at coupling ``epsilon``.

    Contextual when min(N, pi/4) > 3 d^2 epsilon (and epsilon <= pi/4);
    NoncontextualModelExists when N <= 1e-10, epsilon < sqrt(5)/5 and the
    constructed model passes both verifiers; Indeterminate otherwise.
    """
    if not (0 < epsilon <= np.pi / 2):
        raise InvalidEpsilon(f"epsilon must lie in (0, pi/2], got {epsilon}")
    rho = np.asarray(rho, dtype=complex)
    d = basis.d
    n = nonpositivity(kd_distribution(rho, basis))
    threshold = 3 * d * d * epsilon
    margins = _best_cap_margins(rho, basis, epsilon) if epsilon <= np.pi / 4 else {}

    if epsilon <= np.pi / 4 and n > 0:
        delta = min(n, np.pi / 4)
        if delta - threshold > MARGIN_TOL:
            return CertificationVerdict(
                Verdict.CONTEXTUAL, n, threshold, epsilon, delta,
                f"min(N, pi/4) = {delta:.6g} exceeds 3d^2 eps = {threshold:.6g} by {delta - threshold:.3g}",
                margins,
            )

    if n <= KD_POSITIVE_TOL and epsilon < EPSILON_MAX:
        model = build_hvm(rho, basis, epsilon)
        corr = verify_correctness(model, rho, basis, epsilon)
        nc = verify_noncontextuality(model)
        if corr.passed and nc.passed:
            return CertificationVerdict(
                Verdict.NONCONTEXTUAL_MODEL_EXISTS, n, threshold, epsilon, None,
                f"model built; correctness deviation {corr.max_deviation:.2e}, "
                f"noncontextuality deviation {nc.max_deviation:.2e}",
                margins,
            )

    return CertificationVerdict(
        Verdict.INDETERMINATE, n, threshold, epsilon, None,
        f"N = {n:.6g}, 3d^2 eps = {threshold:.6g}: neither sufficient condition holds",
        margins,
    )
