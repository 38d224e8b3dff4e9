"""Kirkwood-Dirac quasiprobabilities, weak-measurement protocols and contextuality tests."""

from .certify import CertificationVerdict, Verdict, certify, hvm_cap_violation, lemma_thresholds
from .errors import *  # noqa: F401,F403
from .experiment import (
    AliceConfig,
    AnalysisReport,
    BobPolicy,
    PublicRecord,
    SecretLedger,
    alice_postselect,
    bob_analyze,
    run_experiment,
)
from .geometry import (
    PurePositiveSet,
    SeparatingWitness,
    analyze_exotic,
    check_decomposition,
    find_witness,
    hull_membership,
    negativity_floor,
    pure_positive_search,
)
from .hvm import HiddenVariableModel, build_hvm, hvm_predict, verify_correctness, verify_noncontextuality
from .kd import (
    BasisPair,
    KDDistribution,
    fourier_pair,
    kd_distribution,
    mub_qubit,
    nonpositivity,
    reconstruct_state,
    weak_values,
)
from .protocols import (
    ProtocolDistributions,
    ShotCounts,
    estimate_kd,
    exact_distributions,
    kraus_operators,
    marginalization_check,
    sample_protocol,
    simulate_counts,
)

__version__ = "0.1.0"
