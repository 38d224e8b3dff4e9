"""KD distributions and the six weak-measurement protocols on a qubit."""

import numpy as np

from kdcontext import exact_distributions, kd_distribution, mub_qubit, reconstruct_state, weak_values

basis = mub_qubit()  # A = computational basis, B = |+>, |->
psi = np.array([1, 1j]) / np.sqrt(2)
rho = np.outer(psi, psi.conj())

# KD distribution: complex entries, unit total, Born marginals
kd = kd_distribution(rho, basis)
print("Q =\n", np.round(kd.q, 4))
print("N(rho) =", round(kd.nonpositivity, 6), " (sqrt2 - 1 =", round(np.sqrt(2) - 1, 6), ")")
print("B marginal:", kd.b_marginal)

# weak values are Q / p_k; complex here, so anomalous
print("weak values:\n", np.round(weak_values(kd).w, 4))

# the KD distribution determines the state
print("round trip error:", np.abs(reconstruct_state(kd, basis) - rho).max())

# outcome laws of the six protocols for (j, k) = (0, 1)
for eps in (0.05, 0.2, np.pi / 4):
    d = exact_distributions(rho, basis, 0, 1, eps)
    print(f"eps={eps:.3f}  f3(+1,+1)={d.f3[0, 0]:.4f}  f4={np.round(d.f4, 4)}  f6={np.round(d.f6, 4)}")
