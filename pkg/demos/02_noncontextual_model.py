"""Both branches of the contextuality criterion."""

import numpy as np

from kdcontext import build_hvm, certify, fourier_pair, hvm_cap_violation, mub_qubit, verify_correctness, verify_noncontextuality

# a KD-positive state admits an explicit hidden-variable model for small coupling
basis = fourier_pair(3)
rho = 0.6 * np.outer(basis.a[0], basis.a[0].conj()) + 0.4 * np.outer(basis.b[2], basis.b[2].conj())
model = build_hvm(rho, basis, 0.3)
print("mu =", np.round(model.mu, 4))
print("correctness deviation:", verify_correctness(model, rho, basis, 0.3).max_deviation)
print("noncontextuality deviation:", verify_noncontextuality(model).max_deviation)
print("verdict:", certify(rho, basis, 0.3).verdict.value)

# a KD-nonpositive state is contextual once the coupling is weak enough
qb = mub_qubit()
psi = np.array([1, 1j]) / np.sqrt(2)
plus_i = np.outer(psi, psi.conj())
for eps in (0.02, 0.2):
    v = certify(plus_i, qb, eps)
    print(f"eps={eps}: N={v.n:.4f}, 3d^2 eps={v.threshold_3d2eps:.3f}, verdict={v.verdict}")

# the model's response caps are violated by the actual statistics
cv = hvm_cap_violation(plus_i, qb, 0, 1, 0.2)
print(f"cap violation at eps=0.2: {cv.max_margin:+.4f}")
