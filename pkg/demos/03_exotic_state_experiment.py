"""Alice sends |+i> and |-i> in secret order; Bob sees only their mixture."""

import numpy as np

from kdcontext import AliceConfig, alice_postselect, bob_analyze, mub_qubit, run_experiment

basis = mub_qubit()
eps = 0.02
states = np.array([[1, 1j], [1, -1j]]) / np.sqrt(2)

alice = AliceConfig(states, rounds=1_000_000, basis=basis, epsilon=eps, permutation_seed=11)
record, ledger = run_experiment(alice, None, master_seed=2024, jobs=4)
print("deliveries:", len(record))

# Bob pools everything: the mixture is I/2, KD-positive and not exotic
bob = bob_analyze(record, basis, eps, search_budget=16, floor_restarts=8)
print("Bob N_hat:", round(bob.estimate.n_hat, 4), " noise band:", round(bob.estimate.band, 3))
print("rho_hat:\n", np.round(bob.estimate.rho_hat, 3))
print("Bob verdict:", bob.verdict)

# Alice splits the same public outcomes by what she actually sent
post = alice_postselect(record, ledger, basis, eps)
for s in post.per_state:
    print(f"state {s.index}: N_hat={s.estimate.n_hat:.4f} verdict={s.certification.verdict}")
print("threshold 3d^2 eps:", post.threshold_3d2eps)
