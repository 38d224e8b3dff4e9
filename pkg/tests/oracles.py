"""Reference computations that share no code with the package.

Each routine re-derives a quantity from first principles (explicit traces,
an explicit system-pointer circuit, brute-force sphere scans) so tests can
compare the package against something it did not compute itself.
"""

import numpy as np
from scipy.optimize import minimize

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0 + 0j, -1.0])


def outer(u, v=None):
    v = u if v is None else v
    return np.outer(u, np.conj(v))


def kd_by_traces(rho, a_rows, b_rows):
    d = len(a_rows)
    q = np.zeros((d, d), dtype=complex)
    for j in range(d):
        for k in range(d):
            q[j, k] = np.trace(outer(b_rows[k]) @ outer(a_rows[j]) @ rho)
    return q


def nonpositivity_by_sum(q):
    return float(np.sum(np.abs(q)) - 1)


def haar_state(d, rng):
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def haar_unitary(d, rng):
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_rho(d, rng):
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    r = g @ g.conj().T
    return r / np.trace(r).real


def pointer_circuit(rho, a_rows, b_rows, j, k, eps):
    """All six outcome tables from an explicit system-pointer simulation.

    Pointer prepared in cos(eps)|0> + sin(eps)|1>, joint unitary
    U = I (x) P + Z (x) (I - P) with P the A-projector, pointer read out
    in the X or Y basis, system then measured with the B-projector.
    Returns a dict of arrays indexed by outcome position (0 -> +1).
    """
    d = len(a_rows)
    eye = np.eye(d)
    p_a = outer(a_rows[j])
    u = np.kron(np.eye(2), p_a) + np.kron(SZ, eye - p_a)
    ptr = np.array([np.cos(eps), np.sin(eps)], dtype=complex)
    joint = u @ np.kron(outer(ptr), rho) @ u.conj().T

    p_b = outer(b_rows[k])
    b_proj = [p_b, eye - p_b]
    x_proj = [outer(np.array([1, 1]) / np.sqrt(2)), outer(np.array([1, -1]) / np.sqrt(2))]
    y_proj = [outer(np.array([1, 1j]) / np.sqrt(2)), outer(np.array([1, -1j]) / np.sqrt(2))]

    def prob(p_ptr, p_sys):
        return np.trace(np.kron(p_ptr, p_sys) @ joint).real

    f1 = np.array([np.trace(b @ rho).real for b in b_proj])
    f2 = np.array([[prob(px, b) for b in b_proj] for px in x_proj])
    f3 = np.array([[prob(py, b) for b in b_proj] for py in y_proj])
    f4 = np.array([prob(px, eye) for px in x_proj])
    f5 = np.array([prob(py, eye) for py in y_proj])
    f6 = np.array([prob(np.eye(2), b) for b in b_proj])
    return {1: f1, 2: f2, 3: f3, 4: f4, 5: f5, 6: f6}


# --- Bloch-sphere brute force (d = 2) -------------------------------------------


def bloch(rho):
    rho = np.asarray(rho)
    return np.real([np.trace(rho @ s) for s in (SX, SY, SZ)])


def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5**0.5) * i
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)


def _tangent_frame(n):
    t = np.array([1.0, 0, 0]) if abs(n[0]) < 0.9 else np.array([0, 1.0, 0])
    e1 = np.cross(n, t)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def separation_brute_force(r_star, r_gens, n_grid=1_000_000, zoom_rounds=8, zoom_grid=121):
    """max over unit n of min_i n.(r* - r_i) / sqrt(2).

    For qubits with a Frobenius-normalized witness this equals the optimal
    witness gap when positive (outside the hull) and is <= 0 inside.
    A Fibonacci grid is followed by repeated zooms on a tangent-plane grid.
    """
    diffs = np.asarray(r_star)[None, :] - np.asarray(r_gens)

    def score(ns):
        return (ns @ diffs.T).min(axis=1)

    grid = fibonacci_sphere(n_grid)
    vals = score(grid)
    best = grid[np.argmax(vals)]
    best_val = vals.max()
    width = 3 * np.sqrt(4 * np.pi / n_grid)
    lin = np.linspace(-1, 1, zoom_grid)
    for _ in range(zoom_rounds):
        e1, e2 = _tangent_frame(best)
        s, t = np.meshgrid(lin * width, lin * width)
        cand = best[None, :] + s.reshape(-1, 1) * e1 + t.reshape(-1, 1) * e2
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        v = score(cand)
        i = np.argmax(v)
        if v[i] > best_val:
            best, best_val = cand[i], v[i]
        width *= 4 / zoom_grid * 3
    return float(best_val / np.sqrt(2)), best


def bloch_pure_states(pts):
    theta = np.arccos(np.clip(pts[:, 2], -1, 1))
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    return np.stack([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], axis=1)


def pure_n_batch(psi, a_rows, b_rows):
    """N of each row of psi, from <a_j|psi><psi|b_k><b_k|a_j>."""
    a = np.asarray(a_rows)
    b = np.asarray(b_rows)
    amp_a = psi @ a.conj().T
    amp_b = psi @ b.conj().T
    ov = b.conj() @ a.T  # [k, j] = <b_k|a_j>
    q = amp_a[:, :, None] * amp_b.conj()[:, None, :] * ov.T[None]
    return np.abs(q).sum(axis=(1, 2)) - 1


def min_n_on_cap_brute_force(h, c_star, a_rows, b_rows, n_grid=200_000, slack=0.0):
    """Smallest N over Bloch-sphere pure states with Tr(H psi) >= c_star - slack."""
    pts = fibonacci_sphere(n_grid)
    hv = bloch(h)
    h0 = np.trace(h).real / 2
    pts = pts[h0 + pts @ hv / 2 >= c_star - slack]
    if len(pts) == 0:
        return np.inf, 0
    n = pure_n_batch(bloch_pure_states(pts), a_rows, b_rows)
    return float(n.min()), len(pts)


def hull_distance_qp(rho, generator_mats):
    """Frobenius distance from rho to conv(generators), by SLSQP over the simplex."""
    g = np.asarray(generator_mats)
    n = len(g)

    def dist2(p):
        diff = np.tensordot(p, g, axes=1) - rho
        return float(np.sum(np.abs(diff) ** 2))

    res = minimize(dist2, np.full(n, 1 / n), method="SLSQP", bounds=[(0, 1)] * n,
                   constraints=[{"type": "eq", "fun": lambda p: p.sum() - 1}],
                   options={"ftol": 1e-16, "maxiter": 1000})
    return float(np.sqrt(max(res.fun, 0.0)))
