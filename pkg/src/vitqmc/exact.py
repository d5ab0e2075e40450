"""Exact diagonalisation reference for chains of up to 14 spins."""
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .hamiltonian import all_configurations
from .kernels import tfim_matvec

MAX_SITES = 14
MAX_DENSE_SITES = 12
DENSE_SOLVER_SITES = 10


@dataclass
class ExactSolution:
    energy: float
    vector: np.ndarray
    gap: float
    n_sites: int

    @property
    def probabilities(self):
        return self.vector ** 2


def _guard(n, limit=MAX_SITES):
    if n > limit:
        raise ValueError(f"exact diagonalisation limited to N <= {limit}, got N={n}")


def diagonal(model):
    _guard(model.n_sites)
    return model.diagonal_energies(all_configurations(model.n_sites))


def build_dense_hamiltonian(model):
    """2^N x 2^N matrix; off-diagonal -h_x between states one spin flip apart."""
    n = model.n_sites
    _guard(n, MAX_DENSE_SITES)
    dim = 2 ** n
    H = np.diag(diagonal(model))
    idx = np.arange(dim)
    for i in range(n):
        H[idx, idx ^ (1 << i)] -= model.field
    return H


def hamiltonian_operator(model):
    diag = diagonal(model)
    n = model.n_sites
    return scipy.sparse.linalg.LinearOperator(
        (2 ** n, 2 ** n), matvec=lambda v: tfim_matvec(diag, model.field, n, np.ravel(v)), dtype=np.float64)


def ground_state(model, method="auto"):
    """Lowest eigenpair and gap; the vector is sign-fixed to be non-negative."""
    n = model.n_sites
    _guard(n)
    if method == "auto":
        method = "dense" if n <= DENSE_SOLVER_SITES else "lanczos"
    if method == "dense" or 2 ** n <= 4:
        w, v = scipy.linalg.eigh(build_dense_hamiltonian(model), subset_by_index=[0, min(1, 2 ** n - 1)])
    elif method == "lanczos":
        op = hamiltonian_operator(model)
        # positive (overlaps the ground state) but not flip-symmetric, so the odd
        # sector and hence the true first excitation stays reachable
        v0 = 1.0 + 0.5 * np.random.default_rng(0).random(2 ** n)
        try:
            w, v = scipy.sparse.linalg.eigsh(op, k=2, which="SA", v0=v0, tol=1e-12, maxiter=20000)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise RuntimeError(f"Lanczos did not converge for N={n}") from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
    else:
        raise ValueError(f"unknown method {method!r}")
    vec = v[:, 0]
    vec = vec / np.linalg.norm(vec)
    if vec.sum() < 0:
        vec = -vec
    gap = float(w[1] - w[0]) if w.shape[0] > 1 else float("nan")
    return ExactSolution(float(w[0]), vec, gap, n)


def staggered_weights(n, q):
    from .observables import phase_factors
    return phase_factors(n, q)


def exact_m_squared(solution, q):
    n = solution.n_sites
    m = all_configurations(n) @ staggered_weights(n, q) / n
    return float(np.sum(solution.probabilities * m * m))


def reduced_purity(vector, n_sites, n_a=None):
    """Tr rho_A^2 for subsystem A = first ``n_a`` sites (default N // 2)."""
    n_a = n_sites // 2 if n_a is None else n_a
    # basis index = sum bit_i 2^i, so A (low bits) is the fast axis
    mat = np.asarray(vector).reshape(2 ** (n_sites - n_a), 2 ** n_a)
    mat = mat / np.linalg.norm(mat)
    sv = np.linalg.svd(mat, compute_uv=False)
    return float(np.sum(sv ** 4))


def exact_renyi2(vector, n_sites, n_a=None):
    return float(-np.log2(reduced_purity(vector, n_sites, n_a)))


def exact_observables(solution, q, partition=None):
    return {
        "energy": solution.energy,
        "gap": solution.gap,
        "m2": exact_m_squared(solution, q),
        "renyi2": exact_renyi2(solution.vector, solution.n_sites, partition),
    }


def variational_energy(model, log_psi_all):
    """<psi|H|psi>/<psi|psi> for a full table of log-amplitudes over the basis."""
    lp = np.asarray(log_psi_all, dtype=np.float64)
    psi = np.exp(lp - lp.max())
    hpsi = tfim_matvec(diagonal(model), model.field, model.n_sites, psi)
    return float(psi @ hpsi / (psi @ psi))


# --------------------------------------------------------------------------
# disk cache keyed by the model definition

def cache_key(model):
    meta = model.metadata()
    blob = json.dumps({k: meta[k] for k in ("N", "alpha", "J", "b", "h_x", "kac_on",
                                            "distance_convention", "bond_counting", "include_self_term")},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def cached_ground_state(model, cache_dir=None):
    if cache_dir is None:
        return ground_state(model)
    path = Path(cache_dir) / f"exact_{cache_key(model)}.npz"
    if path.exists():
        with np.load(path) as f:
            return ExactSolution(float(f["energy"]), f["vector"], float(f["gap"]), int(f["n_sites"]))
    sol = ground_state(model)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, energy=sol.energy, vector=sol.vector, gap=sol.gap, n_sites=sol.n_sites)
    return sol
