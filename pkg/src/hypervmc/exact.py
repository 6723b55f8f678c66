"""Small-system ground truth: dense diagonalization, Lanczos, enumeration.

Dense diagonalization covers N <= 12 (and also returns the ground vector
for zero-variance checks).  Larger systems up to N <= 20 use Lanczos with
full reorthogonalization and explicit restarts on an implicit matvec, so the
2^N operator is never materialized.  Heisenberg chains with even N are
restricted to the Sz = 0 magnetization sector, where exchange flips close
and the antiferromagnetic ground state lives; that cuts the dimension from
2^N to C(N, N/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .ansatz import AnsatzConfig, ParameterStore, log_psi_batch
from .hamiltonians import HamiltonianSpec, local_energies

DENSE_LIMIT = 12
LANCZOS_LIMIT = 20
ENUM_LIMIT = 16


def all_configurations(n: int) -> np.ndarray:
    """All 2^n configurations, site 0 as the most significant bit."""
    return ((np.arange(2 ** n)[:, None] >> np.arange(n)[::-1]) & 1).astype(np.int64)


def configuration_index(sigmas: np.ndarray) -> np.ndarray:
    sigmas = np.atleast_2d(sigmas)
    weights = 1 << np.arange(sigmas.shape[1])[::-1]
    return sigmas @ weights


# ---------------------------------------------------------------------------
# dense path

def dense_hamiltonian(spec: HamiltonianSpec) -> np.ndarray:
    """Assemble the 2^N x 2^N symmetric operator from the connection generator."""
    if spec.n_sites > DENSE_LIMIT:
        raise ValueError(f"dense assembly capped at N <= {DENSE_LIMIT}")
    from .hamiltonians import connections

    configs = all_configurations(spec.n_sites)
    dim = configs.shape[0]
    out = np.zeros((dim, dim))
    for s in range(dim):
        diag, conns = connections(configs[s], spec)
        out[s, s] = diag
        for cn in conns:
            out[s, int(configuration_index(cn.target)[0])] += cn.element
    return out


# ---------------------------------------------------------------------------
# implicit matvec for Lanczos

def _tfim_matvec(spec: HamiltonianSpec):
    n = spec.n_sites
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)

    def z_of(site):
        return 1.0 - 2.0 * ((idx >> (n - 1 - site)) & 1)

    diag = np.zeros(dim)
    for i, j, _ in spec.zz_bonds():
        diag -= spec.j * z_of(i) * z_of(j)

    # flipping site i swaps the two halves of the middle axis in the
    # (2^i, 2, 2^(n-1-i)) view; a strided copy beats a fancy-index gather
    shapes = [(1 << i, 2, 1 << (n - 1 - i)) for i in range(n)]
    buf = np.empty(dim)

    def matvec(x):
        y = diag * x
        for shape in shapes:
            np.copyto(buf.reshape(shape), x.reshape(shape)[:, ::-1, :])
            buf_scaled = np.multiply(buf, spec.b, out=buf)
            np.subtract(y, buf_scaled, out=y)
        return y

    return matvec, dim, None


def _heisenberg_matvec(spec: HamiltonianSpec):
    n = spec.n_sites
    if n % 2:
        raise ValueError("sector-restricted Lanczos needs even N")
    idx = np.arange(1 << n, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n)[::-1]) & 1
    sector = idx[bits.sum(axis=1) == n // 2]
    lookup = np.full(1 << n, -1, dtype=np.int64)
    lookup[sector] = np.arange(sector.size)
    sbits = (sector[:, None] >> np.arange(n)[::-1]) & 1
    z = 1.0 - 2.0 * sbits

    diag = np.zeros(sector.size)
    hop_targets = []
    hop_sources = []
    hop_values = []
    for i, j, jk in spec.zz_bonds():
        diag += jk * z[:, i] * z[:, j] / 4.0
        anti = np.nonzero(sbits[:, i] != sbits[:, j])[0]
        mask = (1 << (n - 1 - i)) | (1 << (n - 1 - j))
        flipped = lookup[sector[anti] ^ mask]
        hop_sources.append(anti)
        hop_targets.append(flipped)
        hop_values.append(jk / 2.0)

    def matvec(x):
        y = diag * x
        for src, tgt, val in zip(hop_sources, hop_targets, hop_values):
            np.add.at(y, tgt, val * x[src])
        return y

    return matvec, sector.size, sector


@dataclass
class LanczosState:
    """Bookkeeping of the last Lanczos sweep (basis, tridiagonal, restarts)."""

    basis: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    alphas: np.ndarray = field(default_factory=lambda: np.empty(0))
    betas: np.ndarray = field(default_factory=lambda: np.empty(0))
    restarts: int = 0

    def orthonormality_defect(self) -> float:
        if self.basis.size == 0:
            return 0.0
        gram = self.basis @ self.basis.T
        return float(np.max(np.abs(gram - np.eye(gram.shape[0]))))


def lanczos_ground(matvec: Callable, dim: int, seed: int = 0, block: int = 80,
                   max_restarts: int = 60, tol: float = 1e-12,
                   residual_tol: float = 1e-6, v0: Optional[np.ndarray] = None
                   ) -> Tuple[float, np.ndarray, LanczosState]:
    """Restarted Lanczos with full reorthogonalization.

    Each sweep builds up to ``block`` Krylov vectors from the current start
    vector, diagonalizes the tridiagonal projection and restarts from the
    Ritz vector.  Converged when the Ritz value moves by less than ``tol``
    and the explicit residual is below ``residual_tol``; the eigenvalue
    error is quadratic in the residual, so this holds the value to ~1e-12
    times the inverse spectral gap.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim) if v0 is None else np.array(v0, dtype=np.float64)
    v /= np.linalg.norm(v)
    state = LanczosState()
    previous = np.inf
    theta, ground = np.inf, v
    for restart in range(max_restarts):
        m = min(block, dim)
        basis = np.empty((m, dim))
        alphas = np.empty(m)
        betas = np.empty(max(m - 1, 0))
        basis[0] = v
        k = m
        for j in range(m):
            w = matvec(basis[j])
            alphas[j] = basis[j] @ w
            w -= alphas[j] * basis[j]
            if j > 0:
                w -= betas[j - 1] * basis[j - 1]
            # full reorthogonalization: one classical Gram-Schmidt pass,
            # repeated only when cancellation ate most of the vector
            before = np.linalg.norm(w)
            w -= basis[: j + 1].T @ (basis[: j + 1] @ w)
            if np.linalg.norm(w) < 0.5 * before:
                w -= basis[: j + 1].T @ (basis[: j + 1] @ w)
            if j + 1 == m:
                break
            beta = np.linalg.norm(w)
            if beta < 1e-12:
                k = j + 1
                break
            betas[j] = beta
            basis[j + 1] = w / beta
        tri = np.diag(alphas[:k])
        if k > 1:
            off = np.diag(betas[: k - 1], 1)
            tri = tri + off + off.T
        evals, evecs = np.linalg.eigh(tri)
        theta = float(evals[0])
        ground = basis[:k].T @ evecs[:, 0]
        ground /= np.linalg.norm(ground)
        state = LanczosState(basis[:k], alphas[:k], betas[: k - 1], restart + 1)
        residual = np.linalg.norm(matvec(ground) - theta * ground)
        if abs(previous - theta) < tol and residual < residual_tol:
            return theta, ground, state
        previous = theta
        v = ground
    raise RuntimeError(f"Lanczos did not converge after {max_restarts} restarts")


def ground_energy(spec: HamiltonianSpec, method: str = "auto",
                  seed: int = 0, return_vector: bool = False):
    """Ground-state energy (and optionally the vector) of a small system.

    Dense for N <= 12, Lanczos on the implicit matvec up to N <= 20.  The
    Lanczos Heisenberg path works in the Sz = 0 sector; the returned vector
    is always expanded to the full 2^N basis.
    """
    n = spec.n_sites
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        if n > DENSE_LIMIT:
            raise ValueError(f"dense method capped at N <= {DENSE_LIMIT}")
        ham = dense_hamiltonian(spec)
        evals, evecs = np.linalg.eigh(ham)
        e0, psi0 = float(evals[0]), evecs[:, 0]
    elif method == "lanczos":
        if n > LANCZOS_LIMIT:
            raise ValueError(f"lanczos method capped at N <= {LANCZOS_LIMIT}")
        if spec.is_heisenberg:
            if n % 2:
                raise ValueError("odd-N Heisenberg systems need the dense method")
            matvec, dim, sector = _heisenberg_matvec(spec)
            v0 = None
        else:
            matvec, dim, sector = _tfim_matvec(spec)
            # transverse-polarized state: every amplitude equal; good overlap
            # with the ground state anywhere in the paramagnetic regime
            v0 = np.full(dim, 1.0 / np.sqrt(dim))
        e0, vec, _ = lanczos_ground(matvec, dim, seed=seed, v0=v0)
        if sector is not None:
            psi0 = np.zeros(1 << n)
            psi0[sector] = vec
        else:
            psi0 = vec
    else:
        raise ValueError(f"unknown method {method!r}")
    if return_vector:
        return e0, psi0
    return e0


# ---------------------------------------------------------------------------
# ansatz-side oracles

def enumerate_probabilities(config: AnsatzConfig, store: ParameterStore):
    """Exhaustive (configs, P, phi) table of an ansatz; N capped for memory."""
    if config.n_sites > ENUM_LIMIT:
        raise ValueError(f"enumeration capped at N <= {ENUM_LIMIT}")
    configs = all_configurations(config.n_sites)
    log_amp, phase = log_psi_batch(config, store.tensors, configs)
    return configs, np.exp(2.0 * log_amp), phase


def exact_expectation(config: AnsatzConfig, store: ParameterStore,
                      spec: HamiltonianSpec) -> complex:
    """Energy of the ansatz summed over the full basis (no sampling noise)."""
    configs, probs, _ = enumerate_probabilities(config, store)

    def evaluator(sigmas):
        return log_psi_batch(config, store.tensors, sigmas)

    eloc = local_energies(configs, spec, evaluator)
    return complex(np.sum(probs * eloc))


def variational_gap(config: AnsatzConfig, store: ParameterStore,
                    spec: HamiltonianSpec, e0: Optional[float] = None) -> float:
    """E(theta) - E0; non-negative up to roundoff by the variational principle."""
    if e0 is None:
        e0 = ground_energy(spec)
    energy = exact_expectation(config, store, spec)
    return float(energy.real - e0)


class TableWavefunction:
    """Lookup-table wavefunction over the full basis, with the evaluator interface.

    Wraps a real ground-state vector: amplitudes from |psi|, phases 0 or pi
    by sign.  Used to inject the exact ground state into the VMC estimators
    for zero-variance checks.
    """

    def __init__(self, psi: np.ndarray, n_sites: int):
        psi = np.asarray(psi, dtype=np.float64)
        if psi.shape != (1 << n_sites,):
            raise ValueError("table size must be 2^N")
        norm = np.linalg.norm(psi)
        self.psi = psi / norm
        self.n_sites = n_sites

    def evaluate(self, sigmas) -> Tuple[np.ndarray, np.ndarray]:
        amp = self.psi[configuration_index(np.atleast_2d(sigmas))]
        log_amp = np.log(np.maximum(np.abs(amp), 1e-300))
        phase = np.where(amp < 0, np.pi, 0.0)
        return log_amp, phase

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        probs = self.psi ** 2
        draws = rng.choice(probs.size, size=n, p=probs)
        return all_configurations(self.n_sites)[draws]
