"""Spin-1/2 Hamiltonians: matrix-element generation and local energies.

Site values are stored as 0/1 and mapped to z-eigenvalues ``z = 1 - 2*sigma``
(+1 for 0, -1 for 1).  Two conventions are deliberately mixed, fixed by the
reference ground-state energies each model is checked against:

* transverse-field Ising uses bare Pauli matrices:
  ``H = -J sum_<ij> z_i z_j - B sum_i x_i``; the diagonal is the zz sum and
  every single-site flip connects with element ``-B``.
* Heisenberg couplings use spin-1/2 operators ``S = sigma / 2``:
  each included pair contributes ``J_k z_i z_j / 4`` to the diagonal and an
  exchange flip with element ``J_k / 2`` whenever the pair is antiparallel.

All chains and lattices are open: no bond wraps around an edge.  The
odd-sublattice sign factor belongs to the wavefunction, not to the matrix
elements, so it never appears here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np

HAMILTONIAN_KINDS = ("tfim1d", "tfim2d", "j1j2", "j1j2j3")


@dataclass(frozen=True)
class HamiltonianSpec:
    """Model kind, couplings and lattice geometry (open boundaries)."""

    kind: str
    n_sites: int
    n_x: int = 0
    n_y: int = 0
    j: float = 1.0
    b: float = 1.0
    j1: float = 1.0
    j2: float = 0.0
    j3: float = 0.0
    marshall_sign: bool = False

    def __post_init__(self):
        if self.kind not in HAMILTONIAN_KINDS:
            raise ValueError(f"unknown Hamiltonian kind {self.kind!r}")
        if self.n_sites < 2:
            raise ValueError("need at least two sites")
        if self.kind == "tfim2d":
            if self.n_x < 1 or self.n_y < 1 or self.n_x * self.n_y != self.n_sites:
                raise ValueError("tfim2d needs n_x * n_y == n_sites")

    @property
    def is_heisenberg(self) -> bool:
        return self.kind in ("j1j2", "j1j2j3")

    def zz_bonds(self) -> List[Tuple[int, int, float]]:
        """(i, j, coupling) per included pair, 0-indexed, zero couplings dropped."""
        bonds: List[Tuple[int, int, float]] = []
        n = self.n_sites
        if self.kind == "tfim1d":
            bonds = [(i, i + 1, self.j) for i in range(n - 1)]
        elif self.kind == "tfim2d":
            for row in range(self.n_y):
                for col in range(self.n_x):
                    site = row * self.n_x + col
                    if col + 1 < self.n_x:
                        bonds.append((site, site + 1, self.j))
                    if row + 1 < self.n_y:
                        bonds.append((site, site + self.n_x, self.j))
        else:
            couplings = [self.j1, self.j2] + ([self.j3] if self.kind == "j1j2j3" else [])
            for dist, jk in enumerate(couplings, start=1):
                if jk == 0.0:
                    continue
                bonds.extend((i, i + dist, jk) for i in range(n - dist))
        return bonds


@dataclass(frozen=True)
class Connection:
    """One off-diagonal matrix element <sigma|H|target>."""

    target: np.ndarray
    element: float


def lattice_map_2d(i: int, j: int, n: int) -> int:
    """Row-major 1-indexed mapping (i, j) -> (i - 1) * n + j on an n x n lattice."""
    if not (1 <= i <= n and 1 <= j <= n):
        raise ValueError(f"lattice indices out of range: ({i}, {j}) for side {n}")
    return (i - 1) * n + j


def connections(sigma: np.ndarray, spec: HamiltonianSpec) -> Tuple[float, List[Connection]]:
    """Diagonal element and all non-zero off-diagonal connections of ``sigma``."""
    sigma = np.asarray(sigma, dtype=np.int64)
    if sigma.shape != (spec.n_sites,):
        raise ValueError(f"configuration must have {spec.n_sites} sites")
    z = 1.0 - 2.0 * sigma
    conns: List[Connection] = []
    if spec.is_heisenberg:
        diagonal = 0.0
        for i, j, jk in spec.zz_bonds():
            diagonal += jk * z[i] * z[j] / 4.0
            if sigma[i] != sigma[j]:
                target = sigma.copy()
                target[i], target[j] = sigma[j], sigma[i]
                conns.append(Connection(target, jk / 2.0))
    else:
        diagonal = -spec.j * sum(z[i] * z[j] for i, j, _ in spec.zz_bonds())
        if spec.b != 0.0:
            for i in range(spec.n_sites):
                target = sigma.copy()
                target[i] = 1 - target[i]
                conns.append(Connection(target, -spec.b))
    return float(diagonal), conns


def local_energy(sigma: np.ndarray, spec: HamiltonianSpec, evaluator: Callable) -> complex:
    """E_loc = diagonal + sum over connections of element * psi(target)/psi(sigma)."""
    return complex(local_energies(np.atleast_2d(sigma), spec, evaluator)[0])


def local_energies(samples: np.ndarray, spec: HamiltonianSpec, evaluator: Callable,
                   chunk: int = 32768) -> np.ndarray:
    """Vectorized local energies of a batch.

    ``evaluator`` maps a batch of configurations to ``(log_amp, phase)``.
    All flip targets across the batch are evaluated in chunked batched
    passes, then the amplitude ratios ``exp(d log_amp + i d phase)`` are
    accumulated per owning sample.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.int64))
    n = samples.shape[0]
    la0, ph0 = evaluator(samples)

    diagonals = np.empty(n)
    owners: List[int] = []
    elements: List[float] = []
    targets: List[np.ndarray] = []
    for b in range(n):
        diag, conns = connections(samples[b], spec)
        diagonals[b] = diag
        for cn in conns:
            owners.append(b)
            elements.append(cn.element)
            targets.append(cn.target)

    eloc = diagonals.astype(complex)
    if not targets:
        return eloc

    owners_arr = np.asarray(owners)
    elements_arr = np.asarray(elements)
    stacked = np.stack(targets)
    ratios = np.empty(len(targets), dtype=complex)
    for lo in range(0, len(targets), chunk):
        hi = min(lo + chunk, len(targets))
        la1, ph1 = evaluator(stacked[lo:hi])
        d_la = la1 - la0[owners_arr[lo:hi]]
        d_ph = ph1 - ph0[owners_arr[lo:hi]]
        ratios[lo:hi] = np.exp(d_la + 1j * d_ph)

    np.add.at(eloc, owners_arr, elements_arr * ratios)
    return eloc
