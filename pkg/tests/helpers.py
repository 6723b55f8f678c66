"""Shared test oracles, independent of the package's own assembly paths."""

import numpy as np

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
IDENT = np.eye(2)


def _site_op(op, site, n):
    out = np.array([[1.0]])
    for k in range(n):
        out = np.kron(out, op if k == site else IDENT)
    return out


def dense_from_kron(spec):
    """Build the dense operator directly from Pauli kron products.

    Site 0 is the most significant bit, matching the package's encoding of
    configurations as big-endian bit strings.
    """
    n = spec.n_sites
    dim = 2 ** n
    ham = np.zeros((dim, dim), dtype=complex)
    if spec.is_heisenberg:
        for i, j, jk in spec.zz_bonds():
            for op in (PAULI_X, PAULI_Y, PAULI_Z):
                ham += (jk / 4.0) * _site_op(op, i, n) @ _site_op(op, j, n)
    else:
        for i, j, _ in spec.zz_bonds():
            ham += -spec.j * _site_op(PAULI_Z, i, n) @ _site_op(PAULI_Z, j, n)
        for i in range(n):
            ham += -spec.b * _site_op(PAULI_X, i, n)
    assert np.max(np.abs(ham.imag)) < 1e-12
    return ham.real


def all_configs(n):
    return (np.arange(2 ** n)[:, None] >> np.arange(n)[::-1]) & 1


def config_index(sigma):
    sigma = np.atleast_2d(sigma)
    return sigma @ (1 << np.arange(sigma.shape[1])[::-1])
