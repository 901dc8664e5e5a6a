"""Shared fixtures and the independent dense oracle.

The oracle builds Hamiltonians from explicit Kronecker products of Pauli
matrices and steps trajectories with dense matrix exponentials, sharing
no code with the library's matrix-free path.
"""

import numpy as np
import pytest
import scipy.linalg

from iqasim import AnnealPath, make_deterministic_sk

SZ = np.array([[1.0, 0.0], [0.0, -1.0]])
SX = np.array([[0.0, 1.0], [1.0, 0.0]])
ID2 = np.eye(2)


def kron_site_operator(op, j, n):
    """op acting on spin j (1-based) of n spins, bit (j-1) least significant.

    With bit b of the configuration word encoding spin b+1, the full-space
    matrix is I x ... x op x ... x I with op at Kronecker slot (n-j) when
    slots are written most-significant first.
    """
    mats = [ID2] * n
    mats[n - j] = op
    out = np.array([[1.0]])
    for m in mats:
        out = np.kron(out, m)
    return out


def dense_h0(model):
    """H0 from Kronecker products (oracle construction)."""
    n = model.n_spins
    dim = 1 << n
    h = np.zeros((dim, dim))
    if hasattr(model, "couplings"):
        for j in range(1, n + 1):
            for k in range(j + 1, n + 1):
                h -= model.coupling(j, k) * (
                    kron_site_operator(SZ, j, n) @ kron_site_operator(SZ, k, n))
        for j in range(1, n + 1):
            h -= model.local_fields[j - 1] * kron_site_operator(SZ, j, n)
    else:
        mtot = sum(kron_site_operator(SZ, j, n) for j in range(1, n + 1)) / n
        h = -n * np.linalg.matrix_power(mtot, model.p)
    return h


def dense_hamiltonian_at(model, profile, s, tau):
    n = model.n_spins
    h = s * dense_h0(model)
    gam = profile.fields(s, tau)
    for j in range(1, n + 1):
        if gam[j - 1] != 0.0:
            h -= gam[j - 1] * kron_site_operator(SX, j, n)
    return h


def dense_reference_trajectory(psi0, path, profile, model, substeps=100):
    """Left-endpoint-frozen stepping with the dense exponential applied in
    dt/substeps pieces; returns per-step per-spin magnetizations."""
    n = model.n_spins
    psi = np.asarray(psi0, dtype=complex).copy()
    n_steps = path.n_steps
    sz_mats = [kron_site_operator(SZ, j, n) for j in range(1, n + 1)]
    out = np.empty((n_steps + 1, n))

    def record(i):
        for j in range(n):
            out[i, j] = np.real(psi.conj() @ (sz_mats[j] @ psi))

    record(0)
    for k in range(n_steps):
        t = k * path.dt
        dt_k = path.dt if k < n_steps - 1 else path.total_time - t
        s, tau = path.at(t)
        ham = dense_hamiltonian_at(model, profile, s, tau)
        u_sub = scipy.linalg.expm(-1j * ham * (dt_k / substeps))
        for _ in range(substeps):
            psi = u_sub @ psi
        record(k + 1)
    return out, psi


@pytest.fixture(scope="session")
def fig4_instance():
    return make_deterministic_sk("fig4", 4)


@pytest.fixture(scope="session")
def fig5_instance():
    return make_deterministic_sk("fig5", 8)


@pytest.fixture(scope="session")
def diag_path():
    """s(t) = tau(t) = t/T with T = 1 (parameter-only scans)."""
    return AnnealPath(0.0, 0.0, 1.0, 1.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def fig4_path():
    return AnnealPath(0.0, 0.0, 1.0, 1.0, 10.0, 0.1)
