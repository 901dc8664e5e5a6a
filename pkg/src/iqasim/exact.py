"""Exact Schrödinger dynamics of the full annealing Hamiltonian

    H(s, tau) = s*H0 - sum_j Gamma_j(tau) sigma_j^x

on the 2^N state vector, matrix-free.  Each step freezes the Hamiltonian
at its left endpoint and applies the exponential by a truncated Taylor
series with substeps bounding the spectral radius, then renormalizes, so
the time step is the only accuracy knob.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import CapacityError, DomainError, IntegratorError
from .models import Model, diagonal_extremes
from .schedules import AnnealPath, FieldProfile, ProfileKind, field_off_tau, gamma

MAX_PROPAGATION_SPINS = 24
EXPM_TOL = 1e-14


@dataclass
class WaveFunction:
    n_spins: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.n_spins > MAX_PROPAGATION_SPINS:
            raise CapacityError(
                f"N={self.n_spins} exceeds the propagation cap "
                f"(N <= {MAX_PROPAGATION_SPINS})")
        self.amplitudes = np.ascontiguousarray(self.amplitudes,
                                               dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_spins,):
            raise DomainError(
                f"expected {1 << self.n_spins} amplitudes, "
                f"got {self.amplitudes.shape}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @staticmethod
    def all_plus_x(n_spins: int) -> "WaveFunction":
        dim = 1 << n_spins
        return WaveFunction(n_spins, np.full(dim, dim ** -0.5,
                                             dtype=np.complex128))

    @staticmethod
    def basis_state(n_spins: int, config: int) -> "WaveFunction":
        amp = np.zeros(1 << n_spins, dtype=np.complex128)
        amp[config] = 1.0
        return WaveFunction(n_spins, amp)


def apply_hamiltonian(psi: WaveFunction, model: Model, s: float,
                      gammas: np.ndarray,
                      diag_e: Optional[np.ndarray] = None) -> np.ndarray:
    """H(s, Gamma) acting on psi; no matrix is materialized."""
    n = psi.n_spins
    if model.n_spins != n:
        raise DomainError(f"model N={model.n_spins} != state N={n}")
    gam = np.ascontiguousarray(gammas, dtype=float)
    if gam.shape != (n,):
        raise DomainError(f"expected {n} field values, got {gam.shape}")
    if diag_e is None:
        diag_e = model.diagonal_energies()
    out = np.empty_like(psi.amplitudes)
    _kernels.h_matvec(out, psi.amplitudes, diag_e, s, gam, n)
    return out


def magnetizations(psi: WaveFunction) -> np.ndarray:
    """Per-spin <sigma_j^z>, spin 1 first."""
    return np.array([_kernels.magnetization_bit(psi.amplitudes, b)
                     for b in range(psi.n_spins)])


def expected_h0(psi: WaveFunction, model: Model,
                diag_e: Optional[np.ndarray] = None) -> float:
    if diag_e is None:
        diag_e = model.diagonal_energies()
    return float(_kernels.diag_expect(psi.amplitudes, diag_e))


def energy_fraction(psi: WaveFunction, model: Model,
                    diag_e: Optional[np.ndarray] = None) -> float:
    """(<H0> - E_min) / (E_max - E_min), the spectral-width fraction."""
    summary = diagonal_extremes(model)
    width = summary.e_max - summary.e_min
    if width == 0.0:
        raise DomainError("H0 has zero spectral width; fraction undefined")
    return (expected_h0(psi, model, diag_e) - summary.e_min) / width


@dataclass
class ExactTrajectory:
    t: np.ndarray                 # sample times
    m: np.ndarray                 # (n_samples, N) per-spin magnetizations
    h0: np.ndarray                # <H0> at the samples
    freeze_times: np.ndarray      # per spin; nan if the field never turns off
    freeze_values: np.ndarray     # m_j^z at the freeze time; nan if none
    norm_drift: float

    @property
    def final_h0(self) -> float:
        return float(self.h0[-1])


def _freeze_steps(path: AnnealPath, profile: FieldProfile):
    """First step index at which each spin's field is off, or -1."""
    n = profile.n_spins
    n_steps = path.n_steps
    steps = np.full(n, -1, dtype=np.int64)
    times = np.full(n, np.nan)
    if profile.kind == ProfileKind.HOMOGENEOUS:
        return steps, times
    for j in range(1, n + 1):
        tau_off = field_off_tau(profile, j)
        if path.tau1 < tau_off and gamma(profile, j, path.tau1) != 0.0:
            continue
        if gamma(profile, j, path.tau0) == 0.0:
            k = 0
        else:
            u_off = (tau_off - path.tau0) / (path.tau1 - path.tau0)
            k = int(math.ceil(u_off * path.total_time / path.dt - 1e-12))
            k = min(max(k, 0), n_steps)
            # float-safe adjustment around the breakpoint
            while k > 0 and gamma(profile, j, path.at(path.step_time(k - 1))[1]) == 0.0:
                k -= 1
            while k <= n_steps and gamma(profile, j, path.at(path.step_time(k))[1]) != 0.0:
                k += 1
            if k > n_steps:
                continue
        steps[j - 1] = k
        times[j - 1] = path.step_time(k)
    return steps, times


def initial_state(model: Model, path: AnnealPath,
                  profile: FieldProfile) -> WaveFunction:
    """Ground state of H(s(0), tau(0)).

    The (0, 0) corner is the all-+x product state, built analytically;
    nonzero starts fall back to the sector-aware ground-state solver.
    """
    s0, tau0 = path.at(0.0)
    gam0 = profile.fields(s0, tau0)
    if s0 == 0.0 and np.all(gam0 == 1.0):
        return WaveFunction.all_plus_x(model.n_spins)
    from .spectrum import ground_state_vector
    vec = ground_state_vector(model, s0, gam0)
    return WaveFunction(model.n_spins, vec.astype(np.complex128))


def propagate(psi: WaveFunction, path: AnnealPath, profile: FieldProfile,
              model: Model, stride: Optional[int] = None,
              tol: float = EXPM_TOL) -> ExactTrajectory:
    """Advance psi from t=0 to t=T, recording per-spin magnetizations and
    <H0> every `stride` steps and logging each spin's frozen value at its
    field-off time."""
    n = model.n_spins
    if profile.n_spins != n or psi.n_spins != n:
        raise DomainError("inconsistent N across state, profile, and model")
    diag_e = model.diagonal_energies()
    e_abs_max = float(np.max(np.abs(diag_e)))
    n_steps = path.n_steps
    if stride is None:
        stride = max(1, int(math.ceil(n_steps / 2000)))
    ks = list(range(0, n_steps, stride))
    ks.append(n_steps)
    sample_steps = np.asarray(ks, dtype=np.int64)
    freeze_steps, freeze_times = _freeze_steps(path, profile)

    amps = psi.amplitudes.copy()
    out_m = np.empty((len(sample_steps), n))
    out_e = np.empty(len(sample_steps))
    out_frozen = np.full(n, np.nan)
    gam = np.empty(n)
    acc = np.empty_like(amps)
    term = np.empty_like(amps)
    tmp = np.empty_like(amps)
    drift = _kernels.exact_run(
        amps, diag_e, e_abs_max, n, int(profile.kind),
        path.s0, path.tau0, path.s1, path.tau1,
        path.total_time, path.dt, n_steps, tol,
        sample_steps, freeze_steps, out_m, out_e, out_frozen,
        gam, acc, term, tmp)
    if drift < 0.0:
        raise IntegratorError(
            "exponential-action series did not converge; "
            "check dt and the Hamiltonian scale")
    if drift > 1e-9:
        raise IntegratorError(f"norm drift {drift:.3e} exceeds 1e-9")
    psi.amplitudes = amps
    t = np.where(sample_steps >= n_steps, path.total_time,
                 sample_steps * path.dt)
    return ExactTrajectory(t=t, m=out_m, h0=out_e,
                           freeze_times=freeze_times,
                           freeze_values=out_frozen,
                           norm_drift=float(drift))
