"""Annealing paths and per-spin transverse-field profiles.

The path maps lab time t in [0, T] to the two dimensionless protocol
parameters (s, tau) by affine interpolation.  The profile maps tau (or s,
for the homogeneous protocol) to the field strength Gamma_j of each spin.
Spin indices are 1-based; spin N is the first to lose its field.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Tuple

import numpy as np

from .errors import DomainError, UnsupportedProfileError

# Field values below this are snapped to exactly zero so that "field off"
# is a crisp predicate for conservation laws and sector bookkeeping.
GAMMA_ZERO_CLAMP = 1e-15


class ProfileKind(IntEnum):
    # integer values double as codes for the compiled kernels
    RAMP = 0
    QUENCH = 1
    HOMOGENEOUS = 2


@dataclass(frozen=True)
class AnnealPath:
    """Affine schedule s(t), tau(t) over total time T with step dt."""

    s0: float = 0.1
    tau0: float = 0.1
    s1: float = 1.0
    tau1: float = 1.0
    total_time: float = 10.0
    dt: float = 0.1

    def __post_init__(self):
        for name in ("s0", "tau0", "s1", "tau1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name}={v} outside [0, 1]")
        if self.s1 < self.s0 or self.tau1 < self.tau0:
            raise DomainError("path must be monotone: s0 <= s1 and tau0 <= tau1")
        if self.total_time <= 0.0:
            raise DomainError(f"total_time={self.total_time} must be > 0")
        if not 0.0 < self.dt <= self.total_time:
            raise DomainError(f"dt={self.dt} must be in (0, total_time]")

    @property
    def n_steps(self) -> int:
        """Number of propagation steps; the last one may be shorter."""
        return max(1, int(np.ceil(self.total_time / self.dt - 1e-9)))

    def step_time(self, k: int) -> float:
        """Left endpoint of step k; step_time(n_steps) is exactly T."""
        return self.total_time if k >= self.n_steps else k * self.dt

    def at(self, t: float) -> Tuple[float, float]:
        if t < 0.0 or t > self.total_time:
            raise DomainError(f"t={t} outside [0, {self.total_time}]")
        u = t / self.total_time
        # convex combination, exact at both endpoints
        return (self.s0 * (1.0 - u) + self.s1 * u,
                self.tau0 * (1.0 - u) + self.tau1 * u)


def evaluate_path(path: AnnealPath, t: float) -> Tuple[float, float]:
    """(s, tau) at lab time t."""
    return path.at(t)


@dataclass(frozen=True)
class FieldProfile:
    """Per-spin transverse-field schedule for N spins."""

    kind: ProfileKind
    n_spins: int

    def __post_init__(self):
        if self.n_spins < 1:
            raise DomainError(f"n_spins={self.n_spins} must be >= 1")

    @staticmethod
    def ramp(n_spins: int) -> "FieldProfile":
        return FieldProfile(ProfileKind.RAMP, n_spins)

    @staticmethod
    def quench(n_spins: int) -> "FieldProfile":
        return FieldProfile(ProfileKind.QUENCH, n_spins)

    @staticmethod
    def homogeneous(n_spins: int) -> "FieldProfile":
        return FieldProfile(ProfileKind.HOMOGENEOUS, n_spins)

    def fields(self, s: float, tau: float) -> np.ndarray:
        """Array Gamma_1..Gamma_N at protocol point (s, tau)."""
        n = self.n_spins
        if self.kind == ProfileKind.HOMOGENEOUS:
            g = 1.0 - s
            if g < GAMMA_ZERO_CLAMP:
                g = 0.0
            return np.full(n, g)
        return np.array([gamma(self, j, tau) for j in range(1, n + 1)])


def gamma(profile: FieldProfile, j: int, tau: float) -> float:
    """Field strength on spin j.

    Ramp: piecewise-linear turn-off over the window
    [(N-j)/N, (N-j+1)/N]; quench: step drop at (N-j)/N (the drop point
    itself has the field off); homogeneous: 1-s with s passed in place
    of tau.
    """
    n = profile.n_spins
    if not 1 <= j <= n:
        raise DomainError(f"spin index j={j} outside 1..{n}")
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau={tau} outside [0, 1]")
    if profile.kind == ProfileKind.HOMOGENEOUS:
        g = 1.0 - tau
    elif profile.kind == ProfileKind.QUENCH:
        g = 1.0 if tau < (n - j) / n else 0.0
    else:
        lo = (n - j) / n
        if tau < lo:
            g = 1.0
        else:
            g = 1.0 - n * (tau - lo)
    if g < GAMMA_ZERO_CLAMP:
        g = 0.0
    return g


def field_off_tau(profile: FieldProfile, j: int) -> float:
    """Smallest tau at which Gamma_j vanishes."""
    n = profile.n_spins
    if not 1 <= j <= n:
        raise DomainError(f"spin index j={j} outside 1..{n}")
    if profile.kind == ProfileKind.RAMP:
        return (n - j + 1) / n
    if profile.kind == ProfileKind.QUENCH:
        return (n - j) / n
    raise UnsupportedProfileError(
        "homogeneous fields never vanish individually before s=1")


def off_breakpoints(profile: FieldProfile) -> np.ndarray:
    """All field-off tau values, ascending (spin N first)."""
    n = profile.n_spins
    if profile.kind == ProfileKind.HOMOGENEOUS:
        return np.array([])
    return np.array(sorted(field_off_tau(profile, j) for j in range(1, n + 1)))
