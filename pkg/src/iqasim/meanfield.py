"""Static saddle-point solutions and recursive mean-field dynamics of the
ferromagnetic p-spin model under any field profile.

The static layer solves the self-consistency pair

    h = p*s*m^(p-1),    m = <sigma^z>(h)

where the right-hand side is either the step-field specialization
(weights 1-tau and tau for driven and frozen spins) or the average over
an explicit per-spin field array.  The zero-temperature free-energy
density selects the physical branch when several solutions coexist.

The dynamic layer advances N independent 2x2 spinors, each under
-h(t)*sigma^z - Gamma_j*sigma^x with h(t) = p*s(t)*m(t)^(p-1) evaluated
at the left endpoint of every step and the per-spin propagator applied
in closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .errors import DomainError, IntegratorError
from .models import PSpinModel
from .schedules import AnnealPath, FieldProfile, ProfileKind

RESIDUAL_TOL = 1e-10
_SCAN_POINTS = 2001


@dataclass(frozen=True)
class SaddlePointQuery:
    s: float
    tau: float
    p: int = 3
    beta: float = math.inf

    def __post_init__(self):
        if not (0.0 <= self.s <= 1.0 and 0.0 <= self.tau <= 1.0):
            raise DomainError(f"(s, tau)=({self.s}, {self.tau}) outside the unit square")
        if self.p < 1:
            raise DomainError(f"p={self.p} must be >= 1")
        if not self.beta > 0.0:
            raise DomainError(f"beta={self.beta} must be positive (inf allowed)")


@dataclass(frozen=True)
class SaddleSolution:
    m: float
    h: float
    f: float
    residual: float


def _log2cosh(x):
    x = np.abs(x)
    return x + np.log1p(np.exp(-2.0 * x))


def _rhs_and_f_terms(q: SaddlePointQuery, gammas: Optional[np.ndarray]):
    """Self-consistency map m(h) and the single-spin free-energy term.

    Both callables broadcast over arrays of h so the grid scan is one
    vectorized evaluation.
    """
    beta = q.beta
    if gammas is None:
        tau = q.tau
        if math.isinf(beta):
            def rhs(h):
                return ((1.0 - tau) * h / np.sqrt(h * h + 1.0)
                        + tau * np.sign(h))

            def fspin(h):
                return (1.0 - tau) * np.sqrt(h * h + 1.0) + tau * np.abs(h)
        else:
            def rhs(h):
                r = np.sqrt(h * h + 1.0)
                return ((1.0 - tau) * h / r * np.tanh(beta * r)
                        + tau * np.tanh(beta * h))

            def fspin(h):
                r = np.sqrt(h * h + 1.0)
                return ((1.0 - tau) * _log2cosh(beta * r)
                        + tau * _log2cosh(beta * h)) / beta
    else:
        g = np.asarray(gammas, dtype=float)
        if math.isinf(beta):
            def rhs(h):
                r = np.sqrt(np.multiply.outer(h, np.ones_like(g)) ** 2 + g * g)
                hcol = np.multiply.outer(h, np.ones_like(g))
                t = np.divide(hcol, r, out=np.zeros_like(r), where=r > 0.0)
                return t.mean(axis=-1)

            def fspin(h):
                r = np.sqrt(np.multiply.outer(h, np.ones_like(g)) ** 2 + g * g)
                return r.mean(axis=-1)
        else:
            def rhs(h):
                hcol = np.multiply.outer(h, np.ones_like(g))
                r = np.sqrt(hcol ** 2 + g * g)
                t = np.divide(hcol, r, out=np.zeros_like(r), where=r > 0.0)
                return (t * np.tanh(beta * r)).mean(axis=-1)

            def fspin(h):
                hcol = np.multiply.outer(h, np.ones_like(g))
                return _log2cosh(beta * np.sqrt(hcol ** 2 + g * g)
                                 ).mean(axis=-1) / beta
    return rhs, fspin


def solve_saddle_branches(q: SaddlePointQuery,
                          gammas: Optional[Sequence[float]] = None
                          ) -> List[SaddleSolution]:
    """All self-consistent (m, h, f) branches, sorted by free energy.

    The map is scanned on a dense m-grid over [0, 1]; every bracketed
    fixed point is polished by bisection.  m = 0 is checked explicitly
    because sgn(0) = 0 makes it an exact fixed point that no sign change
    brackets.
    """
    if gammas is not None:
        gammas = np.asarray(gammas, dtype=float)
    rhs, fspin = _rhs_and_f_terms(q, gammas)
    s, p = q.s, q.p

    def gap(m):
        return float(rhs(np.float64(p * s * m ** (p - 1)))) - m

    roots = []
    if abs(gap(0.0)) < 1e-12:
        roots.append(0.0)
    grid = np.linspace(0.0, 1.0, _SCAN_POINTS)
    vals = rhs(p * s * grid ** (p - 1)) - grid
    for i in range(len(grid) - 1):
        a, b = grid[i], grid[i + 1]
        ga, gb = vals[i], vals[i + 1]
        if i > 0 and ga == 0.0:
            roots.append(a)
            continue
        if ga * gb < 0.0:
            for _ in range(200):
                mid = 0.5 * (a + b)
                gm = gap(mid)
                if gm == 0.0 or (b - a) < 1e-15:
                    break
                if ga * gm < 0.0:
                    b = mid
                else:
                    a, ga = mid, gm
            roots.append(0.5 * (a + b))
    if vals[-1] == 0.0:
        roots.append(1.0)
    if not roots:
        raise IntegratorError(
            f"saddle scan found no fixed point at (s={s}, tau={q.tau})")

    sols = []
    for m in sorted(set(round(r, 12) for r in roots)):
        h = p * s * m ** (p - 1)
        res = abs(float(rhs(np.float64(h))) - m)
        if res >= RESIDUAL_TOL:
            continue
        f = -s * m ** p + h * m - float(fspin(np.float64(h)))
        sols.append(SaddleSolution(float(m), float(h), float(f), float(res)))
    sols.sort(key=lambda sol: (sol.f, sol.m))
    return sols


def solve_saddle(q: SaddlePointQuery,
                 gammas: Optional[Sequence[float]] = None) -> SaddleSolution:
    """Minimal-free-energy saddle-point solution."""
    return solve_saddle_branches(q, gammas)[0]


@dataclass
class MeanFieldState:
    """Product state of N spinors a_j|up> + b_j|down> plus the mean field."""

    t: float
    a: np.ndarray
    b: np.ndarray
    h: float

    @property
    def n_spins(self) -> int:
        return len(self.a)

    def magnetizations(self) -> np.ndarray:
        return np.abs(self.a) ** 2 - np.abs(self.b) ** 2

    def mean_mz(self) -> float:
        return float(np.mean(self.magnetizations()))

    def norms(self) -> np.ndarray:
        return np.abs(self.a) ** 2 + np.abs(self.b) ** 2


def _ground_spinor(h: float, g: float) -> Tuple[complex, complex]:
    """Normalized ground state of -h*sigma^z - g*sigma^x."""
    if g == 0.0:
        if h == 0.0:
            warnings.warn("degenerate single-spin ground state (h=0, Gamma=0); "
                          "picking |up>", stacklevel=3)
            return 1.0 + 0.0j, 0.0j
        return (1.0 + 0.0j, 0.0j) if h > 0.0 else (0.0j, 1.0 + 0.0j)
    r = math.hypot(h, g)
    rmh = g * g / (r + h) if h > 0.0 else r - h
    nrm = math.hypot(g, rmh)
    return g / nrm + 0.0j, rmh / nrm + 0.0j


def initial_product_state(q: SaddlePointQuery,
                          profile: FieldProfile) -> MeanFieldState:
    """Thermodynamic ground state at (s, tau): each spin in the ground
    state of -h*sigma^z - Gamma_j*sigma^x with the self-consistent h."""
    if not math.isinf(q.beta):
        raise DomainError("initial product state is defined at beta=inf")
    gam = profile.fields(q.s, q.tau)
    sol = solve_saddle(q, gammas=gam)
    n = profile.n_spins
    a = np.empty(n, dtype=np.complex128)
    b = np.empty(n, dtype=np.complex128)
    for i in range(n):
        a[i], b[i] = _ground_spinor(sol.h, gam[i])
    return MeanFieldState(t=0.0, a=a, b=b, h=sol.h)


def step(state: MeanFieldState, s: float, gammas: Sequence[float],
         dt: float, p: int = 3) -> MeanFieldState:
    """One left-endpoint step: m and h from the current state, then each
    spin rotated by the exact 2x2 propagator over dt."""
    gam = np.asarray(gammas, dtype=float)
    m = state.mean_mz()
    h = p * s * m ** (p - 1)
    w = np.hypot(h, gam)
    th = w * dt
    cs = np.cos(th)
    sn = np.where(w > 0.0, np.divide(np.sin(th), w, out=np.full_like(w, dt),
                                     where=w > 0.0), dt)
    a = (cs + 1j * h * sn) * state.a + 1j * gam * sn * state.b
    b = 1j * gam * sn * state.a + (cs - 1j * h * sn) * state.b
    return MeanFieldState(t=state.t + dt, a=a, b=b, h=h)


@dataclass
class MagnetizationTrajectory:
    t: np.ndarray
    m_z: np.ndarray
    energy_density: np.ndarray
    final_mz: float
    norm_drift: float


def _sample_steps(n_steps: int, stride: int) -> np.ndarray:
    ks = list(range(0, n_steps, stride))
    ks.append(n_steps)
    return np.asarray(ks, dtype=np.int64)


def run_meanfield(path: AnnealPath, profile: FieldProfile, model: PSpinModel,
                  stride: Optional[int] = None,
                  initial_state: Optional[MeanFieldState] = None
                  ) -> MagnetizationTrajectory:
    """Evolve the mean-field state along the path and record m^z(t) and
    the energy-density proxy -m^p."""
    if profile.n_spins != model.n_spins:
        raise DomainError(f"profile N={profile.n_spins} != model N={model.n_spins}")
    n_steps = path.n_steps
    if stride is None:
        stride = max(1, int(math.ceil(n_steps / 2000)))
    s0, tau0 = path.at(0.0)
    if initial_state is None:
        initial_state = initial_product_state(
            SaddlePointQuery(s0, tau0, model.p), profile)
    a = initial_state.a.astype(np.complex128, copy=True)
    b = initial_state.b.astype(np.complex128, copy=True)
    sample_steps = _sample_steps(n_steps, stride)
    out_m = np.empty(len(sample_steps))
    drift = _kernels.meanfield_run(
        a, b, int(profile.kind), profile.n_spins,
        path.s0, path.tau0, path.s1, path.tau1,
        path.total_time, path.dt, model.p, n_steps, sample_steps, out_m)
    if drift > 1e-9:
        raise IntegratorError(f"mean-field norm drift {drift:.3e} exceeds 1e-9")
    t = np.where(sample_steps >= n_steps, path.total_time,
                 sample_steps * path.dt)
    return MagnetizationTrajectory(
        t=t, m_z=out_m, energy_density=-out_m ** model.p,
        final_mz=float(out_m[-1]), norm_drift=float(drift))


def ground_state_reference_curve(path: AnnealPath, profile: FieldProfile,
                                 model: PSpinModel, n_points: int = 201
                                 ) -> List[Tuple[float, float]]:
    """Instantaneous-ground-state magnetization along the path.

    Ramp and quench use the step-field thermodynamic weights (the
    large-N limit of both profiles); the homogeneous profile uses its
    uniform field 1-s directly.
    """
    out = []
    for t in np.linspace(0.0, path.total_time, n_points):
        s, tau = path.at(float(t))
        q = SaddlePointQuery(s, tau, model.p)
        if profile.kind == ProfileKind.HOMOGENEOUS:
            sol = solve_saddle(q, gammas=np.array([1.0 - s]))
        else:
            sol = solve_saddle(q)
        out.append((float(t), sol.m))
    return out
