"""Instantaneous spectra, frozen-spin sector bookkeeping, exact-crossing
detection, and the heuristic adiabatic-time diagnostic.

Once Gamma_j = 0 the Hamiltonian commutes with sigma_j^z, so it is
block-diagonal over the frozen spins' eigenvalue patterns.  Exact level
crossings happen only between different blocks; they are found by
tracking each level's block label along the protocol and bisecting the
inter-block energy difference wherever the ordering changes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from . import _kernels
from .errors import DomainError, UnsupportedProfileError
from .models import Model, diagonal_extremes
from .schedules import AnnealPath, FieldProfile, ProfileKind, off_breakpoints

DENSE_FULL_DIM = 512          # full-space dense diagonalization below this
DENSE_BLOCK_DIM = 4096        # per-sector dense fallback below this
BATCH_BLOCK_DIM = 64          # per-sector batched path for tiny blocks
DEG_TOL = 1e-9                # cluster width treated as degenerate
REFINE_TAU_TOL = 1e-6

_ARPACK_SEED = 834512


@dataclass(frozen=True)
class SectorLabel:
    """Frozen-spin block: `mask` has bit (j-1) set when spin j is frozen,
    `values` has the same bit set when that spin is frozen down."""

    mask: int = 0
    values: int = 0

    def __post_init__(self):
        if self.values & ~self.mask:
            raise DomainError("frozen values defined outside the mask")

    def restrict(self, submask: int) -> "SectorLabel":
        return SectorLabel(self.mask & submask, self.values & submask)

    def frozen_spins(self) -> Tuple[int, ...]:
        return tuple(b + 1 for b in range(self.mask.bit_length())
                     if self.mask >> b & 1)

    def render(self, n_spins: int) -> str:
        out = []
        for b in range(n_spins):
            if not self.mask >> b & 1:
                out.append(".")
            else:
                out.append("d" if self.values >> b & 1 else "u")
        return "".join(out)


@dataclass
class SpectrumSlice:
    t_over_t: float
    levels: List[Tuple[float, SectorLabel]]


@dataclass
class CrossingEvent:
    tau_bracket: Tuple[float, float]
    sector_a: SectorLabel
    sector_b: SectorLabel
    level_rank: int
    refined_tau: float
    involves_ground: bool


@dataclass
class AdiabaticBound:
    value: float
    infinite: bool
    crossing_tau: Optional[float]
    gap_min: float
    at_u: float
    h0_norm: float
    slope_sum: float


def frozen_mask(profile: FieldProfile, tau: float, n_spins: int) -> int:
    """Bit set of spins whose field is exactly off at tau (at s, for the
    homogeneous profile, which follows the gamma() convention)."""
    if n_spins != profile.n_spins:
        raise DomainError(f"n_spins={n_spins} != profile N={profile.n_spins}")
    return _mask_from_gammas(profile.fields(tau, tau))


def _mask_from_gammas(gam: np.ndarray) -> int:
    mask = 0
    for b, g in enumerate(gam):
        if g == 0.0:
            mask |= 1 << b
    return mask


def dense_hamiltonian(diag_e: np.ndarray, s: float,
                      gammas: np.ndarray) -> np.ndarray:
    """Explicit (real symmetric) matrix, for small dimensions."""
    dim = len(diag_e)
    ham = np.diag(s * diag_e)
    idx = np.arange(dim)
    for b, g in enumerate(gammas):
        if g != 0.0:
            ham[idx, idx ^ (1 << b)] = -g
    return ham


def _free_bits(mask: int, n: int) -> List[int]:
    return [b for b in range(n) if not mask >> b & 1]


def _sector_indices(mask: int, values: int, n: int) -> np.ndarray:
    """Full-space configuration words of a sector, indexed by the block's
    own free-spin word."""
    free = _free_bits(mask, n)
    cf = np.arange(1 << len(free), dtype=np.int64)
    idx = np.full(len(cf), values, dtype=np.int64)
    for i, b in enumerate(free):
        idx |= ((cf >> i) & 1) << b
    return idx


def _validate_sector(sector: SectorLabel, gammas: np.ndarray):
    for b in range(len(gammas)):
        if sector.mask >> b & 1 and gammas[b] != 0.0:
            raise DomainError(
                f"sector freezes spin {b + 1} whose field is nonzero")


def sector_spectrum(model: Model, s: float, gammas: Sequence[float],
                    sector: SectorLabel, k_levels: int,
                    diag_e: Optional[np.ndarray] = None) -> np.ndarray:
    """Lowest k eigenvalues of the block with the frozen spins clamped."""
    n = model.n_spins
    gam = np.asarray(gammas, dtype=float)
    _validate_sector(sector, gam)
    if diag_e is None:
        diag_e = model.diagonal_energies()
    idx = _sector_indices(sector.mask, sector.values, n)
    e_blk = np.ascontiguousarray(diag_e[idx])
    free = _free_bits(sector.mask, n)
    g_blk = np.ascontiguousarray(gam[free])
    dim = len(e_blk)
    if k_levels > dim:
        warnings.warn(f"k_levels={k_levels} clipped to block dimension {dim}",
                      stacklevel=2)
        k_levels = dim
    if dim <= DENSE_BLOCK_DIM:
        ham = dense_hamiltonian(e_blk, s, g_blk)
        return scipy.linalg.eigvalsh(ham)[:k_levels]
    matvec = _kernels.make_linear_operator_matvec(e_blk, s, g_blk, len(free))
    op = scipy.sparse.linalg.LinearOperator((dim, dim), matvec=matvec,
                                            dtype=np.float64)
    v0 = np.random.default_rng(_ARPACK_SEED).standard_normal(dim)
    w = scipy.sparse.linalg.eigsh(op, k=min(k_levels, dim - 1), which="SA",
                                  v0=v0, return_eigenvectors=False)
    return np.sort(w)[:k_levels]


def _full_lowest(diag_e: np.ndarray, s: float, gam: np.ndarray, n: int,
                 k: int, want_vectors: bool):
    """Lowest k eigenpairs of the full Hamiltonian."""
    dim = len(diag_e)
    k = min(k, dim)
    if dim <= DENSE_FULL_DIM or k >= dim - 2:
        ham = dense_hamiltonian(diag_e, s, gam)
        if want_vectors:
            w, v = scipy.linalg.eigh(ham, subset_by_index=[0, k - 1])
            return w, v
        return scipy.linalg.eigvalsh(ham, subset_by_index=[0, k - 1]), None
    matvec = _kernels.make_linear_operator_matvec(diag_e, s, gam, n)
    op = scipy.sparse.linalg.LinearOperator((dim, dim), matvec=matvec,
                                            dtype=np.float64)
    v0 = np.random.default_rng(_ARPACK_SEED).standard_normal(dim)
    try:
        if want_vectors:
            w, v = scipy.sparse.linalg.eigsh(op, k=k, which="SA", v0=v0)
            order = np.argsort(w)
            return w[order], v[:, order]
        w = scipy.sparse.linalg.eigsh(op, k=k, which="SA", v0=v0,
                                      return_eigenvectors=False)
        return np.sort(w), None
    except scipy.sparse.linalg.ArpackNoConvergence:
        ham = dense_hamiltonian(diag_e, s, gam)
        if want_vectors:
            return scipy.linalg.eigh(ham, subset_by_index=[0, k - 1])
        return scipy.linalg.eigvalsh(ham, subset_by_index=[0, k - 1]), None


def ground_state_vector(model: Model, s: float,
                        gammas: Sequence[float]) -> np.ndarray:
    """Lowest eigenvector of the full Hamiltonian."""
    gam = np.asarray(gammas, dtype=float)
    diag_e = model.diagonal_energies()
    _, vec = _full_lowest(diag_e, s, gam, model.n_spins, 1, True)
    return vec[:, 0]


def _frozen_keys(mask: int, n: int) -> np.ndarray:
    """Compressed frozen-bit pattern of every configuration word."""
    c = np.arange(1 << n, dtype=np.int64)
    key = np.zeros(1 << n, dtype=np.int64)
    i = 0
    for b in range(n):
        if mask >> b & 1:
            key |= ((c >> b) & 1) << i
            i += 1
    return key


def _expand_pattern(pattern: int, mask: int, n: int) -> int:
    values = 0
    i = 0
    for b in range(n):
        if mask >> b & 1:
            if pattern >> i & 1:
                values |= 1 << b
            i += 1
    return values


def _labeled_levels(diag_e: np.ndarray, s: float, gam: np.ndarray, n: int,
                    mask: int, k: int) -> List[Tuple[float, SectorLabel]]:
    """Lowest k global levels with their sector labels.

    Degenerate clusters are attributed to sectors by their total weight
    on each frozen-bit pattern (an integer per sector because the blocks
    are exact symmetry sectors).
    """
    dim = len(diag_e)
    k = min(k, dim)
    if mask == 0:
        w, _ = _full_lowest(diag_e, s, gam, n, k, False)
        return [(float(e), SectorLabel()) for e in w[:k]]
    pad = min(dim - k, 4)
    w, v = _full_lowest(diag_e, s, gam, n, k + pad, True)
    keys = _frozen_keys(mask, n)
    n_pat = 1 << int(mask).bit_count()
    scale = max(1.0, float(np.max(np.abs(w))))
    out: List[Tuple[float, SectorLabel]] = []
    i = 0
    while i < len(w) and len(out) < k:
        j = i + 1
        while j < len(w) and w[j] - w[j - 1] <= DEG_TOL * scale:
            j += 1
        tot = np.zeros(n_pat)
        for c in range(i, j):
            tot += np.bincount(keys, weights=np.abs(v[:, c]) ** 2,
                               minlength=n_pat)
        counts = np.rint(tot).astype(int)
        if np.max(np.abs(tot - counts)) > 1e-3 or counts.sum() != j - i:
            return _labeled_levels_by_sectors(diag_e, s, gam, n, mask, k)
        pos = i
        for pattern in np.flatnonzero(counts):
            lab = SectorLabel(mask, _expand_pattern(int(pattern), mask, n))
            for _ in range(counts[pattern]):
                out.append((float(w[pos]), lab))
                pos += 1
        i = j
    return out[:k]


def _labeled_levels_by_sectors(diag_e: np.ndarray, s: float, gam: np.ndarray,
                               n: int, mask: int, k: int
                               ) -> List[Tuple[float, SectorLabel]]:
    """Exact fallback: enumerate every sector's spectrum and merge."""
    levels: List[Tuple[float, SectorLabel]] = []
    kk = min(k, 1 << n)
    for pattern in range(1 << int(mask).bit_count()):
        values = _expand_pattern(pattern, mask, n)
        lab = SectorLabel(mask, values)
        idx = _sector_indices(mask, values, n)
        e_blk = np.ascontiguousarray(diag_e[idx])
        free = _free_bits(mask, n)
        ham = dense_hamiltonian(e_blk, s, gam[free])
        w = scipy.linalg.eigvalsh(ham)[:kk]
        levels.extend((float(e), lab) for e in w)
    levels.sort(key=lambda lv: (lv[0], lv[1].values))
    return levels[:kk]


def _sector_bottoms(diag_e: np.ndarray, s: float, gam: np.ndarray, n: int,
                    mask: int) -> Tuple[np.ndarray, int]:
    """Bottom eigenvalue of every sector (batched dense on tiny blocks)."""
    free = _free_bits(mask, n)
    d = 1 << len(free)
    n_pat = 1 << (n - len(free))
    hams = np.empty((n_pat, d, d))
    g_blk = gam[free]
    for pattern in range(n_pat):
        values = _expand_pattern(pattern, mask, n)
        idx = _sector_indices(mask, values, n)
        hams[pattern] = dense_hamiltonian(diag_e[idx], s, g_blk)
    bottoms = np.linalg.eigvalsh(hams)[:, 0]
    return bottoms, n_pat


def _ground_label(diag_e: np.ndarray, s: float, gam: np.ndarray, n: int,
                  mask: int) -> Tuple[float, SectorLabel]:
    """Energy and sector of the global ground level."""
    if mask == 0:
        w, _ = _full_lowest(diag_e, s, gam, n, 1, False)
        return float(w[0]), SectorLabel()
    free_dim = 1 << (n - int(mask).bit_count())
    if free_dim <= BATCH_BLOCK_DIM:
        bottoms, _ = _sector_bottoms(diag_e, s, gam, n, mask)
        pattern = int(np.argmin(bottoms))
        return (float(bottoms[pattern]),
                SectorLabel(mask, _expand_pattern(pattern, mask, n)))
    lv = _labeled_levels(diag_e, s, gam, n, mask, 1)
    return lv[0]


def protocol_grid(path: AnnealPath, profile: FieldProfile,
                  n_grid: Optional[int] = None) -> np.ndarray:
    """Normalized times t/T: uniform points plus every field-off
    breakpoint that falls inside the path's tau range."""
    if n_grid is None:
        n_grid = 40 * profile.n_spins
    us = list(np.linspace(0.0, 1.0, n_grid))
    if profile.kind != ProfileKind.HOMOGENEOUS and path.tau1 > path.tau0:
        for bp in off_breakpoints(profile):
            if path.tau0 < bp <= path.tau1:
                us.append((bp - path.tau0) / (path.tau1 - path.tau0))
    return np.unique(np.asarray(us))


def _point(path: AnnealPath, profile: FieldProfile, u: float):
    s, tau = path.at(u * path.total_time)
    gam = profile.fields(s, tau)
    return s, tau, gam, _mask_from_gammas(gam)


def lowest_levels(model: Model, path: AnnealPath, profile: FieldProfile,
                  k_levels: Optional[int] = None,
                  n_grid: Optional[int] = None) -> List[SpectrumSlice]:
    """Lowest-K sector-labeled levels on the protocol grid."""
    n = model.n_spins
    if k_levels is None:
        k_levels = min(1 << n, 10)
    diag_e = model.diagonal_energies()
    slices = []
    for u in protocol_grid(path, profile, n_grid):
        s, _, gam, mask = _point(path, profile, u)
        levels = _labeled_levels(diag_e, s, gam, n, mask, k_levels)
        slices.append(SpectrumSlice(float(u), levels))
    return slices


def _bisect_crossing(diag_e, s_of, gam_of, n, a: SectorLabel, b: SectorLabel,
                     u_lo: float, u_hi: float, d_lo: float,
                     tau_span: float) -> float:
    """Bisection on E_a(u) - E_b(u) inside one frozen-mask window."""

    def diff(u):
        s, gam = s_of(u), gam_of(u)
        ea = sector_spectrum_raw(diag_e, s, gam, n, a)
        eb = sector_spectrum_raw(diag_e, s, gam, n, b)
        return ea - eb

    lo, hi, dlo = u_lo, u_hi, d_lo
    while (hi - lo) * max(tau_span, 1e-3) > REFINE_TAU_TOL:
        mid = 0.5 * (lo + hi)
        dm = diff(mid)
        if dm == 0.0:
            return mid
        if (dm > 0.0) == (dlo > 0.0):
            lo, dlo = mid, dm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sector_spectrum_raw(diag_e: np.ndarray, s: float, gam: np.ndarray,
                        n: int, sector: SectorLabel) -> float:
    """Bottom energy of one sector (dense block)."""
    idx = _sector_indices(sector.mask, sector.values, n)
    free = _free_bits(sector.mask, n)
    ham = dense_hamiltonian(diag_e[idx], s, gam[free])
    return float(scipy.linalg.eigvalsh(ham, subset_by_index=[0, 0])[0])


def detect_crossings(model: Model, path: AnnealPath, profile: FieldProfile,
                     k_levels: Optional[int] = None,
                     n_grid: Optional[int] = None,
                     ground_only: bool = False,
                     refine: bool = True) -> List[CrossingEvent]:
    """Scan the protocol grid for inter-sector level crossings.

    A change of the ground level's sector between adjacent grid points is
    always an event; with `ground_only=False` sign changes of the
    energy difference between any two sectors visible in the lowest-K
    window are events as well.  Brackets are refined by bisection on the
    inter-sector energy difference.
    """
    n = model.n_spins
    if k_levels is None:
        k_levels = min(1 << n, 10)
    diag_e = model.diagonal_energies()
    grid = protocol_grid(path, profile, n_grid)
    tau_span = path.tau1 - path.tau0

    points = []
    for u in grid:
        s, tau, gam, mask = _point(path, profile, u)
        if mask == 0:
            # a single block: nothing to compare, and no pair scan will
            # start from this point
            points.append((float(u), float(tau), 0, SectorLabel(), {}))
            continue
        if ground_only:
            e0, lab = _ground_label(diag_e, s, gam, n, mask)
            sector_min: Dict[SectorLabel, float] = {lab: e0}
            ground = lab
        else:
            levels = _labeled_levels(diag_e, s, gam, n, mask, k_levels)
            sector_min = {}
            for e, lab in levels:
                if lab not in sector_min:
                    sector_min[lab] = e
            ground = levels[0][1]
        points.append((float(u), float(tau), mask, ground, sector_min))

    def s_of(u):
        return path.at(u * path.total_time)[0]

    def gam_of(u):
        s, tau = path.at(u * path.total_time)
        return profile.fields(s, tau)

    events: List[CrossingEvent] = []
    for (u1, tau1, mask1, g1, mins1), (u2, tau2, mask2, g2, mins2) in zip(
            points, points[1:]):
        if mask1 == 0:
            continue  # a single block: no inter-sector crossing possible
        pairs = set()
        g2r = g2.restrict(mask1)
        if g1 != g2r:
            pairs.add((g1, g2r) if g1.values < g2r.values else (g2r, g1))
        if not ground_only:
            # child sectors fold back onto the parent window's labels
            m2r: Dict[SectorLabel, float] = {}
            for lab, e in mins2.items():
                labr = lab.restrict(mask1)
                if labr not in m2r or e < m2r[labr]:
                    m2r[labr] = e
            common = [lab for lab in mins1 if lab in m2r]
            for i, la in enumerate(common):
                for lb in common[i + 1:]:
                    d1 = mins1[la] - mins1[lb]
                    d2 = m2r[la] - m2r[lb]
                    if d1 == 0.0 or d2 == 0.0:
                        continue  # degeneracy at a grid point, not a crossing
                    if (d1 > 0.0) != (d2 > 0.0):
                        pairs.add((la, lb) if la.values < lb.values
                                  else (lb, la))
        for la, lb in sorted(pairs, key=lambda ab: (ab[0].values,
                                                    ab[1].values)):
            if la == lb:
                continue
            d1 = sector_spectrum_raw(diag_e, s_of(u1), gam_of(u1), n, la) \
                - sector_spectrum_raw(diag_e, s_of(u1), gam_of(u1), n, lb)
            if refine:
                u_star = _bisect_crossing(diag_e, s_of, gam_of, n, la, lb,
                                          u1, u2, d1, tau_span)
            else:
                u_star = 0.5 * (u1 + u2)
            tau_star = path.at(u_star * path.total_time)[1]
            if ground_only:
                rank, involves_ground = 0, True
            else:
                s_star, _, gam_star, mask_star = _point(path, profile, u_star)
                e_star = min(
                    sector_spectrum_raw(diag_e, s_star, gam_star, n, la),
                    sector_spectrum_raw(diag_e, s_star, gam_star, n, lb))
                levels = _labeled_levels(diag_e, s_star, gam_star, n,
                                         mask_star, k_levels)
                scale = max(1.0, abs(levels[0][0]))
                rank = sum(1 for e, _ in levels if e < e_star - 1e-8 * scale)
                involves_ground = rank == 0
            events.append(CrossingEvent(
                tau_bracket=(tau1, tau2), sector_a=la, sector_b=lb,
                level_rank=rank, refined_tau=float(tau_star),
                involves_ground=involves_ground))
    events.sort(key=lambda ev: (ev.refined_tau, ev.sector_a.values,
                                ev.sector_b.values))
    return events


def adiabatic_bound(model: Model, path: AnnealPath, profile: FieldProfile,
                    n_grid: Optional[int] = None) -> AdiabaticBound:
    """max over the grid of (||H0|| + sum_j |dGamma_j/ds|) / gap^2.

    Exact crossings make the bound meaningless; any detected ground
    crossing (or a vanishing grid gap) returns the infinite marker.
    """
    n = model.n_spins
    if profile.kind == ProfileKind.QUENCH:
        raise UnsupportedProfileError(
            "the sudden quench has no finite field slope")
    summary = diagonal_extremes(model)
    h0_norm = max(abs(summary.e_min), abs(summary.e_max))
    if profile.kind == ProfileKind.HOMOGENEOUS:
        slope_sum = float(n)
    else:
        if path.s1 == path.s0:
            raise DomainError("bound needs a path with ds != 0")
        slope_sum = n * (path.tau1 - path.tau0) / (path.s1 - path.s0)
    events = detect_crossings(model, path, profile, ground_only=True,
                              n_grid=n_grid)
    if events:
        return AdiabaticBound(math.inf, True, events[0].refined_tau,
                              0.0, math.nan, h0_norm, slope_sum)
    diag_e = model.diagonal_energies()
    best, best_u, gap_min = 0.0, 0.0, math.inf
    for u in protocol_grid(path, profile, n_grid):
        s, tau, gam, _ = _point(path, profile, u)
        w, _ = _full_lowest(diag_e, s, gam, n, 2, False)
        gap = float(w[1] - w[0]) if len(w) > 1 else math.inf
        gap_min = min(gap_min, gap)
        if gap < 1e-12:
            return AdiabaticBound(math.inf, True, tau, gap, float(u),
                                  h0_norm, slope_sum)
        val = (h0_norm + slope_sum) / gap ** 2
        if val > best:
            best, best_u = val, float(u)
    return AdiabaticBound(best, False, None, gap_min, best_u, h0_norm,
                          slope_sum)
