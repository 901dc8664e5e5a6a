"""Diagonal target Hamiltonians: the ferromagnetic p-spin model and
two-local instances with fields (SK form).

Basis convention used everywhere in this package: a configuration is an
integer word whose bit (j-1) encodes spin j, with bit value 0 meaning
sigma_j = +1 (up) and bit value 1 meaning sigma_j = -1 (down).  The
all-up configuration is 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import CapacityError, DomainError

# Exhaustive 2^N scans refuse anything bigger than this.
MAX_ENUM_SPINS = 24
_ENUM_CHUNK = 1 << 18


def spin_values(configs, j: int):
    """sigma_j = +-1 for configuration word(s); j is 1-based."""
    return 1 - 2 * ((np.asarray(configs) >> (j - 1)) & 1)


def config_from_spins(spins) -> int:
    """Pack a +-1 sequence (spin 1 first) into a configuration word."""
    word = 0
    for i, sig in enumerate(spins):
        if sig == -1:
            word |= 1 << i
        elif sig != 1:
            raise DomainError(f"spin value {sig} is not +-1")
    return word


def _as_config(config, n: int) -> int:
    if isinstance(config, (int, np.integer)):
        c = int(config)
        if not 0 <= c < (1 << n):
            raise DomainError(f"configuration {c} outside 0..2^{n}-1")
        return c
    seq = list(config)
    if len(seq) != n:
        raise DomainError(f"configuration length {len(seq)} != n_spins {n}")
    return config_from_spins(seq)


@dataclass(frozen=True)
class PSpinModel:
    """H0 = -N * m^p with m the average sigma^z magnetization."""

    n_spins: int
    p: int = 3

    def __post_init__(self):
        if self.n_spins < 1:
            raise DomainError(f"n_spins={self.n_spins} must be >= 1")
        if self.p < 1:
            raise DomainError(f"p={self.p} must be >= 1")

    def energy(self, config) -> float:
        c = _as_config(config, self.n_spins)
        n = self.n_spins
        m = (n - 2 * int(c).bit_count()) / n
        return -n * m ** self.p

    def diagonal_energies(self) -> np.ndarray:
        n = self.n_spins
        _check_enum_capacity(n)
        c = np.arange(1 << n, dtype=np.int64)
        pop = np.zeros(1 << n, dtype=np.int64)
        for b in range(n):
            pop += (c >> b) & 1
        m = (n - 2 * pop) / n
        return -n * m ** self.p


@dataclass(frozen=True)
class SkInstance:
    """Two-local Hamiltonian -sum_{j<k} J_jk z_j z_k - sum_j h_j z_j.

    Couplings are stored flat in (j, k) lexicographic order with j < k,
    both 1-based.
    """

    n_spins: int
    couplings: np.ndarray
    local_fields: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        n = self.n_spins
        object.__setattr__(self, "couplings",
                           np.asarray(self.couplings, dtype=float))
        object.__setattr__(self, "local_fields",
                           np.asarray(self.local_fields, dtype=float))
        if self.couplings.shape != (n * (n - 1) // 2,):
            raise DomainError(
                f"expected {n*(n-1)//2} couplings, got {self.couplings.shape}")
        if self.local_fields.shape != (n,):
            raise DomainError(
                f"expected {n} local fields, got {self.local_fields.shape}")

    def coupling_matrix(self) -> np.ndarray:
        """Full symmetric J with zero diagonal."""
        n = self.n_spins
        mat = np.zeros((n, n))
        idx = np.triu_indices(n, k=1)
        mat[idx] = self.couplings
        return mat + mat.T

    def pair_index(self, j: int, k: int) -> int:
        n = self.n_spins
        if not 1 <= j < k <= n:
            raise DomainError(f"need 1 <= j < k <= {n}, got ({j}, {k})")
        j0, k0 = j - 1, k - 1
        return j0 * n - j0 * (j0 + 1) // 2 + (k0 - j0 - 1)

    def coupling(self, j: int, k: int) -> float:
        if j > k:
            j, k = k, j
        return float(self.couplings[self.pair_index(j, k)])

    def energy(self, config) -> float:
        c = _as_config(config, self.n_spins)
        z = spin_values(c, np.arange(1, self.n_spins + 1))
        jmat = self.coupling_matrix()
        return float(-0.5 * z @ jmat @ z - self.local_fields @ z)

    def diagonal_energies(self) -> np.ndarray:
        n = self.n_spins
        _check_enum_capacity(n)
        c = np.arange(1 << n, dtype=np.int64)
        z = np.empty((n, 1 << n))
        for b in range(n):
            z[b] = 1 - 2 * ((c >> b) & 1)
        jmat = self.coupling_matrix()
        e = -0.5 * np.einsum("ic,ij,jc->c", z, jmat, z)
        e -= self.local_fields @ z
        return e

    def to_json(self) -> str:
        entries = []
        for j in range(1, self.n_spins + 1):
            for k in range(j + 1, self.n_spins + 1):
                entries.append([j, k, self.coupling(j, k)])
        doc = {"n": self.n_spins, "seed": self.seed, "J": entries,
               "h": self.local_fields.tolist()}
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "SkInstance":
        doc = json.loads(text)
        n = int(doc["n"])
        inst = SkInstance(n, np.zeros(n * (n - 1) // 2), np.asarray(doc["h"]),
                          seed=doc.get("seed"))
        coup = inst.couplings
        for j, k, v in doc["J"]:
            coup[inst.pair_index(int(j), int(k))] = float(v)
        return inst


Model = Union[PSpinModel, SkInstance]


@dataclass(frozen=True)
class DiagonalSpectrumSummary:
    e_min: float
    e_max: float
    argmin_config: int


def classical_energy(model: Model, config) -> float:
    """Diagonal matrix element of H0 for a sigma^z configuration."""
    return model.energy(config)


def make_deterministic_sk(kind: str, n_spins: int) -> SkInstance:
    """The two fixed reproducibility instances.

    fig4 (N=4): J_jk = cos(j^4) + cos(k^4), h_j = cos(j^2).
    fig5 (N=8): J_jk = cos(j^5 + k^5)/2, h_j = cos(j).
    Indices 1-based, arguments in radians.
    """
    kind = kind.lower()
    if kind == "fig4":
        if n_spins != 4:
            raise DomainError(f"fig4 instance requires N=4, got {n_spins}")
        jfun = lambda j, k: math.cos(j ** 4) + math.cos(k ** 4)
        hfun = lambda j: math.cos(j ** 2)
    elif kind == "fig5":
        if n_spins != 8:
            raise DomainError(f"fig5 instance requires N=8, got {n_spins}")
        jfun = lambda j, k: math.cos(j ** 5 + k ** 5) / 2
        hfun = lambda j: math.cos(j)
    else:
        raise DomainError(f"unknown deterministic instance kind {kind!r}")
    coup = [jfun(j, k)
            for j in range(1, n_spins + 1) for k in range(j + 1, n_spins + 1)]
    h = [hfun(j) for j in range(1, n_spins + 1)]
    return SkInstance(n_spins, np.array(coup), np.array(h))


def sample_sk(n_spins: int, rng_seed: int) -> SkInstance:
    """Random instance: every J_jk and h_j i.i.d. Gaussian(0, 1/N).

    The couplings are drawn first (flat j<k order), then the fields, from
    a fresh generator, so an identical seed reproduces the instance
    regardless of execution context.
    """
    if n_spins < 2:
        raise DomainError(f"n_spins={n_spins} must be >= 2")
    rng = np.random.default_rng(rng_seed)
    sigma = math.sqrt(1.0 / n_spins)
    coup = rng.normal(0.0, sigma, size=n_spins * (n_spins - 1) // 2)
    h = rng.normal(0.0, sigma, size=n_spins)
    return SkInstance(n_spins, coup, h, seed=int(rng_seed))


def _check_enum_capacity(n: int):
    if n > MAX_ENUM_SPINS:
        raise CapacityError(
            f"N={n} exceeds the 2^N enumeration cap (N <= {MAX_ENUM_SPINS})")


def diagonal_extremes(model: Model) -> DiagonalSpectrumSummary:
    """Exact min/max of the diagonal energies with an argmin witness."""
    n = model.n_spins
    _check_enum_capacity(n)
    if n <= 20:
        e = model.diagonal_energies()
        amin = int(np.argmin(e))
        return DiagonalSpectrumSummary(float(e[amin]), float(e.max()), amin)
    # chunked scan keeps memory bounded for the largest sizes
    e_min, e_max, amin = np.inf, -np.inf, 0
    if isinstance(model, SkInstance):
        jmat = model.coupling_matrix()
        hvec = model.local_fields
    for start in range(0, 1 << n, _ENUM_CHUNK):
        c = np.arange(start, min(start + _ENUM_CHUNK, 1 << n), dtype=np.int64)
        if isinstance(model, SkInstance):
            z = np.empty((n, len(c)))
            for b in range(n):
                z[b] = 1 - 2 * ((c >> b) & 1)
            e = -0.5 * np.einsum("ic,ij,jc->c", z, jmat, z) - hvec @ z
        else:
            pop = np.zeros(len(c), dtype=np.int64)
            for b in range(n):
                pop += (c >> b) & 1
            e = -n * ((n - 2 * pop) / n) ** model.p
        k = int(np.argmin(e))
        if e[k] < e_min:
            e_min, amin = float(e[k]), int(c[k])
        e_max = max(e_max, float(e.max()))
    return DiagonalSpectrumSummary(e_min, e_max, amin)
