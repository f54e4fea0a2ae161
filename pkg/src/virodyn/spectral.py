"""Eigenvalues of the periodic Laplacian on the square (0, ell)^2.

Every eigenvalue has the form 4 pi^2 n / ell^2 with n = k1^2 + k2^2, and its
multiplicity is the number of lattice points on the circle of radius sqrt(n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np

__all__ = [
    "ModeEntry",
    "ModeTable",
    "build_mode_table",
    "lattice_count",
    "multiplicity",
    "paper_index",
    "table_for_bound",
]


class ModeEntry(NamedTuple):
    lam: float
    n: int
    multiplicity: int


@dataclass(frozen=True)
class ModeTable:
    entries: tuple[ModeEntry, ...]
    ell: float

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, k: int) -> ModeEntry:
        return self.entries[k]

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([e.lam for e in self.entries])

    def cumulative_multiplicity(self) -> np.ndarray:
        return np.cumsum([e.multiplicity for e in self.entries])


def _eigenvalue(n: int, ell: float) -> float:
    return 4.0 * math.pi**2 * n / ell**2


def lattice_count(n: int) -> int:
    """Brute-force count of (k1, k2) in Z^2 with k1^2 + k2^2 = n."""
    if n < 0:
        return 0
    if n == 0:
        return 1
    bound = math.isqrt(n)
    count = 0
    for k1 in range(-bound, bound + 1):
        rest = n - k1 * k1
        k2 = math.isqrt(rest)
        if k2 * k2 == rest:
            count += 1 if k2 == 0 else 2
    return count


def multiplicity(n: int) -> int:
    """Number of representations r2(n) from the prime factorisation of n >= 1.

    r2(n) = 4 prod (e_p + 1) over primes p = 1 mod 4, provided every prime
    p = 3 mod 4 occurs to an even power; otherwise 0.
    """
    if n < 1:
        raise ValueError(f"multiplicity needs n >= 1 (got {n})")
    result = 4
    m = n
    while m % 2 == 0:
        m //= 2
    p = 3
    while p * p <= m:
        if m % p == 0:
            e = 0
            while m % p == 0:
                m //= p
                e += 1
            if p % 4 == 3:
                if e % 2:
                    return 0
            else:
                result *= e + 1
        p += 2
    if m > 1:
        if m % 4 == 3:
            return 0
        result *= 2
    return result


def build_mode_table(ell: float, n_max: int) -> ModeTable:
    """All distinct eigenvalues with n <= n_max, ascending, by lattice enumeration."""
    if ell <= 0:
        raise ValueError(f"ell must be positive (got {ell})")
    if n_max < 0:
        raise ValueError(f"n_max must be non-negative (got {n_max})")
    bound = math.isqrt(n_max)
    k = np.arange(-bound, bound + 1)
    sq = (k[:, None] ** 2 + k[None, :] ** 2).ravel()
    counts = np.bincount(sq[sq <= n_max], minlength=n_max + 1)
    entries = tuple(
        ModeEntry(_eigenvalue(int(n), ell), int(n), int(counts[n]))
        for n in np.flatnonzero(counts)
    )
    return ModeTable(entries, float(ell))


def table_for_bound(ell: float, lam_bound: float, extra: int = 1) -> ModeTable:
    """Smallest table holding every eigenvalue <= lam_bound plus ``extra`` more."""
    n_max = max(int(lam_bound * ell**2 / (4.0 * math.pi**2)), 0)
    while True:
        table = build_mode_table(ell, n_max)
        above = sum(1 for e in table.entries if e.lam > lam_bound)
        if above >= extra:
            return table
        n_max = 2 * n_max + 8


def paper_index(
    table: ModeTable,
    k: int,
    convention: Literal["distinct", "with_multiplicity_1based"] = "distinct",
) -> float:
    """Eigenvalue at position ``k`` under the requested indexing convention."""
    if convention == "distinct":
        if not 0 <= k < len(table):
            raise IndexError(f"distinct index {k} outside table of {len(table)} entries")
        return table[k].lam
    if convention == "with_multiplicity_1based":
        cum = table.cumulative_multiplicity()
        if not 1 <= k <= cum[-1]:
            raise IndexError(f"position {k} outside 1..{int(cum[-1])}")
        return table[int(np.searchsorted(cum, k))].lam
    raise ValueError(f"unknown convention {convention!r}")
