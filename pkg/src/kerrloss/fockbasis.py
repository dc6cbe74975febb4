"""Truncated Fock space and the coherence-block representation.

Operators on the single mode are stored either as dense (n1, n2) matrices
(``FockState``) or decomposed over the ketbra basis
phi_k^(m) = |k+m><k| (m >= 0) and |k><k-m| (m < 0), where m labels the
photon-number-difference coherence sector and k the excitation index.
With a global cutoff n_max, block m holds indices k in [0, K(m)],
K(m) = n_max - |m|, so the two layouts describe the same finite space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .specfun import log_factorial

__all__ = [
    "Truncation",
    "FockState",
    "BlockVector",
    "to_blocks",
    "from_blocks",
    "coherent_phi_component",
    "block_index_pairs",
]

HERMITICITY_TOL = 1e-12


@dataclass(frozen=True)
class Truncation:
    """Global Fock cutoff with per-block bound K(m) = n_max - |m|."""

    n_max: int

    def __post_init__(self):
        if self.n_max < 2:
            raise ValueError("n_max must be >= 2 (two-step loss coupling)")

    @property
    def dim(self) -> int:
        return self.n_max + 1

    def block_bound(self, m: int) -> int:
        """K(m); raises if the block does not exist at this cutoff."""
        if abs(m) > self.n_max:
            raise ValueError(f"block m={m} outside truncation n_max={self.n_max}")
        return self.n_max - abs(m)

    def block_size(self, m: int) -> int:
        return self.block_bound(m) + 1

    def blocks(self):
        """All block labels m with |m| <= n_max."""
        return range(-self.n_max, self.n_max + 1)


@dataclass
class BlockVector:
    """Complex coefficients over the k-index inside one coherence block m."""

    m: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.ndim != 1:
            raise ValueError("block coefficients must be one-dimensional")

    def copy(self) -> "BlockVector":
        return BlockVector(self.m, self.coeffs.copy())


def phi_indices(m: int, k: int) -> tuple[int, int]:
    """(n1, n2) Fock pair of phi_k^(m)."""
    if m >= 0:
        return k + m, k
    return k, k - m


class FockState:
    """Dense operator (density-matrix-like) on the truncated Fock space."""

    def __init__(self, entries: np.ndarray, hermitian: bool = False):
        entries = np.asarray(entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("entries must be a square matrix")
        if entries.shape[0] < 3:
            raise ValueError("truncation must satisfy n_max >= 2")
        self.entries = entries
        self.hermitian = hermitian
        if hermitian:
            dev = np.max(np.abs(entries - entries.conj().T))
            if dev > HERMITICITY_TOL * max(1.0, np.max(np.abs(entries))):
                raise ValueError(f"state marked hermitian but deviation is {dev:.3e}")

    @property
    def n_max(self) -> int:
        return self.entries.shape[0] - 1

    @property
    def truncation(self) -> Truncation:
        return Truncation(self.n_max)

    @classmethod
    def zero(cls, trunc: Truncation, hermitian: bool = True) -> "FockState":
        return cls(np.zeros((trunc.dim, trunc.dim), dtype=complex), hermitian=hermitian)

    @classmethod
    def fock(cls, trunc: Truncation, n: int) -> "FockState":
        """Projector |n><n|."""
        if not 0 <= n <= trunc.n_max:
            raise ValueError("Fock index outside truncation")
        state = cls.zero(trunc)
        state.entries[n, n] = 1.0
        return state

    @classmethod
    def vacuum(cls, trunc: Truncation) -> "FockState":
        return cls.fock(trunc, 0)

    @classmethod
    def coherent(cls, trunc: Truncation, alpha: complex) -> "FockState":
        """Truncated coherent projector |alpha><alpha| (trace < 1 from the cutoff tail)."""
        ket = coherent_ket(trunc, alpha)
        return cls(np.outer(ket, ket.conj()), hermitian=True)

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def dagger(self) -> "FockState":
        return FockState(self.entries.conj().T, hermitian=self.hermitian)

    def copy(self) -> "FockState":
        return FockState(self.entries.copy(), hermitian=self.hermitian)

    def hermiticity_deviation(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def to_json(self) -> str:
        nz = np.argwhere(self.entries != 0)
        records = [
            [int(n1), int(n2), float(self.entries[n1, n2].real), float(self.entries[n1, n2].imag)]
            for n1, n2 in nz
        ]
        return json.dumps(
            {"n_max": self.n_max, "hermitian": bool(self.hermitian), "entries": records}
        )

    @classmethod
    def from_json(cls, payload: str) -> "FockState":
        data = json.loads(payload)
        trunc = Truncation(int(data["n_max"]))
        entries = np.zeros((trunc.dim, trunc.dim), dtype=complex)
        for n1, n2, re, im in data["entries"]:
            entries[int(n1), int(n2)] = re + 1j * im
        return cls(entries, hermitian=bool(data.get("hermitian", False)))


def coherent_ket(trunc: Truncation, alpha: complex) -> np.ndarray:
    """Taylor-series coherent state amplitudes e^{-|a|^2/2} a^n / sqrt(n!)."""
    n = np.arange(trunc.dim)
    log_amp = np.zeros(trunc.dim)
    if alpha != 0:
        log_amp = n * math.log(abs(alpha))
    phases = np.exp(1j * np.angle(alpha) * n) if alpha != 0 else (n == 0).astype(complex)
    log_norm = np.array([log_factorial(int(q)) for q in n])
    amps = np.where(
        (alpha != 0) | (n == 0),
        np.exp(-abs(alpha) ** 2 / 2 + log_amp - 0.5 * log_norm),
        0.0,
    )
    return amps * phases


def to_blocks(state: FockState) -> dict[int, BlockVector]:
    """Decompose a FockState over the phi basis, one BlockVector per m."""
    trunc = state.truncation
    blocks: dict[int, BlockVector] = {}
    for m in trunc.blocks():
        size = trunc.block_size(m)
        coeffs = np.empty(size, dtype=complex)
        for k in range(size):
            n1, n2 = phi_indices(m, k)
            coeffs[k] = state.entries[n1, n2]
        blocks[m] = BlockVector(m, coeffs)
    return blocks


def from_blocks(blocks: dict[int, BlockVector], trunc: Truncation | None = None) -> FockState:
    """Exact inverse of :func:`to_blocks`; missing blocks are taken as zero."""
    if trunc is None:
        if not blocks:
            raise ValueError("cannot infer truncation from empty block set")
        some = next(iter(blocks.values()))
        trunc = Truncation(len(some.coeffs) - 1 + abs(some.m))
    entries = np.zeros((trunc.dim, trunc.dim), dtype=complex)
    for m, block in blocks.items():
        if block.m != m:
            raise ValueError("block label mismatch")
        if len(block.coeffs) != trunc.block_size(m):
            raise ValueError(
                f"block m={m} has {len(block.coeffs)} coefficients, "
                f"expected {trunc.block_size(m)} for n_max={trunc.n_max}"
            )
        for k, c in enumerate(block.coeffs):
            n1, n2 = phi_indices(m, k)
            entries[n1, n2] = c
    return FockState(entries)


def coherent_phi_component(alpha: complex, m: int, k: int, trunc: Truncation) -> complex:
    """<<phi_k^(m) | alpha><alpha| >> for the untruncated coherent projector."""
    if abs(m) > trunc.n_max or not 0 <= k <= trunc.block_bound(m):
        raise ValueError("index outside truncation")
    if m >= 0:
        n1, n2 = k + m, k
    else:
        n1, n2 = k, k - m
    if alpha == 0:
        return 1.0 + 0j if (n1, n2) == (0, 0) else 0.0 + 0j
    log_mag = (n1 + n2) * math.log(abs(alpha)) - 0.5 * (log_factorial(n1) + log_factorial(n2))
    phase = np.exp(1j * np.angle(alpha) * (n1 - n2))
    return math.exp(-abs(alpha) ** 2 + log_mag) * phase


def block_index_pairs(trunc: Truncation):
    """Iterate all (m, k) pairs of the truncated phi basis."""
    for m in trunc.blocks():
        for k in range(trunc.block_size(m)):
            yield m, k
