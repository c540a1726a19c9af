"""Hilbert-space primitives for spin-1/2 chains.

Conventions used throughout the package:

* site 0 is the most significant bit of a computational-basis index;
* spin up is bit 0 and spin down is bit 1, so ``sigma_z = diag(1, -1)``;
* ``sigma_plus = |up><down|`` and ``sigma_minus = |down><up|``.

States, operators and unitaries are plain complex numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

UNITARITY_TOL = 1e-10
HERMITICITY_TOL = 1e-12

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "+": np.array([[0, 1], [0, 0]], dtype=complex),
    "-": np.array([[0, 0], [1, 0]], dtype=complex),
}

_SPIN_LABELS = {"up": 0, "u": 0, "↑": 0, 0: 0, "down": 1, "d": 1, "↓": 1, 1: 1}


class DimensionMismatchError(ValueError):
    pass


class ContractViolationError(ValueError):
    pass


@dataclass(frozen=True)
class HilbertSpace:
    """Space of ``n_sites`` spin-1/2 particles."""

    n_sites: int

    def __post_init__(self):
        if int(self.n_sites) < 1:
            raise ValueError(f"n_sites must be >= 1, got {self.n_sites}")

    @property
    def dim(self) -> int:
        return 2**self.n_sites

    def bit(self, index, site: int):
        """Occupation bit (0 = up, 1 = down) of ``site`` in basis state(s) ``index``."""
        return (np.asarray(index) >> (self.n_sites - 1 - site)) & 1

    def site_mask(self, site: int) -> int:
        return 1 << (self.n_sites - 1 - site)


def basis_index(config: Sequence, n_sites: int | None = None, msb_first: bool = True) -> int:
    """Computational-basis index of a spin configuration.

    ``config`` holds one label per site (``"up"``/``"down"``, ``0``/``1``).
    With ``msb_first`` (the package convention) site 0 is the most
    significant bit.
    """
    if n_sites is not None and len(config) != n_sites:
        raise DimensionMismatchError(f"configuration has {len(config)} sites, expected {n_sites}")
    bits = [_SPIN_LABELS[c] for c in config]
    if not msb_first:
        bits = bits[::-1]
    index = 0
    for b in bits:
        index = (index << 1) | b
    return index


def basis_state(space: HilbertSpace, index: int) -> np.ndarray:
    psi = np.zeros(space.dim, dtype=complex)
    psi[index] = 1.0
    return psi


def cdw_state(space: HilbertSpace) -> np.ndarray:
    """Charge-density-wave product state |up, down, up, down, ...>."""
    config = ["up" if j % 2 == 0 else "down" for j in range(space.n_sites)]
    return basis_state(space, basis_index(config))


def _check_site(space: HilbertSpace, site: int):
    if not 0 <= site < space.n_sites:
        raise IndexError(f"site {site} out of range for {space.n_sites} sites")


def embed(ops: dict[int, np.ndarray], space: HilbertSpace) -> np.ndarray:
    """Tensor product placing ``ops[site]`` on each listed site and identity elsewhere."""
    out = np.ones((1, 1), dtype=complex)
    for site in range(space.n_sites):
        out = np.kron(out, ops.get(site, PAULI["i"]))
    return out


def site_operator(axis: str, site: int, space: HilbertSpace) -> np.ndarray:
    """Single-site Pauli (or ladder) operator embedded in the full space."""
    _check_site(space, site)
    return embed({site: PAULI[axis]}, space)


def two_site_coupling(axis: str, i: int, j: int, space: HilbertSpace) -> np.ndarray:
    """Embedded product ``sigma_i^axis sigma_j^axis``."""
    _check_site(space, i)
    _check_site(space, j)
    if i == j:
        raise ValueError(f"coupling needs two distinct sites, got i == j == {i}")
    return embed({i: PAULI[axis], j: PAULI[axis]}, space)


def total_sz(space: HilbertSpace) -> np.ndarray:
    """Diagonal operator sum_j sigma_j^z."""
    idx = np.arange(space.dim)
    diag = sum(1 - 2 * space.bit(idx, j) for j in range(space.n_sites))
    return np.diag(diag.astype(complex))


def is_hermitian(op: np.ndarray, tol: float = HERMITICITY_TOL) -> bool:
    return bool(np.max(np.abs(op - op.conj().T), initial=0.0) < tol)


def unitarity_error(u: np.ndarray) -> float:
    """max |U^dagger U - I| over all entries."""
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def is_unitary(u: np.ndarray, tol: float = UNITARITY_TOL) -> bool:
    return unitarity_error(u) < tol


def expm_hermitian(h: np.ndarray, t: float, *, check: bool = True) -> np.ndarray:
    """exp(-i h t) for Hermitian ``h`` via its eigendecomposition."""
    if check and not is_hermitian(h):
        raise ContractViolationError("expm_hermitian requires a Hermitian matrix")
    evals, evecs = np.linalg.eigh(h)
    return (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T


def normalize(psi: np.ndarray) -> np.ndarray:
    return psi / np.linalg.norm(psi)


def survival_probability(final: np.ndarray, reference: np.ndarray) -> float:
    """|<reference|final>|^2, clipped to [0, 1] against rounding."""
    final = np.asarray(final)
    reference = np.asarray(reference)
    if final.shape != reference.shape:
        raise DimensionMismatchError(f"shapes differ: {final.shape} vs {reference.shape}")
    p = abs(np.vdot(reference, final)) ** 2
    return float(min(max(p, 0.0), 1.0))
