"""XY spin models, disorder terms and deterministic unitary ensembles."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .quantum import (
    HilbertSpace,
    expm_hermitian,
    is_hermitian,
    site_operator,
    total_sz,
    two_site_coupling,
)

NEAREST_NEIGHBOUR = math.inf


@dataclass(frozen=True)
class XYModelSpec:
    """H = sum_{i<j} J_ij (s+_i s-_j + s-_i s+_j) + B sum_j sz_j, open chain.

    ``J_ij = J / |i - j|**alpha``; ``alpha = inf`` keeps nearest neighbours
    only and ``alpha = 0`` couples every pair with strength ``J``.
    """

    n_sites: int
    J: float = 1.0
    B: float = 10.0
    alpha: float = NEAREST_NEIGHBOUR

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("n_sites must be >= 1")
        if self.J == 0:
            raise ValueError("J must be nonzero (it is the frequency reference)")
        if not self.alpha >= 0:
            raise ValueError("alpha must be >= 0 (use inf for nearest neighbour)")

    @property
    def space(self) -> HilbertSpace:
        return HilbertSpace(self.n_sites)

    @property
    def nearest_neighbour(self) -> bool:
        return math.isinf(self.alpha)

    def pairs(self) -> list[tuple[int, int]]:
        """Coupling graph edges (i < j)."""
        n = self.n_sites
        if self.nearest_neighbour:
            return [(j, j + 1) for j in range(n - 1)]
        return [(i, j) for i in range(n) for j in range(i + 1, n)]

    def pair_weight(self, i: int, j: int) -> float:
        if self.nearest_neighbour:
            return 1.0 if abs(i - j) == 1 else 0.0
        return 1.0 / abs(i - j) ** self.alpha


def hopping_operator(spec: XYModelSpec) -> np.ndarray:
    """Coupling part of the XY model divided by J."""
    space = spec.space
    h = np.zeros((space.dim, space.dim), dtype=complex)
    for i, j in spec.pairs():
        sp_i, sm_i = site_operator("+", i, space), site_operator("-", i, space)
        sp_j, sm_j = site_operator("+", j, space), site_operator("-", j, space)
        h += spec.pair_weight(i, j) * (sp_i @ sm_j + sm_i @ sp_j)
    return h


def build_xy(spec: XYModelSpec) -> np.ndarray:
    return spec.J * hopping_operator(spec) + spec.B * total_sz(spec.space)


def commutes_with_total_sz(h: np.ndarray, tol: float = 1e-10) -> bool:
    n_sites = int(round(math.log2(h.shape[0])))
    sz = total_sz(HilbertSpace(n_sites))
    return bool(np.max(np.abs(h @ sz - sz @ h)) < tol)


@dataclass(frozen=True)
class DisorderSpec:
    """Disorder added to every ensemble element.

    ``global`` scope draws one strength per element and applies it to every
    edge of the coupling graph; ``local`` draws one strength per edge.
    """

    scope: str = "global"
    axis: str = "x"
    distribution: str = "normal"
    std_dev: float = 1.0

    def __post_init__(self):
        if self.scope not in ("global", "local"):
            raise ValueError(f"scope must be 'global' or 'local', got {self.scope!r}")
        if self.axis not in ("x", "y", "z"):
            raise ValueError(f"axis must be one of x, y, z, got {self.axis!r}")
        if self.distribution not in ("normal", "uniform"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if not self.std_dev > 0:
            raise ValueError("std_dev must be > 0")


def draw_scaled(distribution: str, std: float, rng: np.random.Generator, size) -> np.ndarray:
    """Zero-mean draws with standard deviation ``std``."""
    if distribution == "normal":
        return rng.normal(0.0, std, size)
    if distribution == "uniform":
        half = math.sqrt(3.0) * std
        return rng.uniform(-half, half, size)
    raise ValueError(f"unknown distribution {distribution!r}")


def draw_disorder_coefficients(spec: DisorderSpec, n_edges: int, rng: np.random.Generator) -> np.ndarray:
    if spec.scope == "global":
        return np.full(n_edges, draw_scaled(spec.distribution, spec.std_dev, rng, 1)[0])
    return draw_scaled(spec.distribution, spec.std_dev, rng, n_edges)


def disorder_terms(spec: DisorderSpec, model: XYModelSpec) -> list[np.ndarray]:
    space = model.space
    return [two_site_coupling(spec.axis, i, j, space) for i, j in model.pairs()]


def disorder_operator(coefficients, spec: DisorderSpec, model: XYModelSpec) -> np.ndarray:
    d = model.space.dim
    out = np.zeros((d, d), dtype=complex)
    for c, term in zip(coefficients, disorder_terms(spec, model)):
        out += c * term
    return out


def sample_disorder(spec: DisorderSpec, model: XYModelSpec, rng: np.random.Generator) -> np.ndarray:
    coeffs = draw_disorder_coefficients(spec, len(model.pairs()), rng)
    return disorder_operator(coeffs, spec, model)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(eq=False)
class UnitaryEnsemble:
    """K disordered Hamiltonians H_k = H_s + zeta_k and U_k = exp(-i H_k dt).

    Only the disorder strengths are stored eagerly; matrices are built on
    first access and kept read-only.
    """

    model: XYModelSpec
    disorder: DisorderSpec
    K: int
    dt: float
    seed: int
    coefficients: np.ndarray = field(repr=False)
    _hamiltonians: np.ndarray | None = field(default=None, repr=False)
    _unitaries: np.ndarray | None = field(default=None, repr=False)

    @property
    def space(self) -> HilbertSpace:
        return self.model.space

    @property
    def dim(self) -> int:
        return self.model.space.dim

    def static_hamiltonian(self) -> np.ndarray:
        return build_xy(self.model)

    def hamiltonian(self, k: int) -> np.ndarray:
        if self._hamiltonians is not None:
            return self._hamiltonians[k]
        return self.static_hamiltonian() + disorder_operator(self.coefficients[k], self.disorder, self.model)

    @property
    def hamiltonians(self) -> np.ndarray:
        if self._hamiltonians is None:
            hs = self.static_hamiltonian()
            terms = np.array(disorder_terms(self.disorder, self.model))
            stack = hs[None] + np.tensordot(self.coefficients, terms, axes=1)
            self._hamiltonians = _readonly(stack)
        return self._hamiltonians

    @property
    def unitaries(self) -> np.ndarray:
        if self._unitaries is None:
            hs = self.hamiltonians
            us = np.empty_like(hs)
            for k in range(self.K):
                us[k] = expm_hermitian(hs[k], self.dt, check=False)
            self._unitaries = _readonly(us)
        return self._unitaries

    def unitary(self, k: int) -> np.ndarray:
        if self._unitaries is not None:
            return self._unitaries[k]
        return expm_hermitian(self.hamiltonian(k), self.dt)

    def term_operators(self) -> list[np.ndarray]:
        """Operator basis [hopping, total Sz, edge couplings...] of every H_k."""
        return [hopping_operator(self.model), total_sz(self.space)] + disorder_terms(self.disorder, self.model)

    def term_coefficients(self, J: float | None = None, B: float | None = None) -> np.ndarray:
        """(K, n_terms) coefficients matching :meth:`term_operators`."""
        J = self.model.J if J is None else J
        B = self.model.B if B is None else B
        out = np.empty((self.K, 2 + self.coefficients.shape[1]))
        out[:, 0] = J
        out[:, 1] = B
        out[:, 2:] = self.coefficients
        return out

    def with_dt(self, dt: float) -> "UnitaryEnsemble":
        """Same Hamiltonians, different time step."""
        return UnitaryEnsemble(self.model, self.disorder, self.K, dt, self.seed, self.coefficients, self._hamiltonians)


def generate_ensemble(model: XYModelSpec, disorder: DisorderSpec, K: int, dt: float, seed: int) -> UnitaryEnsemble:
    """Draw K disorder realisations, element k from substream (seed, k)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    n_edges = len(model.pairs())
    coeffs = np.empty((K, n_edges))
    for k in range(K):
        coeffs[k] = draw_disorder_coefficients(disorder, n_edges, rngmod.substream(seed, rngmod.ENSEMBLE, k))
    return UnitaryEnsemble(model, disorder, K, dt, seed, _readonly(coeffs))


def check_ensemble(ensemble: UnitaryEnsemble) -> None:
    from .quantum import unitarity_error

    for k in range(ensemble.K):
        if not is_hermitian(ensemble.hamiltonians[k]):
            raise AssertionError(f"H_{k} is not Hermitian")
        err = unitarity_error(ensemble.unitaries[k])
        if err >= 1e-10:
            raise AssertionError(f"U_{k} unitarity error {err:.3e}")


# Binary cache: little-endian header then row-major complex128 unitaries.
CACHE_MAGIC = b"ARBENS\x00\x01"
CACHE_VERSION = 1
_HEADER = struct.Struct("<8sIIIdQ")


def save_ensemble_cache(ensemble: UnitaryEnsemble, path) -> None:
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, ensemble.model.n_sites, ensemble.K, ensemble.dt, ensemble.seed & rngmod.MASK64)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(ensemble.unitaries, dtype="<c16").tobytes())


def read_ensemble_cache(path) -> dict:
    """Header fields plus the (K, d, d) unitary array."""
    raw = Path(path).read_bytes()
    magic, version, n_sites, K, dt, seed = _HEADER.unpack_from(raw, 0)
    if magic != CACHE_MAGIC:
        raise ValueError(f"{path}: not an ensemble cache file")
    if version != CACHE_VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    d = 2**n_sites
    payload = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if payload.size != K * d * d:
        raise ValueError(f"{path}: truncated payload")
    return {"n_sites": n_sites, "K": K, "dt": dt, "seed": seed, "unitaries": payload.reshape(K, d, d).astype(complex)}


def load_ensemble(model: XYModelSpec, disorder: DisorderSpec, K: int, dt: float, seed: int, cache_path=None) -> UnitaryEnsemble:
    """generate_ensemble, reusing a matching cache file when one exists."""
    ens = generate_ensemble(model, disorder, K, dt, seed)
    if cache_path is None:
        return ens
    path = Path(cache_path)
    if path.exists():
        data = read_ensemble_cache(path)
        if (data["n_sites"], data["K"], data["dt"], data["seed"]) == (model.n_sites, K, dt, seed & rngmod.MASK64):
            ens._unitaries = _readonly(data["unitaries"])
            return ens
    save_ensemble_cache(ens, path)
    return ens
