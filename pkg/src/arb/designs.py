"""Unitary 2-design diagnostics: frame potentials, moment operators, twirls.

Superoperators act on row-major vectorised density matrices, so the unitary
channel rho -> U rho U^dagger is the matrix U (x) conj(U).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .hamiltonians import UnitaryEnsemble
from .quantum import PAULI

HAAR_FRAME_POTENTIAL = 2.0
MAX_MOMENT_DIM = 4
MAX_SUPEROP_DIM = 8


class DesignPolicyError(ValueError):
    """Requested an exact object too large for the dense policy."""


@dataclass(frozen=True)
class FramePotentialEstimate:
    L: int
    n_pairs: int
    estimate: float
    stderr: float
    haar_reference: float = HAAR_FRAME_POTENTIAL


# -- unitary sets -------------------------------------------------------------------
def haar_unitary(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-random unitaries from the QR decomposition of a Ginibre matrix."""
    shape = (d, d) if size is None else (size, d, d)
    z = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (diag / np.abs(diag))[..., None, :]


def _canonical_phase(u: np.ndarray) -> np.ndarray:
    flat = u.ravel()
    lead = flat[np.argmax(np.abs(flat) > 1e-9)]
    return u * (abs(lead) / lead)


def clifford_group_1q() -> np.ndarray:
    """The 24 single-qubit Cliffords (modulo global phase), generated by H and S."""
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    s = np.diag([1, 1j])
    found = {}
    frontier = [np.eye(2, dtype=complex)]
    while frontier:
        nxt = []
        for u in frontier:
            c = _canonical_phase(u)
            key = tuple(np.round(c.ravel(), 8))
            if key in found:
                continue
            found[key] = c
            nxt.extend([h @ c, s @ c])
        frontier = nxt
    return np.array(list(found.values()))


def pauli_group_1q() -> np.ndarray:
    return np.array([PAULI[a] for a in ("i", "x", "y", "z")], dtype=complex)


# -- frame potential ----------------------------------------------------------------
def frame_potential_exact(unitaries) -> float:
    """(1/K^2) sum_{k,k'} |tr(U_k^dagger U_k')|^4, diagonal pairs included."""
    u = np.asarray(unitaries)
    tr = np.einsum("aij,bij->ab", u.conj(), u)
    return float(np.mean(np.abs(tr) ** 4))


def _as_unitaries(source) -> np.ndarray:
    if isinstance(source, UnitaryEnsemble):
        return source.unitaries
    return np.asarray(source)


def random_products(unitaries: np.ndarray, L: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """n products U_{k_L} ... U_{k_1} of uniformly drawn set elements."""
    idx = rng.integers(0, len(unitaries), size=(n, L))
    out = unitaries[idx[:, 0]].copy()
    for j in range(1, L):
        out = unitaries[idx[:, j]] @ out
    return out


def frame_potential_mc(source, L: int, n_pairs: int, rng: np.random.Generator) -> FramePotentialEstimate:
    """Monte Carlo E|tr(V^dagger W)|^4 over independent length-L products V, W.

    Only off-diagonal pairs are sampled; the diagonal d^4 / K_eff^2 term of
    the exact double sum vanishes for the combinatorially large product set.
    """
    if n_pairs < 2:
        raise ValueError("n_pairs must be >= 2")
    if L < 1:
        raise ValueError("L must be >= 1")
    u = _as_unitaries(source)
    v = random_products(u, L, n_pairs, rng)
    w = random_products(u, L, n_pairs, rng)
    samples = np.abs(np.einsum("aij,aij->a", v.conj(), w)) ** 4
    return FramePotentialEstimate(
        L=int(L), n_pairs=int(n_pairs), estimate=float(samples.mean()),
        stderr=float(samples.std(ddof=1) / np.sqrt(n_pairs)),
    )


def frame_potential_sweep(source, lengths, n_pairs: int, rng: np.random.Generator) -> list:
    return [frame_potential_mc(source, L, n_pairs, rng) for L in lengths]


# -- second moments --------------------------------------------------------------------
def moment_operator(unitaries) -> np.ndarray:
    """Mean of U (x) U (x) conj(U) (x) conj(U) over the set."""
    u = np.asarray(unitaries)
    d = u.shape[-1]
    if d > MAX_MOMENT_DIM:
        raise DesignPolicyError(f"moment operators limited to d <= {MAX_MOMENT_DIM}, got {d}")
    acc = np.zeros((d**4, d**4), dtype=complex)
    for x in u:
        uu = np.kron(x, x)
        acc += np.kron(uu, uu.conj())
    return acc / len(u)


def _permutation_vector(d: int, perm) -> np.ndarray:
    v = np.zeros((d, d, d, d))
    for a in itertools.product(range(d), repeat=2):
        b = tuple(a[perm[i]] for i in range(2))
        v[a[0], a[1], b[0], b[1]] = 1.0
    return v.ravel()


def haar_moment_operator(d: int, method: str = "weingarten", n_samples: int = 100_000, rng=None) -> np.ndarray:
    """Haar average of U (x) U (x) conj(U) (x) conj(U).

    ``weingarten`` uses sum_{s,t in S_2} Wg(s t^-1, d) |s><t|; ``sampled``
    averages Haar unitaries and serves as an independent check.
    """
    if d > MAX_MOMENT_DIM:
        raise DesignPolicyError(f"moment operators limited to d <= {MAX_MOMENT_DIM}, got {d}")
    if method == "sampled":
        rng = rng if rng is not None else np.random.default_rng()
        acc = np.zeros((d**4, d**4), dtype=complex)
        done = 0
        while done < n_samples:
            batch = min(10_000, n_samples - done)
            us = haar_unitary(d, rng, batch)
            uu = np.einsum("nij,nkl->nikjl", us, us).reshape(batch, d * d, d * d)
            acc += np.einsum("nij,nkl->ikjl", uu, uu.conj()).reshape(d**4, d**4)
            done += batch
        return acc / n_samples
    if method != "weingarten":
        raise ValueError("method must be 'weingarten' or 'sampled'")
    perms = [(0, 1), (1, 0)]
    vecs = [_permutation_vector(d, p) for p in perms]
    wg_same = 1.0 / (d * d - 1)
    wg_swap = -1.0 / (d * (d * d - 1))
    out = np.zeros((d**4, d**4), dtype=complex)
    for i, vs in enumerate(vecs):
        for j, vt in enumerate(vecs):
            out += (wg_same if i == j else wg_swap) * np.outer(vs, vt)
    return out


def moment_operator_distance(unitaries, d: int | None = None, reference: np.ndarray | None = None) -> float:
    """Frobenius distance between the set's and Haar's second-moment operators."""
    u = np.asarray(unitaries)
    d = d or u.shape[-1]
    if d > MAX_MOMENT_DIM:
        raise DesignPolicyError(f"moment operators limited to d <= {MAX_MOMENT_DIM}, got {d}")
    ref = haar_moment_operator(d) if reference is None else reference
    return float(np.linalg.norm(moment_operator(u) - ref))


# -- channels -------------------------------------------------------------------------------
def _check_superop_dim(d: int):
    if d > MAX_SUPEROP_DIM:
        raise DesignPolicyError(f"exact superoperators limited to d <= {MAX_SUPEROP_DIM}, got {d}")


def unitary_superop(u: np.ndarray) -> np.ndarray:
    return np.kron(u, u.conj())


def kraus_superop(kraus) -> np.ndarray:
    return sum(np.kron(k, k.conj()) for k in kraus)


def identity_channel(d: int) -> np.ndarray:
    return np.eye(d * d, dtype=complex)


def completely_depolarizing(d: int) -> np.ndarray:
    v = np.eye(d).ravel()
    return np.outer(v, v).astype(complex) / d


def depolarizing_superop(p: float, d: int) -> np.ndarray:
    """rho -> p rho + (1 - p) tr(rho) I / d."""
    return p * identity_channel(d) + (1 - p) * completely_depolarizing(d)


def random_channel(d: int, rng: np.random.Generator, n_kraus: int = 2) -> np.ndarray:
    """Random CPTP map from a Haar isometry (Stinespring dilation)."""
    _check_superop_dim(d)
    v = haar_unitary(d * n_kraus, rng)[:, :d]
    return kraus_superop(v.reshape(n_kraus, d, d))


def is_trace_preserving(superop: np.ndarray, tol: float = 1e-10) -> bool:
    d = int(round(np.sqrt(superop.shape[0])))
    v = np.eye(d).ravel()
    return bool(np.max(np.abs(v @ superop - v)) < tol)


def twirl_channel(superop: np.ndarray, unitaries) -> np.ndarray:
    """(1/K) sum_k U_k^dagger o Lambda o U_k as a superoperator."""
    d = int(round(np.sqrt(superop.shape[0])))
    _check_superop_dim(d)
    u = np.asarray(unitaries)
    acc = np.zeros_like(superop, dtype=complex)
    for x in u:
        s = unitary_superop(x)
        acc += s.conj().T @ superop @ s
    return acc / len(u)


def depolarizing_parameter(superop: np.ndarray) -> float:
    """(Tr Lambda - 1) / (d^2 - 1), the twirled depolarizing strength."""
    d2 = superop.shape[0]
    return float(((np.trace(superop) - 1) / (d2 - 1)).real)


def depolarizing_deviation(superop: np.ndarray) -> tuple[float, float]:
    """Least-squares closest depolarizing channel: (p_best, Frobenius residual)."""
    d = int(round(np.sqrt(superop.shape[0])))
    full = completely_depolarizing(d)
    basis = identity_channel(d) - full
    target = superop - full
    p = float(np.vdot(basis, target).real / np.vdot(basis, basis).real)
    residual = float(np.linalg.norm(superop - depolarizing_superop(p, d)))
    return p, residual
