"""Batched trajectory evolution over a unitary ensemble.

Every H_k of an ensemble is a linear combination of the same sparse
operators (hopping, total Sz, one coupling per edge). Trajectories carry
their own coefficients, so fluctuations, jitter and the non-Hermitian decay
of spontaneous emission are all just coefficient changes and one compiled
Taylor propagator serves every step.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .hamiltonians import UnitaryEnsemble
from .noise import FORWARD, NORM_FLOOR, NoiseModel, excitation_numbers

TAYLOR_TOL = 1e-17
TAYLOR_ORDER = _kernels.taylor_order(TAYLOR_TOL)


def _stack_draw(draws_list, name, columns=None):
    arrs = [getattr(d, name) for d in draws_list]
    if arrs[0] is None:
        return None
    out = np.stack(arrs)
    return out if columns is None else out[:, columns]


class BatchPropagator:
    def __init__(self, ensemble: UnitaryEnsemble):
        self.ensemble = ensemble
        self.space = ensemble.space
        self.dim = ensemble.dim
        self.occupations = excitation_numbers(self.space)
        terms = ensemble.term_operators() + [np.diag(self.occupations.sum(axis=1)).astype(complex)]
        self.n_terms = len(terms)
        pattern = np.zeros((self.dim, self.dim), dtype=bool)
        for t in terms:
            pattern |= np.abs(t) > 0
        pattern |= np.eye(self.dim, dtype=bool)
        rows, cols = np.nonzero(pattern)
        self.indptr = np.searchsorted(rows, np.arange(self.dim + 1)).astype(np.int64)
        self.cols = cols.astype(np.int64)
        position = -np.ones((self.dim, self.dim), dtype=np.int64)
        position[rows, cols] = np.arange(len(rows))
        ptr, pos, val = [0], [], []
        for t in terms:
            r, c = np.nonzero(np.abs(t) > 0)
            pos.append(position[r, c])
            val.append(t[r, c])
            ptr.append(ptr[-1] + len(r))
        self.term_ptr = np.array(ptr, dtype=np.int64)
        self.term_pos = np.concatenate(pos).astype(np.int64)
        self.term_val = np.concatenate(val).astype(np.complex128)
        self.base = ensemble.term_coefficients()

    # -- coefficient assembly -------------------------------------------------
    def generator_coefficients(self, k_idx, sign, tau, dJ=None, dB=None, gamma=0.0, hamiltonian=True):
        """Complex term weights of A = -i sign tau H - gamma tau n / 2 per trajectory."""
        m = len(k_idx)
        coeffs = np.zeros((m, self.n_terms), dtype=np.complex128)
        tau = np.broadcast_to(np.asarray(tau, dtype=float), (m,))
        if hamiltonian:
            h = self.base[k_idx].copy()
        else:
            h = np.zeros((m, self.n_terms - 1))
        if dJ is not None:
            h[:, 0] += dJ
        if dB is not None:
            h[:, 1] += dB
        coeffs[:, :-1] = (-1j * sign * tau)[:, None] * h
        if gamma:
            coeffs[:, -1] = -0.5 * gamma * tau
        return coeffs

    def expv(self, coeffs, psi):
        return _kernels.expv_batch(
            self.indptr, self.cols, self.term_ptr, self.term_pos, self.term_val,
            np.ascontiguousarray(coeffs), np.ascontiguousarray(psi), TAYLOR_ORDER,
        )

    # -- ideal evolution ----------------------------------------------------------
    def ideal(self, psi, k_idx, direction=FORWARD):
        us = self.ensemble.unitaries
        k_idx = np.ascontiguousarray(k_idx, dtype=np.int64)
        if direction == FORWARD:
            return _kernels.apply_dense_batch(us, k_idx, np.ascontiguousarray(psi))
        return _kernels.apply_dense_adjoint_batch(us, k_idx, np.ascontiguousarray(psi))

    # -- noisy evolution ------------------------------------------------------
    def step(self, psi, k_idx, noise: NoiseModel, direction, dt, draws, tau=None, hamiltonian=True):
        """One noisy step for every trajectory; returns (psi, degenerate_mask).

        ``draws`` holds per-trajectory arrays for this step (see
        :func:`stack_column`); ``tau`` overrides the step duration.
        """
        sign = 1 if direction == FORWARD else -1
        if tau is None:
            tau = draws["tau"] if draws["tau"] is not None else np.full(len(psi), dt)
        gamma = noise.dissipation.gamma if draws["jump_u"] is not None else 0.0
        exact = (
            hamiltonian and not gamma and draws["dJ"] is None and draws["dB"] is None
            and np.all(tau == self.ensemble.dt)
        )
        if exact:
            out = self.ideal(psi, k_idx, direction)
        else:
            coeffs = self.generator_coefficients(k_idx, sign, tau, draws["dJ"], draws["dB"], gamma, hamiltonian)
            out = self.expv(coeffs, psi)
        if gamma:
            pops = np.abs(psi) ** 2 @ self.occupations
            jumped = draws["jump_u"] < gamma * tau * pops.sum(axis=1)
            for m in np.flatnonzero(jumped):
                cdf = np.cumsum(pops[m])
                site = min(int(np.searchsorted(cdf, draws["site_u"][m] * cdf[-1], side="right")), len(cdf) - 1)
                out[m] = _lowered(psi[m], site, self.space)
        norms = np.linalg.norm(out, axis=1)
        degenerate = ~(norms > NORM_FLOOR)
        norms[degenerate] = 1.0
        out /= norms[:, None]
        if draws["depol_u"] is not None:
            replace = draws["depol_u"] >= noise.depolarizing.p
            if replace.any():
                out[replace] = 0.0
                out[replace, draws["depol_index"][replace]] = 1.0
        return out, degenerate


def _lowered(psi, site, space):
    mask = space.site_mask(site)
    idx = np.arange(space.dim)
    up = (idx & mask) == 0
    out = np.zeros_like(psi)
    out[idx[up] | mask] = psi[idx[up]]
    return out


DRAW_FIELDS = ("dJ", "dB", "tau", "jump_u", "site_u", "depol_u", "depol_index")


def stack_draws(draws_list):
    """Per-trajectory StepDraws (length n each) -> dict of (M, n) arrays."""
    return {name: _stack_draw(draws_list, name) for name in DRAW_FIELDS}


def stack_column(stacked, j):
    return {name: (None if a is None else a[:, j]) for name, a in stacked.items()}
