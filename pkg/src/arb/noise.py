"""Stochastic error mechanisms for forward and backward evolution.

Noise is applied per unitary application. A step's random numbers are drawn
up front into a :class:`StepDraws` record so that the dense single-state
path here and the batched path in :mod:`arb.propagate` consume identical
samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .hamiltonians import XYModelSpec, draw_scaled, hopping_operator
from .quantum import HilbertSpace, normalize, total_sz

FORWARD = "forward"
BACKWARD = "backward"
DIRECTIONS = (FORWARD, BACKWARD)

NORM_FLOOR = 1e-300


class TrajectoryDegenerateError(RuntimeError):
    """A trajectory lost all of its norm."""


@dataclass(frozen=True)
class FluctuationNoise:
    """Global shifts (dJ, dB) of the static coupling and field per application."""

    mean_J: float = 0.0
    mean_B: float = 0.0
    sigma_J: float = 0.0
    sigma_B: float = 0.0
    distribution: str = "normal"

    def __post_init__(self):
        if self.sigma_J < 0 or self.sigma_B < 0:
            raise ValueError("fluctuation standard deviations must be >= 0")
        if self.distribution not in ("normal", "uniform"):
            raise ValueError(f"unknown distribution {self.distribution!r}")

    @property
    def active(self) -> bool:
        return bool(self.sigma_J or self.sigma_B or self.mean_J or self.mean_B)

    def draw(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        dJ = self.mean_J + (draw_scaled(self.distribution, self.sigma_J, rng, size) if self.sigma_J else np.zeros(size))
        dB = self.mean_B + (draw_scaled(self.distribution, self.sigma_B, rng, size) if self.sigma_B else np.zeros(size))
        return dJ, dB


@dataclass(frozen=True)
class TimestepJitter:
    """Relative uncertainty of the evolution time in each direction.

    Uniform jitter draws from [dt (1 - x), dt (1 + x)]; normal jitter has
    standard deviation x dt. A zero backward uncertainty replays the forward
    step's duration exactly.
    """

    rel_forward: float = 0.0
    rel_backward: float = 0.0
    distribution: str = "uniform"

    def __post_init__(self):
        for name in ("rel_forward", "rel_backward"):
            x = getattr(self, name)
            if not 0 <= x < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {x}")
        if self.distribution not in ("normal", "uniform"):
            raise ValueError(f"unknown distribution {self.distribution!r}")

    def rel(self, direction: str) -> float:
        return self.rel_forward if direction == FORWARD else self.rel_backward

    def draw(self, dt: float, direction: str, rng: np.random.Generator, size: int) -> np.ndarray:
        x = self.rel(direction)
        if self.distribution == "uniform":
            tau = rng.uniform(dt * (1 - x), dt * (1 + x), size)
        else:
            tau = dt + rng.normal(0.0, x * dt, size)
        return np.maximum(tau, 1e-6 * dt)


@dataclass(frozen=True)
class DissipationSpec:
    """Spontaneous emission at rate gamma on every site (jump operators sigma_j^-)."""

    gamma: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")


@dataclass(frozen=True)
class DepolarizingHook:
    """Synthetic depolarizing map rho -> p rho + (1 - p) I/d after each forward step.

    Unravelled on pure states: with probability 1 - p the state is replaced
    by a uniformly random computational-basis state. Used to check the
    runner and fitter against the closed-form decay.
    """

    p: float

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError("depolarizing p must lie in [0, 1]")


@dataclass(frozen=True)
class NoiseModel:
    fluctuation: FluctuationNoise | None = None
    jitter: TimestepJitter | None = None
    dissipation: DissipationSpec | None = None
    depolarizing: DepolarizingHook | None = None
    noisy_inversion: bool = False

    def fluctuates(self, direction: str) -> bool:
        if self.fluctuation is None or not self.fluctuation.active:
            return False
        return direction == FORWARD or self.noisy_inversion

    def dissipates(self, direction: str) -> bool:
        if self.dissipation is None or self.dissipation.gamma == 0:
            return False
        return direction == FORWARD or self.noisy_inversion

    def jitters(self, direction: str) -> bool:
        return self.jitter is not None and self.jitter.rel(direction) > 0

    def depolarizes(self, direction: str) -> bool:
        return self.depolarizing is not None and direction == FORWARD and self.depolarizing.p < 1

    @property
    def is_empty(self) -> bool:
        return not any(
            f(d) for d in DIRECTIONS for f in (self.fluctuates, self.dissipates, self.jitters, self.depolarizes)
        )

    @property
    def replays_forward_time(self) -> bool:
        """Backward steps reuse the forward durations (jittered forward, exact inverse)."""
        return self.jitters(FORWARD) and not self.jitters(BACKWARD)


@dataclass
class StepDraws:
    """Random numbers for n consecutive steps of one trajectory (None = inactive)."""

    dJ: np.ndarray | None = None
    dB: np.ndarray | None = None
    tau: np.ndarray | None = None
    jump_u: np.ndarray | None = None
    site_u: np.ndarray | None = None
    depol_u: np.ndarray | None = None
    depol_index: np.ndarray | None = None

    def at(self, j: int) -> "StepDraws":
        return StepDraws(**{k: (None if v is None else v[j : j + 1]) for k, v in vars(self).items()})


def draw_steps(noise: NoiseModel, direction: str, dt: float, rng: np.random.Generator, n: int, dim: int) -> StepDraws:
    """Draw the randomness for ``n`` steps in a fixed order."""
    draws = StepDraws()
    if noise.fluctuates(direction):
        draws.dJ, draws.dB = noise.fluctuation.draw(rng, n)
    if noise.jitters(direction):
        draws.tau = noise.jitter.draw(dt, direction, rng, n)
    if noise.dissipates(direction):
        draws.jump_u = rng.random(n)
        draws.site_u = rng.random(n)
    if noise.depolarizes(direction):
        draws.depol_u = rng.random(n)
        draws.depol_index = rng.integers(0, dim, n)
    return draws


@dataclass(frozen=True)
class PerturbableHamiltonian:
    """H_k = H_s(J, B) + zeta_k with the static part kept symbolic."""

    model: XYModelSpec
    disorder: np.ndarray

    def matrix(self, dJ: float = 0.0, dB: float = 0.0) -> np.ndarray:
        return perturbed_hamiltonian(self.model, self.disorder, dJ, dB)


def perturbed_hamiltonian(model: XYModelSpec, disorder: np.ndarray, dJ: float = 0.0, dB: float = 0.0) -> np.ndarray:
    """H_s(J + dJ, B + dB) + zeta_k; the disorder term is left untouched."""
    return (model.J + dJ) * hopping_operator(model) + (model.B + dB) * total_sz(model.space) + disorder


def excitation_numbers(space: HilbertSpace) -> np.ndarray:
    """(dim, n_sites) table of <x|sigma_j^+ sigma_j^-|x> (1 where site j is up)."""
    idx = np.arange(space.dim)
    return np.stack([1 - space.bit(idx, j) for j in range(space.n_sites)], axis=1).astype(float)


def lower(psi: np.ndarray, site: int, space: HilbertSpace) -> np.ndarray:
    """sigma_site^- psi (up -> down), unnormalized."""
    mask = space.site_mask(site)
    idx = np.arange(space.dim)
    up = (idx & mask) == 0
    out = np.zeros_like(psi)
    out[..., idx[up] | mask] = psi[..., idx[up]]
    return out


def choose_jump_site(populations: np.ndarray, u: float) -> int:
    cdf = np.cumsum(populations)
    return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), len(cdf) - 1))


def mcwf_jump(state: np.ndarray, gamma: float, dt: float, rng: np.random.Generator, space: HilbertSpace | None = None) -> np.ndarray:
    """One first-order Monte Carlo wavefunction step with no Hamiltonian.

    Emits with probability gamma dt sum_j <n_j> at a site chosen in
    proportion to <n_j>; otherwise applies exp(-gamma dt n / 2).
    """
    space = space or HilbertSpace(int(round(np.log2(state.shape[0]))))
    return _mcwf(state, None, gamma, dt, 1, rng.random(), rng.random(), space)


def _mcwf(state, h, gamma, tau, sign, jump_u, site_u, space):
    occ = excitation_numbers(space)
    pops = np.abs(state) ** 2 @ occ
    p_jump = gamma * tau * pops.sum()
    if jump_u < p_jump:
        psi = lower(state, choose_jump_site(pops, site_u), space)
    else:
        decay = -0.5 * gamma * occ.sum(axis=1)
        if h is None:
            psi = state * np.exp(decay * tau)
        else:
            gen = -1j * sign * h + np.diag(decay)
            psi = scipy.linalg.expm(gen * tau) @ state
    norm = np.linalg.norm(psi)
    if not norm > NORM_FLOOR:
        raise TrajectoryDegenerateError("trajectory norm vanished")
    return psi / norm


def apply_step(
    state: np.ndarray,
    h: PerturbableHamiltonian,
    noise: NoiseModel,
    direction: str,
    dt: float,
    draws: StepDraws,
) -> np.ndarray:
    """Dense single-state step using pre-drawn randomness for one step."""
    sign = 1 if direction == FORWARD else -1
    dJ = draws.dJ[0] if draws.dJ is not None else 0.0
    dB = draws.dB[0] if draws.dB is not None else 0.0
    tau = draws.tau[0] if draws.tau is not None else dt
    hmat = h.matrix(dJ, dB)
    space = h.model.space
    if draws.jump_u is not None:
        psi = _mcwf(state, hmat, noise.dissipation.gamma, tau, sign, draws.jump_u[0], draws.site_u[0], space)
    else:
        evals, evecs = np.linalg.eigh(hmat)
        psi = normalize((evecs * np.exp(-1j * sign * evals * tau)) @ (evecs.conj().T @ state))
    if draws.depol_u is not None and draws.depol_u[0] >= noise.depolarizing.p:
        psi = np.zeros_like(psi)
        psi[draws.depol_index[0]] = 1.0
    return psi


def evolve_step(
    state: np.ndarray,
    h: PerturbableHamiltonian,
    noise: NoiseModel,
    direction: str,
    dt: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Apply one noisy step of H_k for time dt (backward: time -dt).

    Backward steps are noiseless unless ``noise.noisy_inversion`` is set.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    draws = draw_steps(noise, direction, dt, rng, 1, len(state))
    return apply_step(state, h, noise, direction, dt, draws)
