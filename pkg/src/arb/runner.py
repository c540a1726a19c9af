"""Mirrored-sequence benchmarking runs and survival datasets.

A run draws, for every length l, ``n_seq`` random index sequences and
evolves each one ``R`` times under fresh noise: forward through
U_{k_1}..U_{k_l}, then back through the mirror (or one composite inverse),
recording the overlap with the initial state.

All trajectories of one length are propagated together. Every random number
comes from a substream keyed by (seed, purpose, l, sequence[, repetition]),
so a sequence gives the same survivals whether it is run alone or inside a
full protocol, and smaller runs are nested prefixes of larger ones.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .hamiltonians import UnitaryEnsemble
from .noise import BACKWARD, FORWARD, NoiseModel, draw_steps
from .propagate import BatchPropagator, stack_column, stack_draws
from .quantum import cdw_state
from .rng import NOISE, SEQUENCE, SHOTS, substream

INVERSION_MODES = ("mirror_perfect", "mirror_noisy", "single_composite_inverse")
DEFAULT_LENGTHS = tuple(range(10, 301, 10))
CSV_COLUMNS = ("l", "T", "TJ", "mean_P", "stderr", "n_seq_effective", "R")


@dataclass(frozen=True)
class ProtocolConfig:
    lengths: tuple = DEFAULT_LENGTHS
    n_seq: int = 100
    R: int = 10
    inversion_mode: str = "mirror_perfect"
    measurement: str = "exact_overlap"
    n_shots: int | None = None
    p_prep: float = 1.0
    p_meas: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(int(l) for l in self.lengths))
        if not self.lengths or min(self.lengths) < 1:
            raise ValueError("lengths must be a non-empty list of integers >= 1")
        if self.n_seq < 1 or self.R < 1:
            raise ValueError("n_seq and R must be >= 1")
        if self.inversion_mode not in INVERSION_MODES:
            raise ValueError(f"inversion_mode must be one of {INVERSION_MODES}")
        if self.measurement not in ("exact_overlap", "sampled_shots"):
            raise ValueError("measurement must be exact_overlap or sampled_shots")
        if self.measurement == "sampled_shots" and (self.n_shots is None or self.n_shots < 1):
            raise ValueError("sampled_shots needs n_shots >= 1")
        for name in ("p_prep", "p_meas"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def p_spam(self) -> float:
        return self.p_prep * self.p_meas


@dataclass
class SequenceRecord:
    l: int
    indices: np.ndarray
    survivals: np.ndarray
    valid: bool = True

    @property
    def mean(self) -> float:
        return float(np.mean(self.survivals))


@dataclass
class LengthSummary:
    l: int
    T: float
    TJ: float
    mean_P: float
    stderr: float
    n_seq_effective: int
    R: int
    n_invalid: int = 0
    sequence_means: np.ndarray | None = field(default=None, repr=False)


@dataclass
class SurvivalDataset:
    rows: list
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    @property
    def lengths(self) -> np.ndarray:
        return self.column("l").astype(int)

    @property
    def d(self) -> int:
        return int(self.metadata.get("d", 64))

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow([r.l, repr(r.T), repr(r.TJ), repr(r.mean_P), repr(r.stderr), r.n_seq_effective, r.R])
        sidecar = path.with_suffix(".json")
        sidecar.write_text(json.dumps(self.metadata, indent=2, sort_keys=True, default=_jsonable))

    @classmethod
    def from_csv(cls, path) -> "SurvivalDataset":
        path = Path(path)
        rows = []
        with path.open() as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
            for rec in csv.DictReader(lines):
                rows.append(LengthSummary(
                    l=int(rec["l"]), T=float(rec["T"]), TJ=float(rec["TJ"]), mean_P=float(rec["mean_P"]),
                    stderr=float(rec["stderr"]), n_seq_effective=int(rec["n_seq_effective"]), R=int(rec["R"]),
                ))
        sidecar = path.with_suffix(".json")
        meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
        return cls(rows, meta)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    raise TypeError(f"not serializable: {type(obj)}")


def config_hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# -- sequences ------------------------------------------------------------------
def sample_sequence(ensemble: UnitaryEnsemble, l: int, rng: np.random.Generator) -> np.ndarray:
    """l indices drawn i.i.d. uniformly from 0..K-1."""
    return rng.integers(0, ensemble.K, size=int(l))


def sequence_stream(seed: int, l: int, s: int) -> np.random.Generator:
    return substream(seed, SEQUENCE, l, s)


def repetition_streams(seed: int, l: int, s: int, R: int) -> list:
    return [substream(seed, NOISE, l, s, r) for r in range(R)]


def apply_spam_placeholder(value, p_prep: float, p_meas: float, d: int):
    """P -> 1/d + p_prep p_meas (P - 1/d)."""
    for p in (p_prep, p_meas):
        if not 0 <= p <= 1:
            raise ValueError("SPAM parameters must lie in [0, 1]")
    return 1.0 / d + p_prep * p_meas * (np.asarray(value) - 1.0 / d)


def _effective_noise(noise: NoiseModel, mode: str) -> NoiseModel:
    if mode == "mirror_perfect" and noise.noisy_inversion:
        raise ValueError("noise.noisy_inversion conflicts with inversion_mode mirror_perfect")
    if mode == "mirror_noisy":
        return replace(noise, noisy_inversion=True)
    return noise


def _backward_is_ideal(noise: NoiseModel) -> bool:
    quiet = not (noise.fluctuates(BACKWARD) or noise.dissipates(BACKWARD) or noise.jitters(BACKWARD))
    return quiet and not noise.replays_forward_time


def simulate_batch(
    prop: BatchPropagator,
    noise: NoiseModel,
    config: ProtocolConfig,
    l: int,
    seqs: np.ndarray,
    streams: list,
    seq_ids: np.ndarray,
):
    """Survivals (n, R) and invalid mask (n,) for index sequences ``seqs`` (n, l).

    ``streams[m]`` is the generator of trajectory m = s * R + r.
    """
    ens = prop.ensemble
    dt, dim, R = ens.dt, ens.dim, config.R
    mode = config.inversion_mode
    noise = _effective_noise(noise, mode)
    n = seqs.shape[0]
    M = n * R
    traj_seq = np.repeat(np.arange(n), R)
    fwd, bwd, comp = [], [], []
    for rng in streams:
        fwd.append(draw_steps(noise, FORWARD, dt, rng, l, dim))
        if mode == "single_composite_inverse":
            comp.append(draw_steps(noise, FORWARD, dt, rng, 1, dim))
        else:
            bwd.append(draw_steps(noise, BACKWARD, dt, rng, l, dim))
    fwd = stack_draws(fwd)
    psi0 = cdw_state(ens.space)
    psi = np.tile(psi0, (M, 1))
    bad = np.zeros(M, dtype=bool)
    for j in range(l):
        k = seqs[traj_seq, j]
        psi, deg = prop.step(psi, k, noise, FORWARD, dt, stack_column(fwd, j))
        bad |= deg

    if mode == "single_composite_inverse":
        for j in reversed(range(l)):
            psi = prop.ideal(psi, seqs[traj_seq, j], BACKWARD)
        comp = stack_draws(comp)
        psi, deg = prop.step(psi, seqs[traj_seq, 0], noise, FORWARD, dt, stack_column(comp, 0), tau=dt, hamiltonian=False)
        bad |= deg
        overlap = psi @ psi0.conj()
    elif _backward_is_ideal(noise):
        ideal = np.tile(psi0, (n, 1))
        for j in range(l):
            ideal = prop.ideal(ideal, seqs[:, j], FORWARD)
        overlap = np.einsum("mi,mi->m", ideal[traj_seq].conj(), psi)
    else:
        bwd = stack_draws(bwd)
        for j in reversed(range(l)):
            col = stack_column(bwd, j)
            tau = fwd["tau"][:, j] if noise.replays_forward_time else None
            psi, deg = prop.step(psi, seqs[traj_seq, j], noise, BACKWARD, dt, col, tau=tau)
            bad |= deg
        overlap = psi @ psi0.conj()

    surv = np.clip(np.abs(overlap) ** 2, 0.0, 1.0)
    if config.measurement == "sampled_shots":
        shots = np.empty(M)
        for m in range(M):
            s, r = divmod(m, R)
            rng = substream(config.seed, SHOTS, l, int(seq_ids[s]), r)
            shots[m] = rng.binomial(config.n_shots, surv[m]) / config.n_shots
        surv = shots
    if config.p_spam != 1.0:
        surv = apply_spam_placeholder(surv, config.p_prep, config.p_meas, dim)
    return surv.reshape(n, R), bad.reshape(n, R).any(axis=1)


def run_sequence(
    indices,
    ensemble: UnitaryEnsemble,
    noise: NoiseModel,
    config: ProtocolConfig,
    rng_streams=None,
    sequence_index: int = 0,
    propagator: BatchPropagator | None = None,
) -> SequenceRecord:
    """Evolve one index sequence R times; streams default to the protocol's own."""
    indices = np.asarray(indices, dtype=np.int64)
    l = len(indices)
    if rng_streams is None:
        rng_streams = repetition_streams(config.seed, l, sequence_index, config.R)
    if len(rng_streams) != config.R:
        raise ValueError("need one generator per repetition")
    prop = propagator or BatchPropagator(ensemble)
    surv, bad = simulate_batch(prop, noise, config, l, indices[None, :], list(rng_streams), np.array([sequence_index]))
    return SequenceRecord(l, indices, surv[0], valid=not bad[0])


def _stderr(seq_means: np.ndarray, survivals: np.ndarray) -> float:
    if len(seq_means) >= 2:
        return float(np.std(seq_means, ddof=1) / np.sqrt(len(seq_means)))
    if survivals.size >= 2:
        return float(np.std(survivals, ddof=1) / np.sqrt(survivals.size))
    return 0.0


def run_protocol(
    ensemble: UnitaryEnsemble,
    noise: NoiseModel,
    config: ProtocolConfig,
    *,
    chunk: int = 2048,
    progress=None,
    metadata: dict | None = None,
) -> SurvivalDataset:
    """Survival dataset over ``config.lengths``; deterministic in ``config.seed``."""
    prop = BatchPropagator(ensemble)
    model = ensemble.model
    rows = []
    n_invalid_total = 0
    per_chunk = max(1, chunk // config.R)
    for l in config.lengths:
        seqs = np.stack([sample_sequence(ensemble, l, sequence_stream(config.seed, l, s)) for s in range(config.n_seq)])
        surv = np.empty((config.n_seq, config.R))
        bad = np.zeros(config.n_seq, dtype=bool)
        for s0 in range(0, config.n_seq, per_chunk):
            ids = np.arange(s0, min(config.n_seq, s0 + per_chunk))
            streams = [g for s in ids for g in repetition_streams(config.seed, l, int(s), config.R)]
            surv[ids], bad[ids] = simulate_batch(prop, noise, config, l, seqs[ids], streams, ids)
        good = surv[~bad]
        means = good.mean(axis=1)
        n_eff = int(len(means))
        n_invalid_total += int(bad.sum())
        T = l * ensemble.dt
        rows.append(LengthSummary(
            l=int(l), T=T, TJ=T * abs(model.J),
            mean_P=float(means.mean()) if n_eff else float("nan"),
            stderr=_stderr(means, good), n_seq_effective=n_eff, R=config.R,
            n_invalid=int(bad.sum()), sequence_means=means,
        ))
        if progress is not None:
            progress(l)
    meta = {
        "seed": config.seed,
        "J": model.J,
        "dt": ensemble.dt,
        "d": ensemble.dim,
        "n_invalid": n_invalid_total,
        "invalid_per_length": {str(r.l): r.n_invalid for r in rows},
        "version": __version__,
        "protocol": asdict(config),
    }
    if metadata:
        meta.update(metadata)
    meta.setdefault("config_hash", config_hash(meta))
    return SurvivalDataset(rows, meta)
