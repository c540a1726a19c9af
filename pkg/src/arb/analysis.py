"""Decay fitting, error rates, epsilon bounds and the random-state baseline.

The fit parameterises f = sigmoid(theta) so 0 < f < 1 holds throughout the
iteration, and works with 1 - f = sigmoid(-theta) directly to keep precision
when f is within a few ulps of 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import expit, logit

from .hamiltonians import UnitaryEnsemble
from .noise import FORWARD, NoiseModel, draw_steps
from .propagate import BatchPropagator
from .quantum import HilbertSpace

FORMS = ("standard", "noisy_inversion")
DOMAINS = ("step", "time")
WEIGHTINGS = ("inverse_variance", "none")


class FitConvergenceError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class SingularBoundError(ValueError):
    pass


@dataclass(frozen=True)
class DecayModel:
    form: str = "standard"
    A_mode: str = "fixed"
    B_mode: str = "fixed"
    domain: str = "step"
    weighting: str = "inverse_variance"

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"form must be one of {FORMS}")
        if self.A_mode not in ("fixed", "free") or self.B_mode not in ("fixed", "free"):
            raise ValueError("A_mode and B_mode must be 'fixed' or 'free'")
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")

    @property
    def n_params(self) -> int:
        return 1 + (self.A_mode == "free") + (self.B_mode == "free")


@dataclass
class DecayFit:
    model: DecayModel
    d: int
    A: float
    B: float
    f: float
    r: float
    ci95: dict
    rss: float
    rss_unweighted: float
    dof: int
    weighted: bool
    residuals: np.ndarray = field(repr=False)
    iterations: int = 0
    at_boundary: bool = False
    offset: float = 0.0

    def exponent(self, x):
        x = np.asarray(x, dtype=float)
        return 2 * (x - self.offset) if self.model.form == "noisy_inversion" else x

    def curve(self, x) -> np.ndarray:
        return self.A + self.B * self.f ** self.exponent(x)

    def to_dict(self) -> dict:
        return {
            "form": self.model.form,
            "domain": self.model.domain,
            "A_mode": self.model.A_mode,
            "B_mode": self.model.B_mode,
            "weighting": self.model.weighting,
            "d": self.d,
            "A": self.A,
            "B": self.B,
            "f": self.f,
            "r": self.r,
            "ci95": {k: list(v) for k, v in self.ci95.items()},
            "rss": self.rss,
            "rss_unweighted": self.rss_unweighted,
            "dof": self.dof,
            "weighted": self.weighted,
            "iterations": self.iterations,
            "at_boundary": self.at_boundary,
        }


def error_rate(f, d: int):
    """r = (d - 1)(1 - f) / d."""
    f_arr = np.asarray(f, dtype=float)
    if np.any(f_arr < 0) or np.any(f_arr > 1):
        raise ValueError("f must lie in [0, 1]")
    r = (d - 1) * (1 - f_arr) / d
    return float(r) if r.ndim == 0 else r


def step_to_time(f_step: float, dt: float, J: float = 1.0) -> float:
    """Per-step decay -> per unit of T J."""
    return float(f_step ** (1.0 / (dt * abs(J))))


def time_to_step(f_time: float, dt: float, J: float = 1.0) -> float:
    return float(f_time ** (dt * abs(J)))


# -- fitting ----------------------------------------------------------------------------
def _dataset_arrays(dataset, model: DecayModel):
    rows = dataset.rows
    l = np.array([r.l for r in rows], dtype=float)
    x = l if model.domain == "step" else np.array([r.TJ for r in rows], dtype=float)
    y = np.array([r.mean_P for r in rows], dtype=float)
    se = np.array([r.stderr for r in rows], dtype=float)
    unit = float(x[0] / l[0])
    return x, y, se, unit


def fit_decay(
    dataset,
    model: DecayModel = DecayModel(),
    *,
    d: int | None = None,
    max_iter: int = 500,
    tol: float = 1e-14,
) -> DecayFit:
    """Weighted least-squares fit of P = A + B f^x (or A + B f^(2(x - x1))).

    ``dataset`` is a SurvivalDataset; the x variable is l in the step domain
    and T J in the time domain.
    """
    x, y, se, unit = _dataset_arrays(dataset, model)
    d = d or dataset.d
    return fit_arrays(x, y, se, model, d=d, unit=unit, max_iter=max_iter, tol=tol)


def fit_arrays(x, y, se=None, model: DecayModel = DecayModel(), *, d: int = 64, unit: float = 1.0,
               max_iter: int = 500, tol: float = 1e-14) -> DecayFit:
    """Damped Gauss-Newton on (theta, [A], [B]) with f = sigmoid(theta).

    ``unit`` is the x value of one step; the noisy-inversion exponent is
    2 (x - unit).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(y)
    x, y = x[keep], y[keep]
    se = None if se is None else np.asarray(se, dtype=float)[keep]
    n_distinct = len(np.unique(x))
    need = 3 if model.n_params > 1 else 2
    if n_distinct < need:
        raise ValueError(f"need at least {need} distinct lengths, got {n_distinct}")
    # 'none' ignores se; rare events can make a sampled se collapse to ~0
    weighted = model.weighting == "inverse_variance" and se is not None and bool(np.all(se > 0))
    w = 1.0 / se**2 if weighted else np.ones_like(y)
    sw = np.sqrt(w)
    offset = unit if model.form == "noisy_inversion" else 0.0
    expo = 2 * (x - offset) if model.form == "noisy_inversion" else x
    free_A, free_B = model.A_mode == "free", model.B_mode == "free"
    A0, B0 = 1.0 / d, (d - 1.0) / d

    def unpack(p):
        theta = p[0]
        i = 1
        A = p[i] if free_A else A0
        i += free_A
        B = p[i] if free_B else B0
        return theta, A, B

    def evaluate(p):
        theta, A, B = unpack(p)
        log_f = -np.logaddexp(0.0, -theta)
        g = np.exp(expo * log_f)
        pred = A + B * g
        # d f^e / d theta = e f^e (1 - f)
        cols = [B * g * expo * expit(-theta)]
        if free_A:
            cols.append(np.ones_like(g))
        if free_B:
            cols.append(g)
        return pred, np.stack(cols, axis=1)

    # start from a log-linear estimate of f
    B_start = B0
    frac = np.clip((y - A0) / B_start, 1e-6, 1.0)
    slope = np.sum(expo * np.log(frac)) / max(np.sum(expo * expo), 1e-300)
    f_start = float(np.clip(np.exp(slope), 1e-6, 1 - 1e-12))
    p = [logit(f_start)]
    if free_A:
        p.append(A0)
    if free_B:
        p.append(B0)
    p = np.array(p, dtype=float)

    lam = 1e-3
    pred, jac = evaluate(p)
    res = sw * (y - pred)
    cost = float(res @ res)
    trace = [(0, cost, lam)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        jw = sw[:, None] * jac
        jtj = jw.T @ jw
        g = jw.T @ res
        step = np.linalg.solve(jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-300)), g)
        trial = p + step
        tpred, tjac = evaluate(trial)
        tres = sw * (y - tpred)
        tcost = float(tres @ tres)
        trace.append((it, tcost, lam))
        if tcost <= cost:
            small = np.all(np.abs(step) <= tol * (1 + np.abs(p))) or cost - tcost <= tol * max(cost, 1e-300)
            p, pred, jac, res, cost = trial, tpred, tjac, tres, tcost
            lam = max(lam / 10, 1e-15)
            if small or cost == 0.0:
                converged = True
                break
        else:
            lam *= 10
            if lam > 1e16:
                converged = True  # no further descent possible
                break
    if not converged:
        raise FitConvergenceError(f"fit did not converge in {max_iter} iterations", trace)

    theta, A, B = unpack(p)
    one_minus_f = float(expit(-theta))
    f = float(expit(theta))
    n_par = model.n_params
    dof = len(y) - n_par

    # covariance in natural parameters (f, [A], [B])
    g = np.exp(expo * -np.logaddexp(0.0, -theta))
    with np.errstate(divide="ignore", invalid="ignore"):
        dfe = np.where(expo == 0, 0.0, B * expo * g / f)
    cols = [dfe] + ([np.ones_like(g)] if free_A else []) + ([g] if free_B else [])
    jn = np.stack(cols, axis=1) * sw[:, None]
    rss_w = cost
    rss_u = float(np.sum((y - pred) ** 2))
    try:
        cov = np.linalg.pinv(jn.T @ jn)
    except np.linalg.LinAlgError:
        cov = np.full((n_par, n_par), np.inf)
    if not weighted:
        cov = cov * (rss_w / dof if dof > 0 else np.inf)
    tq = stats.t.ppf(0.975, dof) if dof > 0 else np.inf
    half = tq * np.sqrt(np.maximum(np.diag(cov), 0.0))
    names = ["f"] + (["A"] if free_A else []) + (["B"] if free_B else [])
    values = {"f": f, "A": A, "B": B}
    ci = {nm: (values[nm] - h, values[nm] + h) for nm, h in zip(names, half)}
    for nm, v in values.items():
        ci.setdefault(nm, (v, v))
    f_lo, f_hi = ci["f"]
    r = (d - 1) * one_minus_f / d
    ci["r"] = ((d - 1) * (1 - min(f_hi, 1.0)) / d, (d - 1) * (1 - max(f_lo, 0.0)) / d)
    return DecayFit(
        model=model, d=d, A=float(A), B=float(B), f=f, r=float(r), ci95=ci,
        rss=rss_w, rss_unweighted=rss_u, dof=dof, weighted=weighted,
        residuals=y - pred, iterations=it, at_boundary=bool(abs(theta) > 30), offset=offset,
    )


# -- epsilon bounds ------------------------------------------------------------------------
@dataclass(frozen=True)
class EpsilonBound:
    epsilon: float
    l: int
    p_s: float
    delta_P: float
    delta_f: float
    delta_r: float
    r_interval: tuple


def epsilon_bounds(fit: DecayFit | None = None, epsilon: float = 0.0, l: int = 1, p_s: float = 1.0,
                   *, f: float | None = None, B: float | None = None, r: float | None = None) -> EpsilonBound:
    """Shifts of P_l, f and r allowed by an epsilon-approximate 2-design.

    dP = l eps, df = eps / (f^(l-1) B), dr = eps / (f^(l-1) p_s).
    """
    if epsilon < 0 or l < 1 or not 0 < p_s <= 1:
        raise ValueError("need epsilon >= 0, l >= 1 and 0 < p_s <= 1")
    f = fit.f if f is None else f
    B = (fit.B if fit is not None else 1.0) if B is None else B
    r = (fit.r if fit is not None else 0.0) if r is None else r
    if f <= 0:
        if l > 1:
            raise SingularBoundError("f = 0 makes the bound singular for l > 1")
        log_scale = 0.0
    else:
        log_scale = (l - 1) * math.log(f)
    if epsilon == 0:
        delta_f = delta_r = 0.0
    else:
        scale = math.exp(log_scale)
        if scale > 0:
            delta_f = epsilon / (scale * B)
            delta_r = epsilon / (scale * p_s)
        else:
            # f^(l-1) underflows: go through logs so the bound is inf, not an error
            delta_f = _safe_exp(math.log(epsilon) - log_scale) / B
            delta_r = _safe_exp(math.log(epsilon) - log_scale) / p_s
    return EpsilonBound(epsilon, int(l), p_s, l * epsilon, delta_f, delta_r, (r - delta_r, r + delta_r))


def _safe_exp(x: float) -> float:
    return math.inf if x > 709 else math.exp(x)


def epsilon_envelope(fit: DecayFit, epsilon: float, x, lengths) -> tuple[np.ndarray, np.ndarray]:
    """Fitted curve -/+ l eps at the given points."""
    c = fit.curve(x)
    band = np.asarray(lengths, dtype=float) * epsilon
    return c - band, c + band


# -- random-state baseline -----------------------------------------------------------------
def product_states(space: HilbertSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    """Random computational-basis product states."""
    out = np.zeros((n, space.dim), dtype=complex)
    out[np.arange(n), rng.integers(0, space.dim, n)] = 1.0
    return out


def bloch_product_states(space: HilbertSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    """Tensor products of independent Haar-random qubit states."""
    out = np.ones((n, 1), dtype=complex)
    for _ in range(space.n_sites):
        q = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        out = np.einsum("ni,nj->nij", out, q).reshape(n, -1)
    return out


def haar_pure_states(space: HilbertSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(n, space.dim)) + 1j * rng.normal(size=(n, space.dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def box_pure_states(space: HilbertSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    """Normalised vectors with real and imaginary parts uniform on [0, 1) (not Haar)."""
    z = rng.random((n, space.dim)) + 1j * rng.random((n, space.dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


SAMPLERS = {
    "product_states": product_states,
    "bloch_product_states": bloch_product_states,
    "haar_pure_states": haar_pure_states,
    "box_pure_states": box_pure_states,
}


@dataclass(frozen=True)
class InfidelityEstimate:
    mean: float
    ci95: tuple
    stderr: float
    n_states: int
    n_draws: int
    per: str


def average_gate_infidelity(
    ensemble: UnitaryEnsemble,
    noise: NoiseModel,
    sampler: str = "product_states",
    n_states: int = 100,
    rng: np.random.Generator | None = None,
    *,
    n_draws: int = 100,
    per: str = "step",
    propagator: BatchPropagator | None = None,
) -> InfidelityEstimate:
    """Mean of 1 - |<U_k psi| Lambda(U_k) psi>|^2 over states, k and noise.

    ``per='time'`` divides by dt J, giving an infidelity per unit of T J.
    """
    if n_states < 2:
        raise ValueError("n_states must be >= 2")
    if sampler not in SAMPLERS:
        raise ValueError(f"sampler must be one of {sorted(SAMPLERS)}")
    if per not in DOMAINS:
        raise ValueError(f"per must be one of {DOMAINS}")
    rng = rng if rng is not None else np.random.default_rng()
    prop = propagator or BatchPropagator(ensemble)
    states = SAMPLERS[sampler](ensemble.space, n_states, rng)
    M = n_states * n_draws
    psi = np.repeat(states, n_draws, axis=0)
    k = rng.integers(0, ensemble.K, M)
    draws = vars(draw_steps(noise, FORWARD, ensemble.dt, rng, M, ensemble.dim))
    noisy, _ = prop.step(psi, k, noise, FORWARD, ensemble.dt, draws)
    ideal = prop.ideal(psi, k, FORWARD)
    infid = 1.0 - np.abs(np.einsum("mi,mi->m", ideal.conj(), noisy)) ** 2
    infid = np.maximum(infid, 0.0).reshape(n_states, n_draws).mean(axis=1)
    if per == "time":
        infid = infid / (ensemble.dt * abs(ensemble.model.J))
    mean = float(infid.mean())
    se = float(infid.std(ddof=1) / np.sqrt(n_states))
    h = float(stats.t.ppf(0.975, n_states - 1) * se)
    return InfidelityEstimate(mean, (mean - h, mean + h), se, n_states, n_draws, per)


def sandwich_check(r_fit: float, r_product: float, r_pure: float) -> bool:
    return bool(r_product <= r_fit <= r_pure)
