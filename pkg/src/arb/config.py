"""Experiment configuration: JSON documents, validation, overrides, recipes.

A config is a nested JSON object with sections ``model``, ``disorder``,
``ensemble``, ``noise``, ``protocol``, ``analysis`` and optional
``diagnostics``. A recipe is a base config plus named variants, each a set
of ``key.path: value`` overrides; bundled recipes live in ``arb/recipes``.
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .analysis import DOMAINS, FORMS, WEIGHTINGS, DecayModel
from .hamiltonians import DisorderSpec, XYModelSpec
from .noise import DepolarizingHook, DissipationSpec, FluctuationNoise, NoiseModel, TimestepJitter
from .runner import DEFAULT_LENGTHS, INVERSION_MODES, ProtocolConfig, config_hash

RECIPE_NAMES = (
    "fig1_nn", "fig2_aa", "fig3_field_sweep", "fig4_dt_jitter", "fig5_spont_emission",
    "fig6_noisy_inversion", "fig7_dt_sweep", "appD_R_sweep", "appD_nseq_sweep", "frame_potential_sweep",
)

DEFAULTS = {
    "model": {"n_sites": 6, "J": 1.0, "B": 10.0, "alpha": "inf"},
    "disorder": {"scope": "global", "axis": "x", "distribution": "normal", "std_dev": 1.0},
    "ensemble": {"K": 1000, "dt": 0.005, "seed": 1, "cache": None},
    "noise": {
        "fluctuation": {"mean_J": 0.0, "mean_B": 0.0, "sigma_J": 0.2, "sigma_B": 0.5, "distribution": "normal"},
        "jitter": None,
        "dissipation": None,
        "depolarizing": None,
        "noisy_inversion": False,
    },
    "protocol": {
        "lengths": list(DEFAULT_LENGTHS),
        "n_seq": 100,
        "R": 10,
        "inversion_mode": "mirror_perfect",
        "measurement": "exact_overlap",
        "n_shots": None,
        "p_prep": 1.0,
        "p_meas": 1.0,
        "seed": 0,
    },
    "analysis": {"form": "standard", "A_mode": "fixed", "B_mode": "fixed", "domain": "step",
                 "weighting": "inverse_variance", "epsilon": None},
    "threads": None,
}

ALIASES = {
    "n_seq": "protocol.n_seq",
    "R": "protocol.R",
    "S_T": "protocol.lengths",
    "lengths": "protocol.lengths",
    "inversion_mode": "protocol.inversion_mode",
    "K": "ensemble.K",
    "dt": "ensemble.dt",
    "B": "model.B",
    "J": "model.J",
    "sigma_J": "noise.fluctuation.sigma_J",
    "sigma_B": "noise.fluctuation.sigma_B",
    "gamma": "noise.dissipation.gamma",
}


class ConfigError(ValueError):
    """Invalid configuration; ``violations`` lists (field path, message)."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.violations))


# -- dict helpers --------------------------------------------------------------------
def deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_value(text: str):
    """CLI value: JSON if it parses, '{1,2}' or '1,2' as a list, else a string."""
    s = text.strip()
    try:
        return json.loads(s)
    except json.JSONDecodeError:
        pass
    if (s.startswith("{") and s.endswith("}")) or "," in s:
        inner = s[1:-1] if s.startswith("{") else s
        return [parse_value(p) for p in inner.split(",") if p.strip()]
    low = s.lower()
    if low in ("inf", "infinity", "nn"):
        return "inf"
    if low in ("none", "null"):
        return None
    return s


def set_path(cfg: dict, key: str, value) -> dict:
    """Copy of ``cfg`` with the dotted ``key`` set; missing sections are created."""
    key = ALIASES.get(key, key)
    out = copy.deepcopy(cfg)
    node = out
    parts = key.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value
    return out


def apply_overrides(cfg: dict, overrides) -> dict:
    """Overrides as a mapping or a list of 'key=value' strings."""
    if isinstance(overrides, dict):
        items = overrides.items()
    else:
        items = []
        for item in overrides or ():
            if "=" not in item:
                raise ConfigError([(item, "override must look like key=value")])
            k, v = item.split("=", 1)
            items.append((k.strip(), parse_value(v)))
    for k, v in items:
        cfg = set_path(cfg, k, v)
    return cfg


def expand_lengths(spec):
    if isinstance(spec, dict):
        start, stop, step = int(spec["start"]), int(spec["stop"]), int(spec.get("step", 1))
        return list(range(start, stop + 1, step))
    if isinstance(spec, (int, float)):
        return [int(spec)]
    if isinstance(spec, str):
        raise ValueError("lengths must be a list, an integer or {start, stop, step}")
    return [int(v) for v in spec]


def _alpha(value) -> float:
    if value is None or (isinstance(value, str) and value.lower() in ("inf", "nn", "infinity")):
        return math.inf
    return float(value)


# -- validation -----------------------------------------------------------------------------
def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate_dict(raw: dict) -> dict:
    """Defaults merged and range-checked; raises ConfigError listing every violation."""
    cfg = deep_merge(DEFAULTS, raw)
    bad = []

    def need(cond, path, msg):
        if not cond:
            bad.append((path, msg))

    m = cfg["model"]
    need(isinstance(m.get("n_sites"), int) and 1 <= m["n_sites"] <= 12, "model.n_sites", "integer in [1, 12]")
    need(_num(m.get("J")) and m["J"] != 0, "model.J", "nonzero number")
    need(_num(m.get("B")), "model.B", "number")
    try:
        need(_alpha(m.get("alpha")) >= 0, "model.alpha", ">= 0 or 'inf'")
    except (TypeError, ValueError):
        bad.append(("model.alpha", ">= 0 or 'inf'"))

    dis = cfg["disorder"]
    need(dis.get("scope") in ("global", "local"), "disorder.scope", "global or local")
    need(dis.get("axis") in ("x", "y", "z"), "disorder.axis", "x, y or z")
    need(dis.get("distribution") in ("normal", "uniform"), "disorder.distribution", "normal or uniform")
    need(_num(dis.get("std_dev")) and dis["std_dev"] > 0, "disorder.std_dev", "> 0")

    e = cfg["ensemble"]
    need(isinstance(e.get("K"), int) and e["K"] >= 1, "ensemble.K", "integer >= 1")
    need(_num(e.get("dt")) and e["dt"] > 0, "ensemble.dt", "> 0")
    need(isinstance(e.get("seed"), int) and e["seed"] >= 0, "ensemble.seed", "integer >= 0")

    n = cfg["noise"]
    fl = n.get("fluctuation")
    if fl is not None:
        for k in ("sigma_J", "sigma_B"):
            need(_num(fl.get(k, 0.0)) and fl.get(k, 0.0) >= 0, f"noise.fluctuation.{k}", ">= 0")
        for k in ("mean_J", "mean_B"):
            need(_num(fl.get(k, 0.0)), f"noise.fluctuation.{k}", "number")
        need(fl.get("distribution", "normal") in ("normal", "uniform"), "noise.fluctuation.distribution", "normal or uniform")
    jt = n.get("jitter")
    if jt is not None:
        for k in ("rel_forward", "rel_backward"):
            need(_num(jt.get(k, 0.0)) and 0 <= jt.get(k, 0.0) < 1, f"noise.jitter.{k}", "in [0, 1)")
        need(jt.get("distribution", "uniform") in ("normal", "uniform"), "noise.jitter.distribution", "normal or uniform")
    ds = n.get("dissipation")
    if ds is not None:
        need(_num(ds.get("gamma", 0.0)) and ds.get("gamma", 0.0) >= 0, "noise.dissipation.gamma", ">= 0")
    dp = n.get("depolarizing")
    if dp is not None:
        need(_num(dp.get("p")) and 0 <= dp["p"] <= 1, "noise.depolarizing.p", "in [0, 1]")
    need(isinstance(n.get("noisy_inversion"), bool), "noise.noisy_inversion", "boolean")

    p = cfg["protocol"]
    try:
        lengths = expand_lengths(p.get("lengths"))
        need(len(lengths) > 0 and min(lengths) >= 1, "protocol.lengths", "non-empty list of integers >= 1")
        p["lengths"] = lengths
    except (TypeError, ValueError, KeyError):
        bad.append(("protocol.lengths", "list of integers or {start, stop, step}"))
    need(isinstance(p.get("n_seq"), int) and p["n_seq"] >= 1, "protocol.n_seq", "integer >= 1")
    need(isinstance(p.get("R"), int) and p["R"] >= 1, "protocol.R", "integer >= 1")
    need(p.get("inversion_mode") in INVERSION_MODES, "protocol.inversion_mode", f"one of {list(INVERSION_MODES)}")
    need(p.get("measurement") in ("exact_overlap", "sampled_shots"), "protocol.measurement", "exact_overlap or sampled_shots")
    if p.get("measurement") == "sampled_shots":
        need(isinstance(p.get("n_shots"), int) and p["n_shots"] >= 1, "protocol.n_shots", "integer >= 1 for sampled_shots")
    for k in ("p_prep", "p_meas"):
        need(_num(p.get(k)) and 0 <= p[k] <= 1, f"protocol.{k}", "in [0, 1]")
    need(isinstance(p.get("seed"), int) and p["seed"] >= 0, "protocol.seed", "integer >= 0")
    if p.get("inversion_mode") == "mirror_perfect" and n.get("noisy_inversion") is True:
        bad.append(("noise.noisy_inversion", "conflicts with protocol.inversion_mode mirror_perfect"))

    a = cfg["analysis"]
    need(a.get("form") in FORMS, "analysis.form", f"one of {list(FORMS)}")
    need(a.get("A_mode") in ("fixed", "free"), "analysis.A_mode", "fixed or free")
    need(a.get("B_mode") in ("fixed", "free"), "analysis.B_mode", "fixed or free")
    need(a.get("domain") in DOMAINS, "analysis.domain", f"one of {list(DOMAINS)}")
    need(a.get("weighting") in WEIGHTINGS, "analysis.weighting", f"one of {list(WEIGHTINGS)}")
    eps = a.get("epsilon")
    need(eps is None or (_num(eps) and eps >= 0), "analysis.epsilon", "null or >= 0")

    th = cfg.get("threads")
    need(th is None or (isinstance(th, int) and th >= 1), "threads", "null or integer >= 1")
    if bad:
        raise ConfigError(bad)
    return cfg


# -- typed view -------------------------------------------------------------------------------
@dataclass
class ExperimentConfig:
    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        return cls(validate_dict(raw))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(read_json(path))

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    @property
    def hash(self) -> str:
        return config_hash(self.data)

    def model(self) -> XYModelSpec:
        m = self.data["model"]
        return XYModelSpec(m["n_sites"], float(m["J"]), float(m["B"]), _alpha(m["alpha"]))

    def disorder(self) -> DisorderSpec:
        d = self.data["disorder"]
        return DisorderSpec(d["scope"], d["axis"], d["distribution"], float(d["std_dev"]))

    def ensemble(self):
        from .hamiltonians import load_ensemble

        e = self.data["ensemble"]
        return load_ensemble(self.model(), self.disorder(), e["K"], float(e["dt"]), e["seed"], e.get("cache"))

    def noise(self) -> NoiseModel:
        n = self.data["noise"]
        fl = FluctuationNoise(**n["fluctuation"]) if n.get("fluctuation") else None
        jt = TimestepJitter(**n["jitter"]) if n.get("jitter") else None
        ds = DissipationSpec(**n["dissipation"]) if n.get("dissipation") else None
        dp = DepolarizingHook(**n["depolarizing"]) if n.get("depolarizing") else None
        return NoiseModel(fl, jt, ds, dp, bool(n.get("noisy_inversion", False)))

    def protocol(self) -> ProtocolConfig:
        p = dict(self.data["protocol"])
        p["lengths"] = tuple(expand_lengths(p["lengths"]))
        return ProtocolConfig(**p)

    def decay_model(self) -> DecayModel:
        a = self.data["analysis"]
        return DecayModel(a["form"], a["A_mode"], a["B_mode"], a["domain"], a["weighting"])

    def threads(self) -> int | None:
        env = os.environ.get("ARB_THREADS")
        if env:
            return int(env)
        return self.data.get("threads")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([("<file>", f"invalid JSON: {exc}")]) from exc


def validate_config(path) -> ExperimentConfig:
    """Parse and range-check a config file (recipes validate every variant)."""
    raw = read_json(path)
    if "base" in raw or "recipe" in raw:
        recipe = raw.get("recipe", raw)
        resolved = resolve_recipe(recipe)
        return resolved[0][1]
    return ExperimentConfig.from_dict(raw)


# -- recipes -------------------------------------------------------------------------------------
def load_recipe(name_or_path) -> dict:
    """Bundled recipe by name, or a JSON file (plain config, recipe or run manifest)."""
    p = Path(str(name_or_path))
    if p.suffix == ".json" or p.exists():
        raw = read_json(p)
        if "recipe" in raw:
            return raw["recipe"]
        if "base" in raw:
            return raw
        return {"name": p.stem, "kind": raw.pop("kind", "protocol"), "base": raw, "variants": [{"name": p.stem}]}
    if name_or_path not in RECIPE_NAMES:
        raise ConfigError([("recipe", f"unknown recipe {name_or_path!r}; known: {', '.join(RECIPE_NAMES)}")])
    text = resources.files("arb.recipes").joinpath(f"{name_or_path}.json").read_text()
    return json.loads(text)


def resolve_recipe(recipe: dict, overrides=()) -> list:
    """[(variant name, ExperimentConfig)] with variant and user overrides applied."""
    base = recipe.get("base", {})
    out, bad = [], []
    for var in recipe.get("variants") or [{"name": recipe.get("name", "run")}]:
        cfg = apply_overrides(base, var.get("set", {}))
        cfg = apply_overrides(cfg, overrides)
        try:
            out.append((var["name"], ExperimentConfig.from_dict(cfg)))
        except ConfigError as exc:
            bad.extend((f"{var['name']}:{p}", m) for p, m in exc.violations)
    if bad:
        raise ConfigError(bad)
    return out
