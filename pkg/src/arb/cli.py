"""Command-line entry point: ``arb run | fit | diagnose | validate``.

Exit codes: 0 success, 1 validation error, 2 runtime error. Errors are
reported on stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import DecayModel, FitConvergenceError, average_gate_infidelity, epsilon_bounds, fit_decay
from .config import ConfigError, ExperimentConfig, load_recipe, resolve_recipe, validate_config
from .designs import frame_potential_sweep
from .rng import DIAGNOSTICS, INFIDELITY, substream
from .runner import SurvivalDataset, config_hash, run_protocol

log = logging.getLogger("arb")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def set_threads(n):
    """Apply a thread budget to numba's pool (capped at what numba started with)."""
    if n is None:
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def provenance_line(meta: dict) -> str:
    return f"# config_hash={meta.get('config_hash')} seed={meta.get('seed')} version={__version__}"


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


def write_dataset(ds: SurvivalDataset, path: Path) -> None:
    ds.to_csv(path)
    body = path.read_text()
    path.write_text(provenance_line(ds.metadata) + "\n" + body)


def fit_report(fit, meta: dict, epsilon=None, eps_lengths=None) -> dict:
    rep = fit.to_dict()
    rep.update(config_hash=meta.get("config_hash"), seed=meta.get("seed"), version=__version__)
    if epsilon is not None:
        rep["epsilon_bounds"] = [vars(epsilon_bounds(fit, float(epsilon), int(l))) for l in (eps_lengths or [1])]
    return rep


def write_curve(fit, x, path: Path, meta: dict) -> None:
    xs = np.linspace(0.0, float(np.max(x)), 200)
    with path.open("w", newline="") as fh:
        fh.write(provenance_line(meta) + "\n")
        w = csv.writer(fh)
        w.writerow(["x", "P_fit"])
        for a, b in zip(xs, fit.curve(xs)):
            w.writerow([repr(float(a)), repr(float(b))])


# -- commands ------------------------------------------------------------------------------
def run_variant(name: str, cfg: ExperimentConfig, out: Path, kind: str) -> dict:
    raw = cfg.to_dict()
    h = cfg.hash
    started = time.time()
    ens = cfg.ensemble()
    files = []
    if kind == "frame_potential":
        diag = raw.get("diagnostics") or {}
        lengths = diag.get("lengths", [1, 2, 5, 10])
        rng = substream(diag.get("seed", 0), DIAGNOSTICS)
        rows = frame_potential_sweep(ens, lengths, int(diag.get("n_pairs", 200)), rng)
        path = out / f"{name}_frame_potential.csv"
        write_frame_potential(rows, path, {"config_hash": h, "seed": diag.get("seed", 0)})
        files.append(path.name)
        return {"files": files, "config_hash": h, "seconds": time.time() - started}

    noise = cfg.noise()
    protocol = cfg.protocol()
    ds = run_protocol(ens, noise, protocol, metadata={"config_hash": h, "config": raw, "variant": name},
                      progress=lambda l: log.debug("%s: l=%d done", name, l))
    path = out / f"{name}.csv"
    write_dataset(ds, path)
    files += [path.name, path.with_suffix(".json").name]
    summary = {"config_hash": h}
    model = cfg.decay_model()
    eps = raw["analysis"].get("epsilon")
    try:
        fit = fit_decay(ds, model)
        rep = fit_report(fit, ds.metadata, eps, protocol.lengths[:1])
        other = replace(model, domain="step" if model.domain == "time" else "time")
        rep["other_domain"] = fit_decay(ds, other).to_dict()
        write_json(out / f"{name}_fit.json", rep)
        x = ds.column("l") if model.domain == "step" else ds.column("TJ")
        write_curve(fit, x, out / f"{name}_curve.csv", ds.metadata)
        files += [f"{name}_fit.json", f"{name}_curve.csv"]
        summary.update(r=fit.r, r_ci95=list(fit.ci95["r"]), domain=model.domain)
    except (FitConvergenceError, ValueError) as exc:
        summary["fit_error"] = str(exc)
        log.warning("%s: fit failed: %s", name, exc)
    inf = raw["analysis"].get("infidelity")
    if inf:
        res = {}
        for sampler in inf.get("samplers", ["product_states", "haar_pure_states"]):
            rng = substream(inf.get("seed", 0), INFIDELITY)
            est = average_gate_infidelity(ens, noise, sampler, int(inf.get("n_states", 100)), rng,
                                          n_draws=int(inf.get("n_draws", 100)), per=inf.get("per", "step"))
            res[sampler] = vars(est)
        res.update(config_hash=h, version=__version__)
        write_json(out / f"{name}_infidelity.json", res)
        files.append(f"{name}_infidelity.json")
    summary.update(files=files, seconds=time.time() - started, n_invalid=ds.metadata["n_invalid"])
    return summary


def write_frame_potential(rows, path: Path, meta: dict) -> None:
    with path.open("w", newline="") as fh:
        fh.write(provenance_line(meta) + "\n")
        w = csv.writer(fh)
        w.writerow(["L", "estimate", "stderr", "n_pairs"])
        for r in rows:
            w.writerow([r.L, repr(r.estimate), repr(r.stderr), r.n_pairs])


def cmd_run(args) -> int:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides += [f"ensemble.seed={args.seed}", f"protocol.seed={args.seed}"]
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    recipe = load_recipe(args.target)
    variants = resolve_recipe(recipe, overrides)
    kind = recipe.get("kind", "protocol")
    out = Path(args.out or Path("runs") / recipe.get("name", "run"))
    out.mkdir(parents=True, exist_ok=True)
    set_threads(variants[0][1].threads())
    results = {}
    for name, cfg in variants:
        log.info("running %s/%s", recipe.get("name"), name)
        results[name] = run_variant(name, cfg, out, kind)
    manifest = {
        "version": __version__,
        "recipe": {
            "name": recipe.get("name"),
            "kind": kind,
            "description": recipe.get("description", ""),
            "base": {},
            "variants": [{"name": n, "set": c.to_dict()} for n, c in variants],
        },
        "config_hashes": {n: c.hash for n, c in variants},
        "results": results,
    }
    manifest["manifest_hash"] = config_hash(manifest["recipe"])
    write_json(out / "manifest.json", manifest)
    print(json.dumps({"out": str(out), "results": results}, default=_default, indent=2))
    return EXIT_OK


def cmd_fit(args) -> int:
    ds = SurvivalDataset.from_csv(args.dataset)
    mode = "fixed" if args.fix_ab else "free"
    form = "noisy_inversion" if args.model == "noisy-inversion" else "standard"
    model = DecayModel(form, mode, mode, args.domain, args.weighting)
    fit = fit_decay(ds, model, d=args.d)
    rep = fit_report(fit, ds.metadata, args.epsilon, [1])
    text = json.dumps(rep, indent=2, sort_keys=True, default=_default)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    if not args.frame_potential:
        raise ConfigError([("--frame-potential", "no diagnostic selected")])
    try:
        lengths = [int(v) for v in str(args.lengths).split(",") if v.strip()]
    except ValueError:
        raise ConfigError([("--lengths", "comma-separated positive integers")]) from None
    if not lengths or min(lengths) < 1:
        raise ConfigError([("--lengths", "comma-separated positive integers")])
    recipe = load_recipe(args.config)
    name, cfg = resolve_recipe(recipe, args.set or [])[0]
    ens = cfg.ensemble()
    rng = substream(args.seed, DIAGNOSTICS)
    rows = frame_potential_sweep(ens, lengths, args.n_pairs, rng)
    meta = {"config_hash": cfg.hash, "seed": args.seed}
    if args.out:
        write_frame_potential(rows, Path(args.out), meta)
    w = csv.writer(sys.stdout)
    w.writerow(["L", "estimate", "stderr", "n_pairs"])
    for r in rows:
        w.writerow([r.L, repr(r.estimate), repr(r.stderr), r.n_pairs])
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = validate_config(args.config)
    print(json.dumps({"valid": True, "config_hash": cfg.hash}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="arb", description="Analogue randomized benchmarking simulations.")
    ap.add_argument("--version", action="version", version=f"arb {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a bundled recipe or a config/recipe/manifest JSON file")
    r.add_argument("target")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key path")
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int)
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("fit", help="fit a survival dataset CSV")
    f.add_argument("dataset")
    f.add_argument("--model", choices=("standard", "noisy-inversion"), default="standard")
    f.add_argument("--fix-ab", action="store_true", help="pin A = 1/d and B = (d-1)/d")
    f.add_argument("--domain", choices=("step", "time"), default="step")
    f.add_argument("--weighting", choices=("inverse_variance", "none"), default="inverse_variance",
                   help="weight points by 1/se^2 or fit unweighted")
    f.add_argument("--d", type=int, default=None, help="Hilbert-space dimension (default: from sidecar)")
    f.add_argument("--epsilon", type=float, default=None)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("diagnose", help="2-design diagnostics of an ensemble config")
    d.add_argument("config")
    d.add_argument("--frame-potential", action="store_true")
    d.add_argument("--lengths", default="1,2,5,10")
    d.add_argument("--n-pairs", type=int, default=200)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--set", action="append", metavar="KEY=VALUE")
    d.add_argument("--out")
    d.set_defaults(func=cmd_diagnose)

    v = sub.add_parser("validate", help="check a config file")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        err = {"error": "validation", "violations": [{"path": p, "message": m} for p, m in exc.violations]}
        print(json.dumps(err), file=sys.stderr)
        return EXIT_VALIDATION
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(json.dumps({"error": "validation", "violations": [{"path": str(exc.filename), "message": "cannot read file"}]}), file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        print(json.dumps({"error": "runtime", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
