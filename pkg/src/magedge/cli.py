"""Command-line interface: config-driven runs emitting CSV data and JSON reports.

Commands: flux, butterfly, sweep, fit, verify, harness.  Every run writes a
manifest echoing the resolved configuration, library versions and wall-clock
timings.  Exit codes: 0 all certificates pass, 1 usage or configuration
error, 2 a certificate failed.  Data outputs are byte-identical across runs
for a fixed config and seed in single-worker mode (the manifest carries
timings and is exempt).  Figures are rendered only on --figures and never
replace the delimited outputs.
"""

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np
import scipy

from . import __version__
from .lattice_operator import Box, HoppingSymbol, PeierlsBuilder, schur_alpha_norm
from .magnetic_phase import (
    ConstantField,
    FieldSpec,
    QuadratureRule,
    SlowlyVaryingField,
    Triangle,
    cocycle_defect,
    flux_triangle,
    transverse_gauge_phase,
)
from .regularization import (
    Mollifier,
    linear_term_integral,
    mollifier_difference_bound,
    schur_difference_certificate,
)
from .scaling_analysis import (
    EdgeSweep,
    SweepError,
    fit_power,
    fit_power_log,
    sweep_edges,
    verify_scaling_bound,
)
from .scenarios import (
    DEFAULT_EPS_GRID,
    get_scenario,
    harper_symbol,
    long_range_symbol,
    named_field,
)
from .spectral import full_spectrum

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CERTIFICATE = 2

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    return config


def _check_keys(config: dict, allowed: set, required: set) -> None:
    unknown = sorted(set(config) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    missing = sorted(required - set(config))
    if missing:
        raise ConfigError(f"missing required config keys: {missing}")


def _resolve_field(spec, dimension: int) -> FieldSpec:
    if not isinstance(spec, dict) or "variant" not in spec:
        raise ConfigError("field must be an object with a 'variant' key")
    variant = spec["variant"]
    if variant == "constant":
        if "matrix" not in spec:
            raise ConfigError("constant field needs a 'matrix'")
        try:
            return ConstantField(np.asarray(spec["matrix"], dtype=float))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if variant == "named":
        try:
            return named_field(spec.get("name", ""), dimension)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown field variant {variant!r}")


PROBLEM_KEYS = {"scenario", "symbol_file", "field"}
SWEEP_KEYS = PROBLEM_KEYS | {"eps_grid", "box_radius", "tol", "seed", "which", "rule_order"}


def _resolve_problem(config: dict):
    """Symbol, field and sweep defaults from a scenario or explicit inputs."""
    if "scenario" in config:
        if "symbol_file" in config or "field" in config:
            raise ConfigError("give either 'scenario' or 'symbol_file'+'field', not both")
        try:
            sc = get_scenario(config["scenario"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        defaults = {
            "eps_grid": list(sc.eps_grid),
            "box_radius": sc.box_radius,
            "regime": sc.regime,
            "alpha": sc.alpha,
        }
        return sc.symbol, sc.field, defaults
    if "symbol_file" not in config or "field" not in config:
        raise ConfigError("config needs 'scenario' or both 'symbol_file' and 'field'")
    try:
        symbol = HoppingSymbol.load(config["symbol_file"])
    except FileNotFoundError as exc:
        raise ConfigError(f"symbol file not found: {config['symbol_file']}") from exc
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad symbol file: {exc}") from exc
    field = _resolve_field(config["field"], symbol.dimension)
    defaults = {
        "eps_grid": list(DEFAULT_EPS_GRID),
        "box_radius": 10,
        "regime": "log",
        "alpha": 2.0,
    }
    return symbol, field, defaults


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out_dir, command, config, started, outputs) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "outputs": sorted(outputs),
        "versions": {
            "magedge": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "timings": {"wall_seconds": time.time() - started},
    }
    _write_json(os.path.join(out_dir, "manifest.json"), payload)


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _point(raw, dimension=None):
    pt = np.asarray(raw, dtype=float)
    if pt.ndim != 1 or (dimension is not None and pt.shape[0] != dimension):
        raise ConfigError(f"bad point {raw!r}")
    return pt


def cmd_flux(args) -> int:
    config = _load_config(args.config)
    _check_keys(
        config, {"field", "dimension", "eps", "rule_order", "triangles", "pairs"}, {"field"}
    )
    dimension = int(config.get("dimension", 2))
    field = _resolve_field(config["field"], dimension)
    if isinstance(field, SlowlyVaryingField):
        raise ConfigError("flux command supports constant and general fields")
    eps = float(config.get("eps", 1.0))
    rule = QuadratureRule(int(config.get("rule_order", 20)))
    triangles = config.get("triangles", [])
    pairs = config.get("pairs", [])
    started = time.time()
    rows = []
    for raw in triangles:
        x, y, z = (_point(p, field.dimension) for p in raw)
        value = eps * flux_triangle(field, Triangle(x, y, z), rule)
        rows.append(("flux", raw[0], raw[1], raw[2], value))
        rows.append(("cocycle", raw[0], raw[1], raw[2], cocycle_defect(field, eps, x, y, z, rule)))
    for raw in pairs:
        y, z = (_point(p, field.dimension) for p in raw)
        value = eps * transverse_gauge_phase(field, y, z, rule)
        rows.append(("phase", raw[0], raw[1], "", value))
    out_csv = os.path.join(args.out, "flux.csv")
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "p0", "p1", "p2", "value"])
        for kind, p0, p1, p2, value in rows:
            writer.writerow(
                [kind, json.dumps(p0), json.dumps(p1), json.dumps(p2) if p2 != "" else "", repr(float(value))]
            )
    _write_manifest(args.out, "flux", config, started, ["flux.csv"])
    _say(args, f"wrote {out_csv} ({len(rows)} rows)")
    return EXIT_OK


def cmd_butterfly(args) -> int:
    config = _load_config(args.config)
    _check_keys(
        config,
        SWEEP_KEYS | {"gap_threshold"},
        set(),
    )
    symbol, field, defaults = _resolve_problem(config)
    if "eps_grid" not in config:
        raise ConfigError("butterfly needs an explicit 'eps_grid'")
    eps_grid = [float(e) for e in config["eps_grid"]]
    radius = int(config.get("box_radius", defaults["box_radius"]))
    threshold = float(config.get("gap_threshold", 1e-3))
    rule = QuadratureRule(int(config.get("rule_order", 20)))
    box = Box(radius=radius, dimension=symbol.dimension)
    started = time.time()
    try:
        builder = PeierlsBuilder(symbol, field, box, rule)
        reports = [(eps, full_spectrum(builder.build(eps), threshold)) for eps in eps_grid]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out_csv = os.path.join(args.out, "spectrum.csv")
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eps", "eigenvalue"])
        for eps, report in reports:
            for ev in report.eigenvalues:
                writer.writerow([repr(float(eps)), repr(float(ev))])
    gaps_payload = {
        "schema_version": SCHEMA_VERSION,
        "gap_threshold": threshold,
        "per_eps": [
            {
                "eps": eps,
                "gaps": [{"left_edge": l, "right_edge": r} for l, r in report.gaps],
            }
            for eps, report in reports
        ],
    }
    _write_json(os.path.join(args.out, "gaps.json"), gaps_payload)
    outputs = ["spectrum.csv", "gaps.json"]
    if args.figures:
        from .plots import butterfly_figure

        eps_col = np.concatenate(
            [np.full(r.eigenvalues.size, eps) for eps, r in reports]
        )
        ev_col = np.concatenate([r.eigenvalues for _, r in reports])
        butterfly_figure(eps_col, ev_col, os.path.join(args.out, "butterfly.png"))
        outputs.append("butterfly.png")
    _write_manifest(args.out, "butterfly", config, started, outputs)
    _say(args, f"wrote {out_csv} ({sum(r.eigenvalues.size for _, r in reports)} rows)")
    return EXIT_OK


def _run_sweep(args, config) -> tuple[EdgeSweep, dict]:
    symbol, field, defaults = _resolve_problem(config)
    which = config.get("which", "sup")
    eps_grid = [float(e) for e in config.get("eps_grid", defaults["eps_grid"])]
    radius = int(config.get("box_radius", defaults["box_radius"]))
    tol = float(config.get("tol", 1e-8))
    seed = int(args.seed if args.seed is not None else config.get("seed", 0))
    rule = QuadratureRule(int(config.get("rule_order", 20)))
    box = Box(radius=radius, dimension=symbol.dimension)
    try:
        sweep = sweep_edges(
            symbol, field, which, eps_grid, box,
            tol=tol, seed=seed, rule=rule, workers=args.workers,
        )
    except (ValueError, SweepError) as exc:
        raise ConfigError(str(exc)) from exc
    norms = {a: schur_alpha_norm(symbol, a) for a in {0.0, 2.0, float(config.get("alpha", defaults["alpha"]))}}
    meta = {"defaults": defaults, "schur_norms": norms}
    return sweep, meta


def _obtain_sweep(args, config) -> tuple[EdgeSweep, dict, list]:
    if "sweep_json" in config:
        bad = PROBLEM_KEYS & set(config)
        if bad:
            raise ConfigError("'sweep_json' excludes scenario/symbol configuration")
        try:
            with open(config["sweep_json"]) as fh:
                sweep = EdgeSweep.from_dict(json.load(fh))
        except FileNotFoundError as exc:
            raise ConfigError(f"sweep file not found: {config['sweep_json']}") from exc
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad sweep file: {exc}") from exc
        return sweep, {"defaults": {"regime": None, "alpha": 2.0}, "schur_norms": None}, []
    sweep, meta = _run_sweep(args, config)
    sweep.to_csv(os.path.join(args.out, "sweep.csv"))
    _write_json(os.path.join(args.out, "sweep.json"), sweep.to_dict())
    return sweep, meta, ["sweep.csv", "sweep.json"]


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    _check_keys(config, SWEEP_KEYS | {"alpha"}, set())
    started = time.time()
    sweep, _, outputs = _obtain_sweep(args, config)
    if args.figures:
        from .plots import sweep_figure

        sweep_figure(sweep, [], os.path.join(args.out, "sweep.png"))
        outputs.append("sweep.png")
    _write_manifest(args.out, "sweep", config, started, outputs)
    _say(args, f"sweep of {sweep.eps.size} points, edge(0) = {sweep.edge_zero!r}")
    return EXIT_OK


def _fit_reports(sweep: EdgeSweep) -> tuple[dict, list]:
    fits = []
    payload = {"schema_version": SCHEMA_VERSION, "power": None, "power_log": None, "selected": None}
    try:
        power = fit_power(sweep)
        fits.append(power)
        payload["power"] = power.as_dict()
    except ValueError as exc:
        payload["power_error"] = str(exc)
    try:
        power_log = fit_power_log(sweep)
        fits.append(power_log)
        payload["power_log"] = power_log.as_dict()
    except ValueError as exc:
        payload["power_log_error"] = str(exc)
    if fits:
        best = min(fits, key=lambda f: f.residual)
        payload["selected"] = best.model
    return payload, fits


def cmd_fit(args) -> int:
    config = _load_config(args.config)
    _check_keys(config, SWEEP_KEYS | {"alpha", "sweep_json"}, set())
    started = time.time()
    sweep, _, outputs = _obtain_sweep(args, config)
    payload, fits = _fit_reports(sweep)
    if payload["power"] is None and payload["power_log"] is None:
        raise ConfigError("no fit possible: " + payload.get("power_error", "unknown"))
    _write_json(os.path.join(args.out, "fit.json"), payload)
    outputs.append("fit.json")
    if args.figures:
        from .plots import sweep_figure

        sweep_figure(sweep, fits, os.path.join(args.out, "fit.png"))
        outputs.append("fit.png")
    _write_manifest(args.out, "fit", config, started, outputs)
    _say(args, f"fit models: {payload['selected']} selected")
    return EXIT_OK


def cmd_verify(args) -> int:
    config = _load_config(args.config)
    _check_keys(config, SWEEP_KEYS | {"alpha", "regime", "sweep_json", "schur_norms"}, set())
    started = time.time()
    sweep, meta, outputs = _obtain_sweep(args, config)
    regime = config.get("regime", meta["defaults"].get("regime"))
    if regime is None:
        raise ConfigError("verify needs a 'regime' (holder, log or lipschitz)")
    alpha = float(config.get("alpha", meta["defaults"].get("alpha", 2.0)))
    norms = meta["schur_norms"]
    if norms is None:
        raw = config.get("schur_norms")
        if raw is None:
            raise ConfigError("verify from a sweep file needs explicit 'schur_norms'")
        norms = {float(k): float(v) for k, v in raw.items()}
    try:
        certificate = verify_scaling_bound(sweep, alpha, norms, regime)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    fit_payload, fits = _fit_reports(sweep)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "certificate": certificate.as_dict(),
        "fits": fit_payload,
        "schur_norms": {repr(k): v for k, v in sorted(norms.items())},
    }
    _write_json(os.path.join(args.out, "verify.json"), payload)
    outputs.append("verify.json")
    if args.figures:
        from .plots import sweep_figure

        sweep_figure(sweep, fits, os.path.join(args.out, "verify.png"))
        outputs.append("verify.png")
    _write_manifest(args.out, "verify", config, started, outputs)
    if certificate.diverged:
        _say(args, "certificate FAILED: ratio diverges toward eps = 0")
        return EXIT_CERTIFICATE
    _say(args, f"certificate ok: max ratio {certificate.ratio_max!r}")
    return EXIT_OK


def cmd_harness(args) -> int:
    config = _load_config(args.config)
    _check_keys(config, {"dimensions", "deltas", "alphas", "rule_order", "longrange_radius"}, set())
    dimensions = [int(d) for d in config.get("dimensions", [1, 2])]
    deltas = [float(d) for d in config.get("deltas", [0.5, 0.25, 0.125])]
    alphas = [float(a) for a in config.get("alphas", [1.0, 2.0])]
    rule = QuadratureRule(int(config.get("rule_order", 8)))
    lr_radius = int(config.get("longrange_radius", 4))
    started = time.time()
    report = {"schema_version": SCHEMA_VERSION, "passed": True}

    report["normalization"] = []
    for d in dimensions:
        for delta in deltas:
            defect = Mollifier(d, delta).normalization_defect()
            ok = defect <= 1e-10
            report["normalization"].append(
                {"dimension": d, "delta": delta, "defect": defect, "ok": ok}
            )
            report["passed"] &= ok

    report["difference_bounds"] = []
    for d in dimensions:
        for alpha in alphas:
            if not 1.0 <= alpha <= 2.0:
                continue
            constants = []
            for delta in deltas:
                moll = Mollifier(d, delta)
                radii = np.linspace(0.05, 1.9 / delta, 20)
                xs = radii[:, None] * (np.ones(d) / math.sqrt(d))
                constants.append(mollifier_difference_bound(moll, alpha, xs))
            stable = max(constants) <= 2.0 * min(constants)
            report["difference_bounds"].append(
                {
                    "dimension": d,
                    "alpha": alpha,
                    "deltas": deltas,
                    "constants": constants,
                    "stable_within_factor_two": stable,
                }
            )
            report["passed"] &= stable

    report["schur_certificates"] = []
    for symbol, alpha in ((harper_symbol(), 2.0), (long_range_symbol(radius=lr_radius), 1.5)):
        rows = []
        scaled = []
        for delta in deltas:
            lhs, rhs = schur_difference_certificate(symbol, Mollifier(2, delta), alpha)
            rows.append({"delta": delta, "lhs": lhs, "rhs": rhs, "ok": lhs <= rhs})
            scaled.append(lhs / delta ** min(alpha, 2.0))
        bounded = max(scaled) <= 2.0 * min(scaled) if min(scaled) > 0 else True
        block = {
            "symbol": symbol.name,
            "alpha": alpha,
            "rows": rows,
            "scaled_lhs": scaled,
            "scaling_bounded": bounded,
        }
        report["schur_certificates"].append(block)
        report["passed"] &= bounded and all(r["ok"] for r in rows)

    moll = Mollifier(2, deltas[0])
    x = np.zeros(2)
    xp = np.array([1.0, 0.0])
    field = ConstantField(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    value = linear_term_integral(moll, field, x, xp, rule)
    scale = moll.tilde_zero * float(np.linalg.norm(x - xp))
    ok = abs(value) <= 1e-8 * scale
    report["linear_term"] = {
        "delta": deltas[0],
        "value": value,
        "natural_scale": scale,
        "ok": ok,
    }
    report["passed"] &= ok

    _write_json(os.path.join(args.out, "harness.json"), report)
    outputs = ["harness.json"]
    if args.figures:
        from .plots import harness_figure

        harness_figure(report, os.path.join(args.out, "harness.png"))
        outputs.append("harness.png")
    _write_manifest(args.out, "harness", config, started, outputs)
    if not report["passed"]:
        _say(args, "harness FAILED: at least one certificate violated")
        return EXIT_CERTIFICATE
    _say(args, "harness ok")
    return EXIT_OK


COMMANDS = {
    "flux": cmd_flux,
    "butterfly": cmd_butterfly,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "verify": cmd_verify,
    "harness": cmd_harness,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magedge",
        description="magnetic-phase lattice operators: fluxes, spectra, edge sweeps and certificates",
    )
    parser.add_argument("--version", action="version", version=f"magedge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("flux", "evaluate fluxes, phases and cocycle defects on configured points"),
        ("butterfly", "full box spectra over an eps grid, plus a gap table"),
        ("sweep", "edge values over an eps grid on a fixed box"),
        ("fit", "fit scaling models to an edge sweep"),
        ("verify", "scaling-bound certificate for an edge sweep"),
        ("harness", "mollifier regularization certificates"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument(
            "--workers", type=int, default=os.cpu_count() or 1,
            help="worker pool size for grid points",
        )
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        p.add_argument("--figures", action="store_true", help="also render figures")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
