"""Config-driven experiment runner: ``mobius-lab run | convert | verify | gen``.

Configs are TOML, reports JSON (atomically written, byte-stable for a fixed
seed apart from the timestamp field), tabular outputs CSV.  Exit codes:
0 success, 2 validation failure, 3 numeric-tolerance failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .space import (
    PointSpace,
    Quadruple,
    chain_smooth,
    cross_ratio,
    snowflake,
    verify_extended_metric,
)
from .spaceio import load_point_map, load_space, save_space
from .generate import generate_space
from .transforms import PointMap, cayley_transform, inverse_cayley_transform, moebius_defect
from .gauges import (
    SbeConstants,
    am_envelope,
    check_asymptotically_chained,
    check_gauge,
    parse_gauge,
    sbe_to_am,
)
from .cones import (
    annulus_witness,
    cone_identity_check,
    eventual_separation,
    induced_qs_check,
    parse_trajectory,
    scale_realization,
)
from .heisenberg import heis_distance_matrix, phi_lambda_gram, sample_heis_points
from .kernels import check_cnd, cnd_limit_check, gns_embed, integral_identity
from .cotype import (
    CotypeInstance,
    EnfloInstance,
    cotype_search,
    cotype_sides,
    enflo_sides,
    load_instance,
    min_m_scan,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_TOLERANCE = 3


class ConfigError(Exception):
    pass


def _jsonable(obj):
    """Convert report dataclasses / arrays into JSON-ready structures."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, Quadruple):
        return list(obj.as_tuple())
    return obj


def _write_json_atomic(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, sort_keys=True, indent=2)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(rows: list[dict], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _load_space_arg(config: dict, key: str = "space") -> PointSpace:
    if key not in config:
        raise ConfigError(f"config is missing the {key!r} entry")
    entry = config[key]
    if isinstance(entry, str):
        if not Path(entry).exists():
            raise ConfigError(f"space file {entry!r} does not exist")
        return load_space(entry)
    if isinstance(entry, dict):
        kind = entry.get("kind")
        if kind is None:
            raise ConfigError(f"inline {key!r} needs a 'kind'")
        params = {k: v for k, v in entry.items() if k != "kind"}
        return generate_space(kind, params)
    raise ConfigError(f"{key!r} must be a file path or an inline generator table")


def _load_map_arg(config: dict, source: PointSpace, target: PointSpace) -> PointMap:
    entry = config.get("map", "identity")
    if entry == "identity":
        return PointMap.identity(source, target)
    if not Path(entry).exists():
        raise ConfigError(f"map file {entry!r} does not exist")
    return PointMap(source, target, load_point_map(entry))


def _seed_of(config: dict, override) -> int:
    if override is not None:
        return int(override)
    if "seed" not in config:
        raise ConfigError("config must declare an explicit seed (no wall-clock defaults)")
    return int(config["seed"])


# ----------------------------------------------------------------------
# experiment runners: config -> (results dict, numeric_ok, optional csv rows)
# ----------------------------------------------------------------------
def _run_verify_space(config, seed):
    space = _load_space_arg(config)
    report = verify_extended_metric(space)
    return _jsonable(report), report.ok, None


def _run_moebius_defect(config, seed):
    source = _load_space_arg(config, "space")
    target = _load_space_arg(config, "target") if "target" in config else source
    pmap = _load_map_arg(config, source, target)
    rep = moebius_defect(pmap, int(config.get("budget", 1000)), seed=seed)
    tol = float(config.get("tolerance", math.inf))
    ok = rep.defect is not None and rep.defect <= tol
    return _jsonable(rep), ok, None


def _run_am_envelope(config, seed):
    source = _load_space_arg(config, "space")
    target = _load_space_arg(config, "target") if "target" in config else source
    pmap = _load_map_arg(config, source, target)
    gauge = parse_gauge(config["gauge"])
    env = am_envelope(pmap, gauge, int(config.get("budget", 2000)), seed=seed)
    results = {
        "n_samples": env.n_samples,
        "vanishes_at_zero": env.vanishes_at_zero,
        "violations": _jsonable(env.violations),
    }
    if env.n_samples <= 10**5:
        results["samples"] = _jsonable(env.samples)
    return results, env.vanishes_at_zero, None


def _run_check_gauge(config, seed):
    cert = check_gauge(parse_gauge(config["gauge"]), float(config.get("r_max", 1e6)))
    return _jsonable(cert), cert.admissible, None


def _run_chained(config, seed):
    space = _load_space_arg(config)
    rep = check_asymptotically_chained(space, parse_gauge(config["gauge"]))
    out = _jsonable(rep)
    out["witness_chains"] = {
        f"{a}->{b}": chain for (a, b), chain in rep.witness_chains.items()
    }
    return out, rep.chained, None


def _run_sbe_to_am(config, seed):
    k = SbeConstants(
        c_upper=float(config["c_upper"]),
        C_upper=float(config["C_upper"]),
        c_lower=float(config["c_lower"]),
        C_lower=float(config["C_lower"]),
        u=parse_gauge(config["gauge"]),
    )
    res = sbe_to_am(k)
    out = _jsonable(res)
    out["v"] = res.v.describe()
    return out, True, None


def _run_cone_identity(config, seed):
    space = _load_space_arg(config)
    rows = []
    worst = 0.0
    for lam in config.get("lambdas", [10.0, 1e3, 1e6]):
        rep = cone_identity_check(space, config["p"], float(lam))
        worst = max(worst, rep.max_rel_error)
        rows.append({"lambda": lam, "max_rel_error": rep.max_rel_error, "n_checked": rep.n_checked})
    tol = float(config.get("tolerance", 1e-12))
    return {"per_lambda": rows, "worst": worst}, worst <= tol, None


def _run_eventual_separation(config, seed):
    indices = np.arange(int(config.get("n_min", 2)), int(config.get("n_max", 100000)) + 1)
    scale_spec = config.get("scales", "lambda:linear()")
    t1 = parse_trajectory(config["trajectory_x"], indices, scale_spec)
    t2 = parse_trajectory(config["trajectory_y"], indices, scale_spec)
    rep = eventual_separation(t1, t2, parse_gauge(config["gauge"]))
    return _jsonable(rep), True, None


def _run_annulus_witness(config, seed):
    space = _load_space_arg(config)
    rep = annulus_witness(
        space,
        str(config["x"]),
        str(config["y"]),
        parse_gauge(config["u"]),
        parse_gauge(config["v"]),
        q=config.get("q"),
    )
    ok = rep.status == "already_separated" or bool(rep.sep_xw and rep.sep_yw)
    return _jsonable(rep), ok, None


def _run_scale_realization(config, seed):
    space = _load_space_arg(config)
    gauge = parse_gauge(config["v"])
    cert = check_asymptotically_chained(space, gauge) if config.get("certify", True) else None
    rep = scale_realization(space, float(config["lambda"]), gauge,
                            eps=float(config.get("eps", 0.0)), chained_cert=cert)
    return _jsonable(rep), (rep.bound_holds or not rep.bound_asserted), None


def _run_induced_qs(config, seed):
    source = _load_space_arg(config, "space")
    target = _load_space_arg(config, "target") if "target" in config else source
    pmap = _load_map_arg(config, source, target)
    rep = induced_qs_check(
        pmap,
        parse_gauge(config["gauge"]),
        [float(v) for v in config["scales"]],
        int(config.get("budget", 2000)),
        seed=seed,
    )
    results = {
        "scales": [p.scale for p in rep.per_scale],
        "n_triples": [p.n_triples for p in rep.per_scale],
        "drifts": _jsonable(rep.drifts),
        "max_drift": _jsonable(rep.max_drift),
    }
    return results, True, None


def _run_phi_gram(config, seed):
    dims = config.get("dims", [1])
    counts = config.get("counts", [16])
    lambdas = config.get("lambdas", [1.0, -1.0])
    rows = []
    all_ok = True
    for dim in dims:
        for count in counts:
            pts = sample_heis_points(int(count), int(dim), seed)
            for lam in lambdas:
                cell = {"dim": dim, "count": count, "lambda": lam}
                for ordering in ("left_inverse", "right_inverse"):
                    gram = phi_lambda_gram(pts, float(lam), ordering=ordering)
                    rep = gram.psd_report()
                    cell[f"min_eig_{ordering}"] = rep.min_eigenvalue
                    cell[f"is_psd_{ordering}"] = rep.is_psd
                cell_ok = cell["is_psd_left_inverse"] or cell["is_psd_right_inverse"]
                all_ok = all_ok and cell_ok
                rows.append(cell)
    return {"cells": rows}, all_ok, rows


def _run_cnd_heisenberg(config, seed):
    pts = sample_heis_points(
        int(config.get("count", 40)), int(config.get("dim", 1)), seed
    )
    K = heis_distance_matrix(pts)
    rep = check_cnd(K)
    results = {
        "is_cnd": rep.is_cnd,
        "max_centered_eigenvalue": rep.max_centered_eigenvalue,
        "spectral_radius": rep.spectral_radius,
        "centered_spectrum": _jsonable(rep.centered_spectrum),
    }
    if config.get("embed", True) and rep.is_cnd:
        emb = gns_embed(K)
        results["gns_reconstruction_error"] = emb.reconstruction_error
    return results, rep.is_cnd, None


def _run_integral_grid(config, seed):
    rows = []
    worst = 0.0
    for r in config.get("r_values", [0.5, 1.0, 2.0]):
        for t in config.get("t_values", [0.0, 1.0, 5.0]):
            rep = integral_identity(float(r), float(t), int(config.get("budget", 2000)))
            worst = max(worst, rep.rel_error)
            rows.append(
                {"r": r, "t": t, "lhs": rep.lhs, "rhs": rep.rhs, "rel_error": rep.rel_error}
            )
    tol = float(config.get("tolerance", 1e-6))
    return {"grid": rows, "worst_rel_error": worst}, worst <= tol, rows


def _run_cnd_limit(config, seed):
    rep = cnd_limit_check(
        float(config.get("a_norm", 1.0)),
        float(config.get("t", 0.0)),
        [float(e) for e in config.get("eps", [0.1, 0.05, 0.01])],
    )
    monotone = all(a < b for a, b in zip(rep.values, rep.values[1:]))
    results = _jsonable(rep)
    results["monotone_toward_target"] = monotone and rep.values[-1] <= rep.target
    return results, results["monotone_toward_target"], None


def _run_cotype_sides(config, seed):
    target = _load_space_arg(config, "target")
    if "instance" in config:
        inst = load_instance(config["instance"], target)
    else:
        inst = CotypeInstance(
            int(config["n"]), int(config["m"]), float(config["q"]), target,
            np.asarray(config["f"], dtype=np.int64),
        )
    rep = cotype_sides(inst, mode=config.get("mode", "auto"),
                       mc_samples=int(config.get("mc_samples", 20000)), seed=seed)
    return _jsonable(rep), True, None


def _run_cotype_search(config, seed):
    target = _load_space_arg(config, "target")
    q = float(config["q"])
    rep = cotype_search(
        int(config["n"]), int(config["m"]), q, target,
        budget=int(config.get("budget", 200000)),
        restarts=int(config.get("restarts", 20)),
        seed=seed,
    )
    out = _jsonable(rep)
    out["lower_bound_constant"] = rep.lower_bound_constant(q)
    return out, True, None


def _run_enflo_sides(config, seed):
    target = _load_space_arg(config, "target")
    inst = EnfloInstance(
        int(config["n"]), float(config["p"]), target,
        np.asarray(config["f"], dtype=np.int64),
    )
    return _jsonable(enflo_sides(inst)), True, None


def _run_min_m_scan(config, seed):
    target = _load_space_arg(config, "target")
    q = float(config["q"])
    rows = min_m_scan(
        [int(v) for v in config["n_range"]],
        q,
        target,
        float(config["C_target"]),
        [int(v) for v in config["m_candidates"]],
        search_budget=int(config.get("budget", 200000)),
        restarts=int(config.get("restarts", 10)),
        seed=seed,
    )
    csv_rows = [
        {"n": r.n, "minimal_m": r.minimal_m if r.minimal_m is not None else "",
         "floor": r.floor, "status": r.status}
        for r in rows
    ]
    return {"rows": _jsonable(rows)}, True, csv_rows


EXPERIMENTS = {
    "verify_space": _run_verify_space,
    "moebius_defect": _run_moebius_defect,
    "am_envelope": _run_am_envelope,
    "check_gauge": _run_check_gauge,
    "chained": _run_chained,
    "sbe_to_am": _run_sbe_to_am,
    "cone_identity": _run_cone_identity,
    "eventual_separation": _run_eventual_separation,
    "annulus_witness": _run_annulus_witness,
    "scale_realization": _run_scale_realization,
    "induced_qs": _run_induced_qs,
    "phi_gram": _run_phi_gram,
    "cnd_heisenberg": _run_cnd_heisenberg,
    "integral_grid": _run_integral_grid,
    "cnd_limit": _run_cnd_limit,
    "cotype_sides": _run_cotype_sides,
    "cotype_search": _run_cotype_search,
    "enflo_sides": _run_enflo_sides,
    "min_m_scan": _run_min_m_scan,
}

# deterministic experiments may omit the seed
SEEDLESS = {
    "verify_space", "check_gauge", "chained", "sbe_to_am", "cone_identity",
    "eventual_separation", "annulus_witness", "scale_realization",
    "integral_grid", "cnd_limit", "enflo_sides",
}


def _versions() -> dict:
    import scipy

    return {
        "mobius_lab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": ".".join(str(v) for v in sys.version_info[:3]),
    }


def cmd_run(args) -> int:
    config_path = Path(args.config)
    if not config_path.exists():
        print(f"error: config {config_path} does not exist", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        with config_path.open("rb") as fh:
            config = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        print(f"error: unreadable config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    kind = config.get("kind")
    if kind not in EXPERIMENTS:
        print(f"error: unknown experiment kind {kind!r}", file=sys.stderr)
        return EXIT_VALIDATION
    threads = os.environ.get("MOBIUS_LAB_THREADS")
    try:
        seed = None
        if kind not in SEEDLESS or "seed" in config or args.seed is not None:
            seed = _seed_of(config, args.seed)
        results, numeric_ok, csv_rows = EXPERIMENTS[kind](config, seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (KeyError, FileNotFoundError, ValueError) as exc:
        print(f"error: invalid config for {kind!r}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    report = {
        "schema": "mobius-lab-report/1",
        "kind": kind,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "versions": _versions(),
        "seed": seed,
        "inputs": _jsonable({**config, "threads_cap": threads}),
        "results": results,
        "status": "ok" if numeric_ok else "tolerance_failure",
    }
    out = Path(config.get("output", config_path.with_suffix(".report.json")))
    _write_json_atomic(report, out)
    if csv_rows and "output_csv" in config:
        _write_csv(csv_rows, Path(config["output_csv"]))
    print(f"{kind}: {'ok' if numeric_ok else 'TOLERANCE FAILURE'} -> {out}")
    return EXIT_OK if numeric_ok else EXIT_TOLERANCE


def _apply_chain_step(space: PointSpace, step: str) -> PointSpace:
    name, _, arg = step.partition("@")
    name = name.strip()
    if name == "cayley":
        return cayley_transform(space, arg)
    if name == "inverse_cayley":
        return inverse_cayley_transform(space, arg)
    if name == "snowflake":
        return snowflake(space, float(arg))
    if name == "chain_smooth":
        return chain_smooth(space)
    raise ValueError(f"unknown chain step {name!r}")


def cmd_convert(args) -> int:
    steps = [s.strip() for s in args.chain.split(",") if s.strip()]
    if not steps:
        print("error: empty transform chain", file=sys.stderr)
        return EXIT_VALIDATION
    if not Path(args.infile).exists():
        print(f"error: input {args.infile} does not exist", file=sys.stderr)
        return EXIT_VALIDATION
    space = load_space(args.infile)
    applied = []
    for idx, step in enumerate(steps):
        try:
            space = _apply_chain_step(space, step)
        except (ValueError, KeyError) as exc:
            print(f"error: chain step {idx} ({step!r}) failed: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        applied.append(step)
    save_space(space, args.out)
    sidecar = {
        "input": str(args.infile),
        "output": str(args.out),
        "steps": applied,
        "versions": _versions(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    _write_json_atomic(sidecar, Path(str(args.out) + ".provenance.json"))
    print(f"convert: {len(applied)} steps -> {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if not Path(args.space).exists():
        print(f"error: {args.space} does not exist", file=sys.stderr)
        return EXIT_VALIDATION
    report = verify_extended_metric(load_space(args.space))
    if report.ok:
        print(f"{args.space}: ok")
        return EXIT_OK
    print(f"{args.space}: {len(report.violations)} violation(s)")
    for v in report.violations[:20]:
        print(f"  {v.kind} {v.points}: {v.detail}")
    return EXIT_TOLERANCE


def _parse_kv(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ValueError(f"bad parameter {pair!r}; expected key=value")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def cmd_gen(args) -> int:
    try:
        params = _parse_kv(args.params)
        space = generate_space(args.kind, params)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    save_space(space, args.out)
    print(f"gen {args.kind}: {space.n} points -> {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mobius-lab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a TOML experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.set_defaults(func=cmd_run)

    p_conv = sub.add_parser("convert", help="apply a chain of metric transforms")
    p_conv.add_argument("--in", dest="infile", required=True)
    p_conv.add_argument("--chain", required=True,
                        help="e.g. 'cayley@p0,inverse_cayley@p1,snowflake@0.5,chain_smooth'")
    p_conv.add_argument("--out", required=True)
    p_conv.set_defaults(func=cmd_convert)

    p_ver = sub.add_parser("verify", help="check the extended-metric axioms of a space file")
    p_ver.add_argument("space")
    p_ver.set_defaults(func=cmd_verify)

    p_gen = sub.add_parser("gen", help="generate a built-in space")
    p_gen.add_argument("kind")
    p_gen.add_argument("params", nargs="*", help="key=value generator parameters")
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
