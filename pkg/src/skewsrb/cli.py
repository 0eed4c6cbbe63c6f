"""Command-line front end: ``skewsrb <subcommand> [flags]``.

Flags can also come from a flat ``key = value`` file given with ``--config``
(keys are flag names with ``-`` replaced by ``_``); explicit flags win.  Every
run writes its outputs plus ``manifest.json`` into the output directory
(``--out``, else ``$SKEWSRB_OUT``, else ``./skewsrb-out``).

Exit codes: 0 success, 2 invalid input, 3 numerical failure.  Errors are
reported as one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from .errors import InvalidParams, NumericalFailure, ValidationError

SUBCOMMANDS = ("density", "spectrum", "response", "transversality", "aniso", "ly-decay", "holder")
ENV_OUT = "SKEWSRB_OUT"
DEFAULT_OUT = "skewsrb-out"
# keys that do not influence results and stay out of the manifest
NON_RESULT_KEYS = {"out", "threads", "config"}


class UsageError(ValidationError):
    def __init__(self, message, flag=None):
        super().__init__(message)
        self.flag = flag


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        flag = None
        for tok in message.replace(",", " ").split():
            if tok.startswith("-"):
                flag = tok.rstrip(":")
                break
        raise UsageError(message, flag)

    def exit(self, status=0, message=None):
        if status:
            raise UsageError(message or "usage error")
        raise SystemExit(0)


def _cone(text):
    try:
        c, h = (float(v) for v in str(text).split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected center:half_width in degrees, got {text!r}")
    return c, h


def _int_list(text):
    return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


# ---------------------------------------------------------------- argument table

MAP_FLAGS = [
    ("--ell", int, 2, "base expansion factor"),
    ("--phi-cos", str, "", "cosine coefficients of phi as freq:coef pairs"),
    ("--phi-sin", str, "", "sine coefficients of phi as freq:coef pairs"),
    ("--perturbation", str, "none", "none|vertical_const|vertical_sine|vertical_profile|table"),
    ("--profile-cos", str, "", "h(x) cosine pairs for vertical_profile"),
    ("--profile-sin", str, "", "h(x) sine pairs for vertical_profile"),
    ("--field-vx", str, "", "x-component terms kx,ky:cos:sin;... for table"),
    ("--field-vy", str, "", "y-component terms kx,ky:cos:sin;... for table"),
    ("--t", float, 0.0, "perturbation amplitude of the base map"),
]
GRID_FLAGS = [
    ("--nx", int, 256, "grid points along x"),
    ("--ny", int, 64, "grid points along y"),
    ("--dealias", float, 2.0 / 3.0, "retained fraction of each frequency axis"),
]

SUB_FLAGS = {
    "density": MAP_FLAGS + GRID_FLAGS + [
        ("--tol", float, 1e-12, "power iteration tolerance"),
        ("--max-iter", int, 2000, "power iteration cap"),
    ],
    "spectrum": MAP_FLAGS + [
        ("--nx", int, 128, "grid points along x"),
        ("--ny", int, 32, "grid points along y"),
        ("--dealias", float, 2.0 / 3.0, "retained fraction of each frequency axis"),
        ("--k", int, 6, "number of eigenvalues"),
        ("--mmax", int, 4, "largest fiber frequency for block radii"),
    ],
    "transversality": MAP_FLAGS + [
        ("--n", int, None, "single depth (default: all depths up to --nmax)"),
        ("--nmax", int, 8, "largest depth"),
        ("--theta", float, 2.0, "cone parameter"),
        ("--gamma0", float, 0.75, "contraction factor for the invariance check"),
        ("--grid", int, 64, "grid points per axis"),
    ],
    "aniso": MAP_FLAGS + GRID_FLAGS + [
        ("--p", float, 4.0, "regularity on the + sector"),
        ("--q", float, 1.0, "regularity on the - sector"),
        ("--cone-plus", _cone, None, "center:half_width of C+ in degrees"),
        ("--cone-minus", _cone, None, "center:half_width of C- in degrees"),
        ("--gap-degrees", float, 10.0, "gap between default cones"),
        ("--tol", float, 1e-12, "density tolerance"),
    ],
    "ly-decay": MAP_FLAGS + [
        ("--nx", int, 128, "grid points along x"),
        ("--ny", int, 32, "grid points along y"),
        ("--dealias", float, 2.0 / 3.0, "retained fraction of each frequency axis"),
        ("--p", int, 4, "strong + regularity"),
        ("--q", int, 1, "strong - regularity"),
        ("--cone-plus", _cone, (0.0, 30.0), "strong C+ (degrees)"),
        ("--cone-minus", _cone, (90.0, 30.0), "strong C- (degrees)"),
        ("--weak-cone-plus", _cone, (0.0, 20.0), "weak C+ (degrees)"),
        ("--weak-cone-minus", _cone, (90.0, 65.0), "weak C- (degrees)"),
        ("--nmax", int, 30, "iterations"),
        ("--trials", int, 4, "random initial fields"),
        ("--seed", int, 0, "random seed"),
    ],
    "response": MAP_FLAGS + GRID_FLAGS + [
        ("--family", str, "vertical_sine", "perturbation direction V (same names as --perturbation)"),
        ("--family-vx", str, "", "x terms of V for --family table"),
        ("--family-vy", str, "", "y terms of V for --family table"),
        ("--observable", str, "0,1:1:0", "observable terms kx,ky:cos:sin;..."),
        ("--method", str, "all", "neumann|contour|fd|all"),
        ("--t-fd", float, 1e-4, "finite-difference step"),
        ("--kappa", float, None, "contour radius (default half the spectral gap)"),
        ("--nodes", int, 64, "contour nodes"),
    ],
    "holder": [
        ("--alpha", float, 2.0, "hyperbolicity of the fiber matrix"),
        ("--kappa", float, 0.1, "m(C) > 1 - kappa"),
        ("--c0", float, 0.05, "m(B) > c0"),
        ("--base-degree", int, 2, "degree of the base circle map"),
        ("--L-min", int, 2, "smallest L"),
        ("--L-max", int, 10, "largest L"),
        ("--z-L", _int_list, [3, 5, 7], "values of L for the Z experiment"),
        ("--samples", int, 20000, "samples per L"),
        ("--seed", int, 0, "random seed"),
        ("--blocks", int, 50, "drift horizon in blocks of N0 = 2L+1+K steps"),
        ("--control", int, 0, "also fit the identity-fiber control (0/1)"),
        ("--threads", int, 1, "worker threads"),
    ],
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="skewsrb", description="SRB densities, linear response and Hoelder-breakdown experiments")
    p.add_argument("--version", action="version", version=__version__)
    subs = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        sp = subs.add_parser(name, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", type=str, help="flat key = value file")
        sp.add_argument("--out", type=str, help="output directory")
        if name != "holder":
            sp.add_argument("--threads", type=int, help="worker threads (unused by this subcommand)")
        for flag, typ, _, help_ in SUB_FLAGS[name]:
            sp.add_argument(flag, type=typ, help=help_)
    return p


def _key(flag: str) -> str:
    return flag.lstrip("-").replace("-", "_")


def read_config_file(path: str) -> dict:
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}", "--config")
    for i, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{i}: expected key = value", "--config")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def resolve_config(sub: str, explicit: dict) -> dict:
    """Defaults, then the config file, then explicit flags."""
    table = {_key(f): (typ, default) for f, typ, default, _ in SUB_FLAGS[sub]}
    cfg = {k: d for k, (_, d) in table.items()}
    if "config" in explicit:
        for k, v in read_config_file(explicit["config"]).items():
            if k not in table:
                raise UsageError(f"unknown config key {k!r} for {sub}", k)
            try:
                cfg[k] = table[k][0](v)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"bad value for {k}: {exc}", k)
    for k, v in explicit.items():
        if k in table:
            cfg[k] = v
    return cfg


# ---------------------------------------------------------------- output helpers


def _schema(name: str) -> dict:
    return json.loads(resources.files("skewsrb").joinpath("schemas", f"{name}.schema.json").read_text())


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj, schema: str | None = None) -> str:
    obj = _clean(obj)
    if schema:
        jsonschema.validate(obj, _schema(schema))
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def dump_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


class Output:
    def __init__(self, directory: str):
        self.dir = directory
        self.files = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def write(self, sub: str, cfg: dict):
        os.makedirs(self.dir, exist_ok=True)
        for name, text in self.files.items():
            with open(os.path.join(self.dir, name), "w", newline="") as fh:
                fh.write(text)
        manifest = {
            "tool": "skewsrb",
            "version": __version__,
            "subcommand": sub,
            "config": {k: v for k, v in sorted(cfg.items()) if k not in NON_RESULT_KEYS},
            "outputs": {n: hashlib.sha256(t.encode()).hexdigest() for n, t in sorted(self.files.items())},
        }
        with open(os.path.join(self.dir, "manifest.json"), "w") as fh:
            fh.write(dump_json(manifest, "manifest"))


# ---------------------------------------------------------------- builders


def build_map(cfg):
    from .skew_map import SkewEndomorphism, TrigPoly, make_perturbation, parse_field_terms, parse_pairs

    phi = TrigPoly.from_pairs(parse_pairs(cfg["phi_cos"]), parse_pairs(cfg["phi_sin"]))
    profile = TrigPoly.from_pairs(parse_pairs(cfg["profile_cos"]), parse_pairs(cfg["profile_sin"]))
    pert = make_perturbation(cfg["perturbation"], profile if not profile.is_zero else None,
                             parse_field_terms(cfg["field_vx"]), parse_field_terms(cfg["field_vy"]))
    return SkewEndomorphism(cfg["ell"], phi, pert)


def build_grid(cfg):
    from .transfer import TransferConfig

    return TransferConfig(cfg["nx"], cfg["ny"], cfg["dealias"])


def build_observable(text: str, nx: int, ny: int):
    from .skew_map import TorusField, parse_field_terms
    from .transfer import GridField

    terms = parse_field_terms(text)
    if not terms:
        raise InvalidParams("observable needs at least one term")
    V = TorusField((), terms)
    return GridField.from_function(lambda X, Y: V(X, Y)[1], nx, ny)


def _polarisation(plus, minus, gap):
    from .aniso import Polarisation

    if plus is None and minus is None:
        return Polarisation.default(gap)
    if plus is None or minus is None:
        raise UsageError("give both --cone-plus and --cone-minus", "--cone-plus")
    return Polarisation.from_degrees(plus[0], plus[1], minus[0], minus[1])


# ---------------------------------------------------------------- subcommands


def cmd_density(cfg, out: Output):
    from .transfer import grid_points, srb_density

    grid = build_grid(cfg)
    rho, info = srb_density(build_map(cfg), cfg["t"], grid, tol=cfg["tol"], max_iter=cfg["max_iter"],
                            return_info=True)
    X, Y = grid_points(grid.nx, grid.ny)
    out.add("density.csv", dump_csv(["x", "y", "rho"], zip(X.ravel(), Y.ravel(), rho.values.ravel())))
    summary = {"mass": info.mass, "min": info.min, "max": info.max, "iterations": info.iterations,
               "residual": info.residual}
    out.add("density.json", dump_json(summary, "density"))


def cmd_spectrum(cfg, out: Output):
    from .transfer import spectrum_estimate

    rep = spectrum_estimate(build_map(cfg), cfg["t"], build_grid(cfg), k=cfg["k"], m_max=cfg["mmax"])
    rows = [(i, complex(v).real, complex(v).imag, abs(v)) for i, v in enumerate(rep.eigenvalues)]
    out.add("spectrum.csv", dump_csv(["index", "real", "imag", "modulus"], rows))
    summary = {"gap": rep.gap, "second_modulus": rep.second_modulus,
               "block_radii": {str(m): r for m, r in sorted(rep.block_radii.items())}}
    out.add("spectrum.json", dump_json(summary, "spectrum"))


def cmd_transversality(cfg, out: Output):
    from .cones import check_cone_invariance, m_finite

    f = build_map(cfg)
    depths = [cfg["n"]] if cfg["n"] is not None else list(range(1, cfg["nmax"] + 1))
    rows = []
    for n in depths:
        r = m_finite(f, cfg["t"], n, cfg["theta"], cfg["grid"])
        rows.append((n, r.m_n, r.m_root, r.worst_z.x, r.worst_z.y))
    out.add("transversality.csv", dump_csv(["n", "m_n", "m_root", "worst_z_x", "worst_z_y"], rows))
    inv = check_cone_invariance(f, cfg["theta"], cfg["gamma0"], t=cfg["t"])
    summary = {"m_upper_bound": min(r[2] for r in rows), "invariance_ok": inv.ok,
               "invariance_margin": inv.margin, "grid_max_is_certified": False}
    out.add("transversality.json", dump_json(summary, "transversality"))


def cmd_aniso(cfg, out: Output):
    from .aniso import aniso_norm, lp_decompose
    from .transfer import srb_density

    theta = _polarisation(cfg["cone_plus"], cfg["cone_minus"], cfg["gap_degrees"])
    grid = build_grid(cfg)
    rho = srb_density(build_map(cfg), cfg["t"], grid, tol=cfg["tol"])
    u = rho - 1.0
    rows = []
    for b in lp_decompose(u, theta):
        s = cfg["p"] if b.sigma == "+" else cfg["q"]
        l2 = float(np.sqrt(np.mean(np.abs(b.field.values) ** 2)))
        rows.append((b.n, b.sigma, l2, 2.0 ** (s * b.n) * l2))
    out.add("aniso.csv", dump_csv(["n", "sigma", "block_l2", "weighted"], rows))
    summary = {"p": cfg["p"], "q": cfg["q"], "field": "density minus one",
               "norm": aniso_norm(u, theta, cfg["p"], cfg["q"]),
               "cone_plus_degrees": [math.degrees(theta.cone_plus.center_angle),
                                     math.degrees(theta.cone_plus.half_width)],
               "cone_minus_degrees": [math.degrees(theta.cone_minus.center_angle),
                                      math.degrees(theta.cone_minus.half_width)]}
    out.add("aniso.json", dump_json(summary, "aniso"))
    print(dump_csv(["n", "sigma", "block_l2", "weighted"], rows), end="")


def cmd_ly_decay(cfg, out: Output):
    from .aniso import Polarisation, ly_decay_experiment

    strong = Polarisation.from_degrees(*cfg["cone_plus"], *cfg["cone_minus"])
    weak = Polarisation.from_degrees(*cfg["weak_cone_plus"], *cfg["weak_cone_minus"])
    tab = ly_decay_experiment(build_map(cfg), cfg["t"], strong, weak, cfg["p"], cfg["q"], n_max=cfg["nmax"],
                              trials=cfg["trials"], seed=cfg["seed"], cfg=build_grid(cfg))
    out.add("ly_decay.csv", dump_csv(["n", "strong_norm", "weak_norm", "fitted_rate"], tab.rows()))


def cmd_response(cfg, out: Output):
    from .response import FamilySpec, linear_response
    from .skew_map import make_perturbation, parse_field_terms

    f = build_map(cfg)
    V = make_perturbation(cfg["family"], None, parse_field_terms(cfg["family_vx"]),
                          parse_field_terms(cfg["family_vy"]))
    if V is None:
        raise UsageError("response needs a perturbation family", "--family")
    if cfg["method"] not in ("neumann", "contour", "fd", "all"):
        raise UsageError(f"unknown method {cfg['method']!r}", "--method")
    grid = build_grid(cfg)
    obs = build_observable(cfg["observable"], grid.nx, grid.ny)
    rep = linear_response(FamilySpec(f, V, base_t=cfg["t"]), obs, cfg["method"], grid, cfg["t_fd"],
                          cfg["kappa"], cfg["nodes"])
    payload = {"neumann": rep.neumann, "contour": rep.contour, "finite_difference": rep.finite_difference,
               "neumann_terms": rep.neumann_terms, "kappa": rep.kappa, "nodes": rep.nodes, "t_fd": rep.t_fd,
               "second_eigenvalue": rep.second_eigenvalue, "discrepancies": rep.discrepancies}
    out.add("response.json", dump_json(payload, "response"))


def cmd_holder(cfg, out: Output):
    from . import holder_lab as hl

    if cfg["L_min"] < 1 or cfg["L_max"] <= cfg["L_min"]:
        raise UsageError("need 1 <= L-min < L-max", "--L-min")
    sys_ = hl.build_system(cfg["kappa"], cfg["c0"], cfg["alpha"], cfg["base_degree"], cfg["seed"])
    Ls = range(cfg["L_min"], cfg["L_max"] + 1)
    fit = hl.holder_fit(sys_, Ls, cfg["samples"], cfg["seed"], cfg["blocks"], cfg["threads"])
    out.add("holder_drift.csv", dump_csv(["L", "delta", "drift_plus", "drift_minus", "Delta", "CI"], fit.rows))
    zrows = []
    for L in cfg["z_L"]:
        z = hl.z_experiment(sys_, L, samples=cfg["samples"], seed=cfg["seed"], threads=cfg["threads"])
        zrows.append((L, z.fraction, (z.ci[1] - z.ci[0]) / 2.0))
    out.add("holder_z.csv", dump_csv(["L", "P_Z_ge_1", "CI"], zrows))
    summary = {"slope": fit.slope, "bound": fit.bound, "K": sys_.K, "eps": sys_.eps,
               "witness_period": sys_.witness.q, "partially_hyperbolic": sys_.partially_hyperbolic,
               "measures": {"C": sys_.c_length, "B": sys_.b_length, "gap": sys_.gap}}
    if len(zrows) >= 2:
        zs = [r[1] for r in zrows]
        summary["z_slope"] = float(np.polyfit([r[0] for r in zrows], np.log(np.maximum(zs, 1e-300)), 1)[0]) \
            if min(zs) > 0 else None
        summary["z_slope_floor"] = 2.0 * math.log(1.0 - cfg["kappa"])
    if cfg["control"]:
        summary["control_slope"] = hl.holder_fit(hl.identity_control(sys_), Ls, cfg["samples"], cfg["seed"],
                                                 cfg["blocks"], cfg["threads"]).slope
    out.add("holder.json", dump_json(summary, "holder"))


COMMANDS = {"density": cmd_density, "spectrum": cmd_spectrum, "transversality": cmd_transversality,
            "aniso": cmd_aniso, "ly-decay": cmd_ly_decay, "response": cmd_response, "holder": cmd_holder}


def _error(exc, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if getattr(exc, "flag", None):
        payload["flag"] = exc.flag
    sys.stderr.write(dump_json(payload, "error"))
    return code


def run(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        explicit = {k: v for k, v in vars(ns).items() if k != "subcommand"}
        sub = ns.subcommand
        cfg = resolve_config(sub, explicit)
        out_dir = explicit.get("out") or os.environ.get(ENV_OUT) or DEFAULT_OUT
        out = Output(out_dir)
        COMMANDS[sub](cfg, out)
        out.write(sub, cfg)
    except ValidationError as exc:
        return _error(exc, 2)
    except NumericalFailure as exc:
        return _error(exc, 3)
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
