"""Command-line front end: config parsing, dispatch, dumps and reports.

Configuration files are flat key-value text with sections [domain],
[compact], [weight], [solver], [output]; the weight is given in the small
expression language of `expr`.  Exit codes: 0 ok, 2 configuration error,
3 solver non-convergence, 4 verification failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys

import numpy as np

from . import capacity as capmod
from . import envelope as envmod
from . import expr
from . import verify as verifymod
from .errors import (
    ConfigError,
    ConvergenceError,
    EmptyCompactError,
    InfeasibleError,
    MshcapError,
    SeparationError,
)
from .grid import Annulus, Ball, Box, CondenserSpec, Union, dump_field_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_VERIFY_FAIL = 4


# ---------------------------------------------------------------------------
# configuration parsing


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def _shape_from_words(words, dim, where):
    kind = words[0]
    vals = [float(w) for w in words[1:]]
    if kind == "ball":
        if len(vals) != dim + 1:
            raise ConfigError(
                f"{where}: ball needs {dim} center coordinates and a radius",
                kind="constraint",
            )
        return Ball(tuple(vals[:dim]), vals[dim])
    if kind == "box":
        if len(vals) != 2 * dim:
            raise ConfigError(f"{where}: box needs {2 * dim} bounds (lo then hi)", kind="constraint")
        return Box(tuple(vals[:dim]), tuple(vals[dim:]))
    if kind == "annulus":
        if len(vals) != dim + 2:
            raise ConfigError(
                f"{where}: annulus needs {dim} center coordinates and two radii",
                kind="constraint",
            )
        return Annulus(tuple(vals[:dim]), vals[dim], vals[dim + 1])
    raise ConfigError(f"{where}: unknown shape {kind!r}", kind="parse")


def _shape_from_section(sec, dim, where):
    kind = sec.get("shape", None)
    if kind is None:
        raise ConfigError(f"{where}: missing 'shape'", kind="parse")
    kind = kind.strip()
    if kind == "union":
        parts_text = sec.get("parts", "")
        parts = [p.strip() for p in parts_text.split("|") if p.strip()]
        if not parts:
            raise ConfigError(f"{where}: union needs 'parts'", kind="parse")
        return Union(tuple(_shape_from_words(p.split(), dim, where) for p in parts))
    if kind == "ball":
        center = _floats(sec.get("center", " ".join(["0"] * dim)))
        return _shape_from_words(["ball"] + [str(c) for c in center] + [sec.get("radius", "")], dim, where)
    if kind == "box":
        lo = _floats(sec.get("lo", ""))
        hi = _floats(sec.get("hi", ""))
        return _shape_from_words(["box"] + [str(v) for v in lo + hi], dim, where)
    if kind == "annulus":
        center = _floats(sec.get("center", " ".join(["0"] * dim)))
        return _shape_from_words(
            ["annulus"]
            + [str(c) for c in center]
            + [sec.get("inner", ""), sec.get("outer", "")],
            dim,
            where,
        )
    raise ConfigError(f"{where}: unknown shape {kind!r}", kind="parse")


def parse_config(path):
    """Read a condenser configuration; returns (CondenserSpec, options).

    The delta > sup_K psi constraint is checked numerically over the K nodes
    of the configured grid at parse time.
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file {path!r} does not exist", kind="parse")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh, source=path)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"cannot parse {path}: {exc}", kind="parse", line=line) from exc

    for sec in ("domain", "compact", "weight"):
        if sec not in cp:
            raise ConfigError(f"missing [{sec}] section", kind="parse")

    dom_sec = cp["domain"]
    try:
        n = int(dom_sec.get("n", "1"))
        h = float(dom_sec.get("h", ""))
    except ValueError as exc:
        raise ConfigError(f"[domain]: {exc}", kind="parse") from exc
    dim = 2 * n

    domain_shape = _shape_from_section(dom_sec, dim, "[domain]")
    compact_shape = _shape_from_section(cp["compact"], dim, "[compact]")

    w = cp["weight"]
    psi_text = w.get("psi", None)
    if psi_text is None:
        raise ConfigError("[weight]: missing 'psi'", kind="parse")
    psi = expr.parse(psi_text.strip())
    try:
        delta = float(w.get("delta", ""))
        m = int(w.get("m", "1"))
    except ValueError as exc:
        raise ConfigError(f"[weight]: {exc}", kind="parse") from exc

    allowed = {"x1", "y1", "r", "r1"} if n == 1 else set(expr.VARIABLES)
    stray = psi.variables() - allowed
    if stray:
        raise ConfigError(
            f"[weight]: variables {sorted(stray)} undefined for n={n}", kind="constraint"
        )

    try:
        spec = CondenserSpec(
            n=n, m=m, domain_shape=domain_shape, compact_shape=compact_shape,
            psi=psi, delta=delta, h=h,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid condenser: {exc}", kind="constraint") from exc

    # numeric feasibility check over the K nodes (guarded evaluation included)
    try:
        domain = spec.build()
        spec.validate(domain, strict=True)
    except (SeparationError, EmptyCompactError, InfeasibleError) as exc:
        raise ConfigError(str(exc), kind="constraint") from exc

    options = {}
    if "solver" in cp:
        s = cp["solver"]
        if "eps" in s:
            options["eps"] = float(s["eps"])
        if "max_sweeps" in s:
            options["max_sweeps"] = int(s["max_sweeps"])
        if "omega" in s:
            options["omega"] = s["omega"] if s["omega"] == "auto" else float(s["omega"])
        if "stencil" in s:
            options["stencil"] = s["stencil"].strip()
    out = {}
    if "output" in cp:
        if "dir" in cp["output"]:
            out["dir"] = cp["output"]["dir"].strip()
    return spec, {"solver": options, "output": out}


# ---------------------------------------------------------------------------
# commands


def _out_dir(args, options):
    path = args.out or options.get("output", {}).get("dir") or "out"
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _cmd_envelope(args):
    spec, options = parse_config(args.config)
    sol = envmod.solve_envelope(spec, **options["solver"])
    out = _out_dir(args, options)
    csv_path = os.path.join(out, "envelope.csv")
    dump_field_csv(
        sol.omega,
        csv_path,
        extra={"obstacle_active": sol.obstacle_active.astype(int)},
    )
    sidecar = {"spec": spec.describe(), **sol.summary()}
    _write_json(os.path.join(out, "envelope.json"), sidecar)
    print(f"envelope: {sol.iterations} sweeps, final update {sol.final_update:.3e}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def _sweep_levels(h, count):
    """Refinement levels starting at the configured spacing, halving each step."""
    return [h / 2.0**k for k in range(count)]


def _cmd_capacity(args):
    spec, options = parse_config(args.config)
    solver = options["solver"]
    out = _out_dir(args, options)
    method = args.method
    if method == "measure":
        levels = _sweep_levels(spec.h, args.sweep) if args.sweep else None
        rep = capmod.capacity_via_measure(spec, levels=levels, **solver)
    elif method == "outer":
        rep = capmod.outer_capacity(spec, **solver)
    else:
        base = capmod.capacity_via_measure(spec, **solver)
        dom = base.solution.domain
        fields, mtol = capmod.radial_candidate_family(spec, dom, count=19)
        family = [("envelope", base.solution.omega)] + fields
        oracle = capmod.capacity_direct_oracle(
            spec, family, domain=dom, measure_report=base, membership_tol=mtol
        )
        payload = {"spec": spec.describe(), "method": "DIRECT_ORACLE", **oracle.to_dict()}
        _write_json(os.path.join(out, "capacity.json"), payload)
        print(f"capacity (direct oracle): {oracle.value!r} (gap {oracle.gap!r})")
        return EXIT_OK
    _write_json(os.path.join(out, "capacity.json"), rep.to_dict())
    print(f"capacity ({rep.method}): {rep.value!r} at h={rep.h!r}")
    for hh, vv in rep.refinement_table:
        print(f"  h={hh!r}  value={vv!r}")
    return EXIT_OK


def _cmd_sweep(args):
    spec, options = parse_config(args.config)
    levels = _sweep_levels(spec.h, max(args.sweep or 3, 2))
    rep = capmod.capacity_via_measure(spec, levels=levels, **options["solver"])
    out = _out_dir(args, options)
    _write_json(os.path.join(out, "sweep.json"), rep.to_dict())
    print(f"{'h':>14s} {'value':>22s}")
    for hh, vv in rep.refinement_table:
        print(f"{hh!r:>14s} {vv!r:>22s}")
    print(f"measured order: {rep.order_estimate!r}")
    print(f"extrapolated:   {rep.extrapolated!r}")
    return EXIT_OK


def _cmd_verify(args):
    cfg = verifymod.SuiteConfig(seed=args.seed if args.seed is not None else 7)
    if args.quick:
        cfg = verifymod.SuiteConfig.quick(seed=cfg.seed)
    report = verifymod.run_suite(cfg)
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "verify.json"), "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    print(report.to_table())
    return EXIT_OK if report.passed else EXIT_VERIFY_FAIL


def build_parser():
    ap = argparse.ArgumentParser(
        prog="mshcap",
        description="Weighted m-subharmonic measures and condenser capacities on grids",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="condenser configuration file")
        p.add_argument("--out", default=None, help="output directory (default: out)")
        p.add_argument("--tol", type=float, default=None, help="override check tolerance")

    p = sub.add_parser("envelope", help="solve the weighted measure and dump the field")
    common(p)

    p = sub.add_parser("capacity", help="compute the condenser capacity")
    common(p)
    p.add_argument("--sweep", type=int, default=0, help="refinement levels (halving h)")
    p.add_argument(
        "--method",
        choices=("measure", "oracle", "outer"),
        default="measure",
        help="measure integral, direct-oracle family, or outer (shrinking) capacity",
    )

    p = sub.add_parser("sweep", help="refinement sweep with measured order")
    common(p)
    p.add_argument("--sweep", type=int, default=3, help="number of levels (halving h)")

    p = sub.add_parser("verify", help="run the property suite")
    common(p, config=False)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--quick", action="store_true", help="small battery for smoke tests")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    handlers = {
        "envelope": _cmd_envelope,
        "capacity": _cmd_capacity,
        "sweep": _cmd_sweep,
        "verify": _cmd_verify,
    }
    try:
        return handlers[args.command](args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ConfigError, SeparationError, EmptyCompactError, InfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MshcapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
