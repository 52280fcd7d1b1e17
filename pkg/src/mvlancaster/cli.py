"""Command-line driver for the verification workflows.

Every subcommand reads an optional JSON config (``"schema": 1``), lets flags
override it, runs one workflow, writes ``report.json`` plus CSV tables to
``--out`` and prints a summary table.  Exit codes: 0 all checks pass, 1 some
check fails, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .basis import Basis, build_basis
from .errors import ConfigError, LancasterError
from .lancaster import MixingMeasure
from .markov import kernel_from_dict
from .montecarlo import SimConfig, run_config, simulate_gaussian_lancaster, simulate_structural_poisson
from . import verify

SCHEMA = 1
FAMILIES = ("krawtchouk", "charlier", "meixner", "hermite")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser():
    parser = _Parser(prog="mvlancaster", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config file with \"schema\": 1")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=_seed, default=None, help="unsigned 64-bit seed")
        p.add_argument("--tol", type=float, default=None, help="override the main tolerance")
        p.add_argument("--degree", type=int, default=None, help="maximum polynomial degree")
        return p

    def family_flags(p):
        p.add_argument("--family", choices=FAMILIES)
        p.add_argument("--d", type=int)
        p.add_argument("--p", type=_floats, help="state weights")
        p.add_argument("--mu", type=_floats, help="Poisson means")
        p.add_argument("--tau", type=_floats, help="normal variances")
        p.add_argument("--N", type=int, help="multinomial index")
        p.add_argument("--alpha", type=float)
        p.add_argument("--theta", type=float)
        p.add_argument("--epsilon", type=float, help="slab tail mass")

    p = add("basis", "build an elementary basis and check its orthogonality")
    p.add_argument("--p", type=_floats)
    p.add_argument("--scale", choices=("last", "orthonormal", "none"))
    p = add("hypergroup", "linearisation tensor, its weighted sums and nonnegativity")
    p.add_argument("--p", type=_floats)
    p = add("orthogonality", "orthogonality and transforms of a polynomial family by enumeration")
    family_flags(p)
    p = add("limits", "limits between the polynomial families")
    p.add_argument("--d", type=int)
    p.add_argument("--mu", type=_floats)
    p.add_argument("--theta", type=float)
    p.add_argument("--schedule", type=_floats)
    p = add("lancaster-build", "assemble a truncated bivariate law from a mixing measure")
    family_flags(p)
    p = add("feasibility", "Meixner feasibility of a mixing measure and the branching map")
    p.add_argument("--p", type=_floats)
    p.add_argument("--theta", type=float)
    p = add("contingency", "margins of a multinomial contingency table against their expansion")
    p.add_argument("--N", type=int)
    p = add("poisson-array", "margins of a Poisson array against their expansion")
    p.add_argument("--epsilon", type=float)
    p = add("spectral", "eigenfunction checks of a Markov kernel or generator")
    p.add_argument("--bound", type=int, help="slab edge")
    p = add("simulate", "Monte Carlo comparison against exact targets")
    p.add_argument("--samples", type=int)
    return parser


# ---------------------------------------------------------------------------
# config handling


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if doc.get("schema") != SCHEMA:
        raise ConfigError(f"{path}: field 'schema' must be {SCHEMA}")
    return doc


def _merge(cfg, args, names):
    out = dict(cfg)
    for name in names:
        val = getattr(args, name, None)
        if val is not None:
            out[name] = val
    return out


def _need(cfg, key, where):
    if key not in cfg:
        raise ConfigError(f"{where}: missing field '{key}'")
    return cfg[key]


def _basis_from(cfg, weights_key="p", fallback=None):
    """Basis from an explicit document, from weights (+ seed vectors), or from ``fallback`` weights."""
    if "basis" in cfg:
        return Basis.from_dict(cfg["basis"])
    if "u" in cfg and "a" in cfg and "p" in cfg:
        return Basis.from_dict(cfg)
    p = cfg.get(weights_key)
    if p is None and fallback is not None:
        p = np.asarray(fallback, dtype=float) / np.sum(fallback)
    if p is None:
        raise ConfigError(f"need either 'basis' or '{weights_key}'")
    return build_basis(p, cfg.get("seed_vectors"), cfg.get("scale", "last"))


def _family_system(cfg):
    family = _need(cfg, "family", "config")
    if family == "charlier":
        mu = _need(cfg, "mu", "charlier")
        return verify.system_for(family, _basis_from(cfg, fallback=mu), {"mu": mu})
    if family == "hermite":
        tau = _need(cfg, "tau", "hermite")
        return verify.system_for(family, _basis_from(cfg, fallback=tau), {"tau": tau})
    if family == "meixner":
        b = _basis_from(cfg, fallback=np.ones(int(cfg.get("d", 2))))
        return verify.system_for(family, b, {"alpha": _need(cfg, "alpha", "meixner"), "theta": _need(cfg, "theta", "meixner")})
    if family == "krawtchouk":
        b = _basis_from(cfg, fallback=np.ones(int(cfg.get("d", 2))))
        return verify.system_for(family, b, {"N": _need(cfg, "N", "krawtchouk")})
    raise ConfigError(f"unknown family {family!r}")


def _check_d(cfg, b):
    if "d" in cfg and int(cfg["d"]) != b.d:
        raise ConfigError(f"--d {cfg['d']} does not match the {b.d} states implied by the parameters")


# ---------------------------------------------------------------------------
# subcommands


def cmd_basis(cfg, args):
    cfg = _merge(cfg, args, ["p", "scale"])
    b = _basis_from(cfg)
    return verify.basis_workflow(b, args.tol or verify.ORTHO_TOL), cfg


def cmd_hypergroup(cfg, args):
    cfg = _merge(cfg, args, ["p"])
    b = _basis_from(cfg)
    return verify.hypergroup_workflow(b, args.tol or verify.HYPERGROUP_TOL), cfg


def cmd_orthogonality(cfg, args):
    cfg = _merge(cfg, args, ["family", "d", "p", "mu", "tau", "N", "alpha", "theta", "epsilon", "degree"])
    sys_ = _family_system(cfg)
    _check_d(cfg, sys_.basis)
    D = int(cfg.get("degree", 4))
    eps = float(cfg.get("epsilon", 1e-20))
    wf = verify.orthogonality_workflow(sys_, D, eps, args.tol or 1e-8)
    extra = [verify.transform_workflow(sys_, D, seed=args.seed or 0, epsilon=eps)]
    if sys_.family == "charlier":
        extra.append(verify.generating_product_workflow(sys_, seed=args.seed or 0, epsilon=eps))
    if sys_.family == "krawtchouk":
        extra.append(verify.partition_sum_workflow(sys_.basis, sys_.N))
    for w in extra:
        wf.checks.extend(w.checks)
    return wf, cfg


def cmd_limits(cfg, args):
    cfg = _merge(cfg, args, ["d", "mu", "theta", "schedule", "degree"])
    d = int(cfg.get("d", len(cfg["mu"]) if "mu" in cfg else 2))
    wf = verify.limits_workflow(
        int(cfg.get("degree", 3)), d, cfg.get("mu"), float(cfg.get("theta", 0.5)), cfg.get("schedule"), args.tol
    )
    return wf, cfg


def cmd_lancaster_build(cfg, args):
    cfg = _merge(cfg, args, ["family", "d", "p", "mu", "tau", "N", "alpha", "theta", "epsilon", "degree"])
    sys_ = _family_system(cfg)
    m = MixingMeasure.from_dict(_need(cfg, "measure", "lancaster-build"))
    wf = verify.lancaster_build_workflow(sys_, m, int(cfg.get("degree", 8)), float(cfg.get("epsilon", 1e-12)), args.tol or 1e-8)
    return wf, cfg


def cmd_feasibility(cfg, args):
    cfg = _merge(cfg, args, ["p", "theta"])
    b = _basis_from(cfg)
    m = MixingMeasure.from_dict(_need(cfg, "measure", "feasibility"))
    return verify.feasibility_workflow(b, m, float(_need(cfg, "theta", "feasibility")), args.tol or verify.HYPERGROUP_TOL), cfg


def cmd_contingency(cfg, args):
    cfg = _merge(cfg, args, ["N"])
    return verify.contingency_workflow(int(_need(cfg, "N", "contingency")), _need(cfg, "cells", "contingency"), args.tol or 1e-12), cfg


def cmd_poisson_array(cfg, args):
    cfg = _merge(cfg, args, ["epsilon", "degree"])
    wf = verify.poisson_array_workflow(
        _need(cfg, "mu_cells", "poisson-array"),
        int(cfg.get("degree", 8)),
        float(cfg.get("epsilon", 1e-12)),
        args.tol or 1e-6,
        1e-9,
        cfg.get("cross_moment_target"),
    )
    return wf, cfg


def cmd_spectral(cfg, args):
    cfg = _merge(cfg, args, ["degree", "bound"])
    spec = kernel_from_dict(_need(cfg, "kernel", "spectral"))
    wf = verify.spectral_workflow(spec, int(cfg.get("degree", 4)), cfg.get("bound"), tol=args.tol or 1e-8, points=cfg.get("points"))
    return wf, cfg


def cmd_simulate(cfg, args):
    cfg = _merge(cfg, args, ["degree"])
    if args.samples is not None:
        cfg["n_samples"] = args.samples
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    cfg["seed"] = seed
    model = dict(_need(cfg, "model", "simulate"))
    n = int(cfg.get("n_samples", 100000))
    D = cfg.get("degree")
    variant = _need(model, "variant", "model")
    if variant == "structural-poisson":
        mu = _need(model, "mu", "model")
        b = _basis_from(model, fallback=mu)
        m = MixingMeasure.from_dict(_need(model, "measure", "model"))
        rep = simulate_structural_poisson(b, m, mu, n, seed, int(D or 3))
    elif variant == "gaussian-lancaster":
        tau = _need(model, "tau", "model")
        b = _basis_from(model, fallback=tau)
        m = MixingMeasure.from_dict(_need(model, "measure", "model"))
        rep = simulate_gaussian_lancaster(b, tau, m, n, seed, int(D or 2))
    else:
        if D is not None:
            model["max_degree"] = int(D)
        rep = run_config(SimConfig(model, n, seed, int(cfg.get("burn_in", 0))))
    wf = verify.Workflow()
    wf.add(f"{rep.kind} statistics", f"all |z| below {rep.threshold:g} ({len(rep.stats)} statistics)", rep.max_z, args.tol or rep.threshold)
    wf.data["simulation"] = rep.to_dict()
    wf.tables["statistics"] = (
        ["name", "estimate", "target", "stderr", "z"],
        [[s.name, repr(s.estimate), repr(s.target), repr(s.stderr), repr(s.z)] for s in rep.stats],
    )
    return wf, cfg


COMMANDS = {
    "basis": cmd_basis,
    "hypergroup": cmd_hypergroup,
    "orthogonality": cmd_orthogonality,
    "limits": cmd_limits,
    "lancaster-build": cmd_lancaster_build,
    "feasibility": cmd_feasibility,
    "contingency": cmd_contingency,
    "poisson-array": cmd_poisson_array,
    "spectral": cmd_spectral,
    "simulate": cmd_simulate,
}


# ---------------------------------------------------------------------------
# output


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_outputs(out, command, cfg, seed, wf):
    os.makedirs(out, exist_ok=True)
    report = {
        "schema": SCHEMA,
        "subcommand": command,
        "seed": seed,
        "config": cfg,
        "passed": wf.passed,
        "checks": [c.to_dict() for c in wf.checks],
        "data": wf.data,
    }
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=1, default=_jsonable))
        fh.write("\n")
    with open(os.path.join(out, "checks.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "property", "residual", "tolerance", "pass"])
        for c in wf.checks:
            w.writerow([c.name, c.property, repr(c.residual), repr(c.tol), c.passed])
    for name, (header, rows) in sorted(wf.tables.items()):
        with open(os.path.join(out, f"{name}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)


def summary_table(wf):
    head = ("check", "property", "residual", "tolerance", "pass")
    rows = [(c.name, c.property, f"{c.residual:.3e}", f"{c.tol:.1e}", "PASS" if c.passed else "FAIL") for c in wf.checks]
    widths = [max(len(str(r[i])) for r in [head] + rows) for i in range(len(head))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*head), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*r) for r in rows]
    return "\n".join(lines)


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        cfg.pop("schema", None)
        wf, resolved = COMMANDS[args.command](cfg, args)
    except (LancasterError, KeyError, TypeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else resolved.get("seed", 0)
    write_outputs(args.out, args.command, resolved, seed, wf)
    print(summary_table(wf))
    return 0 if wf.passed else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
