"""Command-line front end: one JSON-reproducible config per run.

Subcommands: eigs, curve, classify, solve, beads, check. Every output
file embeds the config hash, the seed, the tolerance block and module
versions, so a rerun with the same config is bit-identical.

Exit codes: 0 success (including empty-by-theorem registries), 1 usage,
2 convergence or search-budget failure, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy

from . import __version__
from .discretization import ProblemParams, interval, weak_residual
from .functionals import check_sign_lemma, evaluate, random_gridfunction
from .spectrum import (
    ConvergenceError,
    SpectralTable,
    build_table,
    bump_upper_bound,
    cached_first_eigenpair,
    exact_1d_eigenvalue,
)
from .curves import (
    CriticalCurve,
    alpha_star_const,
    beta_star_const,
    beta_star_of_alpha,
    build_curve,
    is_unbounded,
)
from .nehari import fibered_J, fibering_t
from .solver import (
    BUDGET_STARTS,
    BUDGET_STEPS,
    BumpConstructionError,
    SEP_TOL,
    SolverBudgetError,
    TOL_SOLVE,
    classify,
    find_negative,
    find_positive,
    negative_level_bounds,
)
from .beads import BeadsSpec, beads_experiment, build_beads, mask_pgm

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BUDGET = 2
EXIT_INVARIANT = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the artifact contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str = ""
    domain: str = "interval:1"
    n: int = 512
    p: float = 3.0
    q: float = 1.5
    alpha: float = 0.0
    beta: float = 0.0
    r: float = 1.5
    kmax: int = 4
    k: int = -1  # -1: take the classify verdict
    l: int = -1
    samples: int = 32
    alpha_span: float = 1.5  # curve sweep reaches alpha_span * alpha_star
    beads_k: int = 2
    disk_radius: float = 0.45
    eps_list: list = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.0])
    resolution: list = field(default_factory=lambda: [256, 128])
    seed: int = 0
    out: str = "runs/out"
    workers: int = 1
    dump_masks: bool = False
    tolerances: dict = field(default_factory=lambda: {
        "tol_solve": TOL_SOLVE, "sep_tol": SEP_TOL,
    })
    budgets: dict = field(default_factory=lambda: {
        "starts": BUDGET_STARTS, "steps": BUDGET_STEPS,
    })

    def hash(self):
        payload = asdict(self)
        for key in ("out", "workers", "dump_masks"):  # I/O, not the experiment
            payload.pop(key)
        blob = json.dumps(payload, sort_keys=True)
        return hashlib.sha1(blob.encode()).hexdigest()[:16]

    def meta(self):
        return {
            "config_hash": self.hash(),
            "seed": self.seed,
            "tolerances": self.tolerances,
            "versions": {
                "pqlab": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }


def _parse_domain(cfg):
    kind, _, rest = cfg.domain.partition(":")
    if kind != "interval":
        raise ValueError(
            f"unsupported domain {cfg.domain!r} (use interval:<length>; "
            f"2-D geometry goes through the beads subcommand)")
    try:
        length = float(rest) if rest else 1.0
    except ValueError:
        raise ValueError(f"bad interval length {rest!r}") from None
    return interval(length).mesh(cfg.n)


def _np_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path, payload, cfg):
    payload = {"meta": cfg.meta(), **payload}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_np_default)
        fh.write("\n")


def _write_csv(path, cfg, write_body):
    """Module CSV body under a '# key=value' provenance header."""
    tmp = path + ".body"
    write_body(tmp)
    meta = cfg.meta()
    with open(tmp) as src, open(path, "w") as dst:
        dst.write(f"# config_hash={meta['config_hash']}\n")
        dst.write(f"# seed={meta['seed']}\n")
        dst.write(f"# tolerances={json.dumps(meta['tolerances'], sort_keys=True)}\n")
        dst.write(f"# versions={json.dumps(meta['versions'], sort_keys=True)}\n")
        dst.write(src.read())
    os.remove(tmp)


def _outdir(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


# --- subcommands ----------------------------------------------------------------


def cmd_eigs(cfg):
    mesh = _parse_domain(cfg)
    table = SpectralTable()
    dom_id = str(mesh.key)
    if cfg.kmax >= 1:
        pair = cached_first_eigenpair(cfg.r, mesh)
        table.add(cfg.r, 1, pair.lam, "flow", dom_id)
        if mesh.kind == "interval":
            for k in range(1, cfg.kmax + 1):
                table.add(cfg.r, k,
                          exact_1d_eigenvalue(cfg.r, k, mesh.domain.length),
                          "exact1d", dom_id)
            for k in range(2, cfg.kmax + 1):
                bb = bump_upper_bound(cfg.r, k, mesh)
                table.add(cfg.r, k, bb.value, "bump_upper", dom_id)
    out = _outdir(cfg)
    _write_csv(os.path.join(out, "table.csv"), cfg, table.to_csv)
    _write_json(os.path.join(out, "summary.json"), {
        "r": cfg.r,
        "kmax": cfg.kmax,
        "values": {f"lambda_{k}": table.upper_bound(cfg.r, k)
                   for k in range(1, cfg.kmax + 1)},
    }, cfg)
    return EXIT_OK


def cmd_curve(cfg):
    mesh = _parse_domain(cfg)
    params = ProblemParams(cfg.p, cfg.q, cfg.alpha, cfg.beta)
    lam1p = cached_first_eigenpair(params.p, mesh).lam
    lam1q = cached_first_eigenpair(params.q, mesh).lam
    constants = {
        "lambda1p": lam1p,
        "lambda1q": lam1q,
        "alpha_star": alpha_star_const(params, mesh),
        "beta_star": beta_star_const(params, mesh),
    }
    out = _outdir(cfg)
    if cfg.alpha > 0.0:
        pt = beta_star_of_alpha(cfg.alpha, params, mesh)
        value = "+inf" if pt.unbounded else float(pt.value)

        def body(path):
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["alpha", "beta_star", "method", "residual"])
                w.writerow([cfg.alpha, value,
                            "sentinel" if pt.unbounded else "penalty",
                            0.0 if pt.unbounded else pt.residual])
        _write_csv(os.path.join(out, "curve.csv"), cfg, body)
        _write_json(os.path.join(out, "summary.json"),
                    {"constants": constants,
                     "point": {"alpha": cfg.alpha, "beta_star": value}}, cfg)
        return EXIT_OK
    alphas = np.linspace(lam1p, cfg.alpha_span * constants["alpha_star"],
                         cfg.samples)
    values, resids = [], []
    for a in alphas:
        pt = beta_star_of_alpha(float(a), params, mesh)
        values.append(pt.value)
        resids.append(0.0 if pt.unbounded else pt.residual)
    curve = CriticalCurve(list(map(float, alphas)), values, constants,
                          [], resids)
    _write_csv(os.path.join(out, "curve.csv"), cfg, curve.to_csv)
    finite = [v for v in values if not is_unbounded(v)]
    _write_json(os.path.join(out, "summary.json"), {
        "constants": constants,
        "samples": cfg.samples,
        "monotone_nonincreasing": all(
            b <= a * (1 + 1e-9) for a, b in zip(finite, finite[1:])),
    }, cfg)
    return EXIT_OK


def _classify_pipeline(cfg, mesh, params):
    table = build_table(mesh, params, kmax=cfg.kmax)
    curve = build_curve(params, mesh, n_samples=5)
    verdict = classify(params, table, curve, domain=mesh)
    return table, curve, verdict


def cmd_classify(cfg):
    mesh = _parse_domain(cfg)
    params = ProblemParams(cfg.p, cfg.q, cfg.alpha, cfg.beta)
    _, _, verdict = _classify_pipeline(cfg, mesh, params)
    out = _outdir(cfg)
    _write_json(os.path.join(out, "verdict.json"),
                {"verdict": json.loads(verdict.to_json())}, cfg)
    print(f"k={verdict.negative_pairs} l={verdict.positive_pairs} "
          f"citations={verdict.citations}")
    return EXIT_OK


def cmd_solve(cfg):
    mesh = _parse_domain(cfg)
    params = ProblemParams(cfg.p, cfg.q, cfg.alpha, cfg.beta)
    _, _, verdict = _classify_pipeline(cfg, mesh, params)
    k = verdict.negative_pairs if cfg.k < 0 else cfg.k
    l = verdict.positive_pairs if cfg.l < 0 else cfg.l
    out = _outdir(cfg)
    _write_json(os.path.join(out, "verdict.json"),
                {"verdict": json.loads(verdict.to_json()),
                 "requested": {"k": k, "l": l}}, cfg)
    code = EXIT_OK
    levels = {}
    if k >= 1:
        granted = verdict.negative_pairs >= 1
        try:
            levels["negative_bounds"] = negative_level_bounds(
                k, params, mesh, rng=cfg.seed)
        except BumpConstructionError as err:
            if granted:
                print(f"invariant violation: classify granted k={k} but "
                      f"the level-bound construction failed: {err}",
                      file=sys.stderr)
                return EXIT_INVARIANT
            levels["negative_bounds"] = f"not constructible: {err}"
        try:
            reg = find_negative(k, params, mesh, rng=cfg.seed,
                                starts=cfg.budgets["starts"],
                                max_steps=cfg.budgets["steps"])
        except SolverBudgetError as err:
            print(f"negative search: {err}", file=sys.stderr)
            reg, code = err.registry, EXIT_BUDGET
        _dump_registry(reg, os.path.join(out, "registry_negative.csv"),
                       os.path.join(out, "solutions_negative"), cfg)
    if l >= 1:
        try:
            reg = find_positive(l, params, mesh, rng=cfg.seed,
                                starts=cfg.budgets["starts"],
                                max_steps=cfg.budgets["steps"])
        except SolverBudgetError as err:
            print(f"positive search: {err}", file=sys.stderr)
            reg, code = err.registry, EXIT_BUDGET
        _dump_registry(reg, os.path.join(out, "registry_positive.csv"),
                       os.path.join(out, "solutions_positive"), cfg)
    if k == 0 and l == 0:
        # theorem grants nothing: record the empty registry explicitly
        def _empty(path):
            with open(path, "w") as fh:
                fh.write("index,energy,residual,sign_class,level_tag,"
                         "in_B_plus,nodal,file\n")
        _write_csv(os.path.join(out, "registry_negative.csv"), cfg, _empty)
    _write_json(os.path.join(out, "levels.json"), {"levels": levels}, cfg)
    return code


def _dump_registry(reg, csv_path, sol_dir, cfg):
    os.makedirs(sol_dir, exist_ok=True)
    _write_csv(csv_path, cfg, lambda p: reg.to_csv(p, solutions_dir=sol_dir))
    bad = [e.residual for e in reg.entries if e.residual > TOL_SOLVE]
    if bad:
        raise AssertionError(f"registry holds residuals above tol: {bad}")


def cmd_beads(cfg):
    params = ProblemParams(cfg.p, cfg.q, cfg.alpha, cfg.beta)
    specs = [BeadsSpec(cfg.beads_k, cfg.disk_radius, e,
                       tuple(cfg.resolution))
             for e in cfg.eps_list]
    out = _outdir(cfg)
    for spec in specs:
        # geometry errors (channel under 4 px, bad radius) are usage errors,
        # not numerical gaps; surface them before any eigensolve runs
        if spec.eps > 0.0:
            domain = build_beads(spec)
            if cfg.dump_masks:
                mask_pgm(domain, os.path.join(out, f"mask_eps{spec.eps}.pgm"))
    report = beads_experiment(specs, params)
    _write_csv(os.path.join(out, "beads.csv"), cfg, report.to_csv)
    _write_json(os.path.join(out, "summary.json"),
                {"rows": report.rows, "flags": report.flags}, cfg)
    return EXIT_OK if not report.flags["gaps"] else EXIT_BUDGET


def cmd_check(cfg):
    """Quick property suites: gradient, fibering algebra, sign lemma."""
    mesh = _parse_domain(cfg)
    params = ProblemParams(cfg.p, cfg.q, cfg.alpha, cfg.beta)
    rng = np.random.default_rng(cfg.seed)
    failures = []

    h = 1e-5
    worst = 0.0
    for _ in range(20):
        u = random_gridfunction(mesh, rng)
        xi = random_gridfunction(mesh, rng)
        g = weak_residual(u, params).values
        from .discretization import energy_raw
        ep = energy_raw(mesh, u.values + h * xi.values, params)
        em = energy_raw(mesh, u.values - h * xi.values, params)
        fd = (ep - em) / (2 * h)
        an = float(np.sum(g * xi.values))
        scale = max(np.linalg.norm(g.ravel()) * np.linalg.norm(xi.values.ravel()),
                    1e-300)
        worst = max(worst, abs(fd - an) / scale)
    if worst > 1e-6:
        failures.append(f"gradient check: worst rel dev {worst:.3g}")

    probe = params.with_(alpha=cached_first_eigenpair(params.p, mesh).lam * 2,
                         beta=0.0)
    fiber_dev = 0.0
    for _ in range(50):
        u = random_gridfunction(mesh, rng)
        v = evaluate(u, probe)
        if v.H * v.G >= 0:
            continue
        t = fibering_t(u, probe)
        J = fibered_J(u, probe)
        Et = evaluate(type(u)(mesh, t * u.values, check=False), probe).E
        fiber_dev = max(fiber_dev, abs(J - Et) / max(abs(J), 1e-300))
    if fiber_dev > 1e-10:
        failures.append(f"fibering identity: worst rel dev {fiber_dev:.3g}")

    lam1p = cached_first_eigenpair(params.p, mesh).lam
    lam1q = cached_first_eigenpair(params.q, mesh).lam
    info = {"lambda1p": lam1p, "lambda1q": lam1q,
            "beta_star_alpha": None if params.alpha < lam1p
            else float(beta_star_of_alpha(params.alpha, params, mesh).value),
            "phi_p": cached_first_eigenpair(params.p, mesh).phi}
    lemma = check_sign_lemma(params, 500, mesh, info, rng=rng)
    if lemma["total_violations"]:
        failures.append(f"sign lemma: {lemma['total_violations']} violations")

    out = _outdir(cfg)
    _write_json(os.path.join(out, "check.json"), {
        "gradient_worst_rel": worst,
        "fibering_worst_rel": fiber_dev,
        "sign_lemma": {key: lemma[key] for key in
                       ("clauses_active", "hypothesis_hits", "violations")},
        "failures": failures,
    }, cfg)
    for f in failures:
        print(f"FAIL {f}", file=sys.stderr)
    return EXIT_INVARIANT if failures else EXIT_OK


# --- argument wiring --------------------------------------------------------------


def _add_common(sp):
    sp.add_argument("--domain", default="interval:1",
                    help="interval:<length> (default interval:1)")
    sp.add_argument("--n", type=int, default=512,
                    help="interior nodes for interval meshes")
    sp.add_argument("--p", type=float, default=3.0)
    sp.add_argument("--q", type=float, default=1.5)
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--beta", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None, help="output directory")
    sp.add_argument("--workers", type=int, default=1,
                    help="reserved; runs are sequential for determinism")
    sp.add_argument("--config", default=None,
                    help="JSON config file; flags override its entries")
    sp.add_argument("--print-config", action="store_true",
                    help="dump the merged config as JSON and exit")


def build_parser():
    ap = _Parser(prog="pqlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("eigs", parents=[], help="eigenvalue table")
    _add_common(sp)
    sp.add_argument("--r", type=float, default=1.5, help="exponent")
    sp.add_argument("--kmax", type=int, default=4)

    sp = sub.add_parser("curve", help="critical curve sweep or point")
    _add_common(sp)
    sp.add_argument("--samples", type=int, default=32)
    sp.add_argument("--alpha-span", dest="alpha_span", type=float, default=1.5)

    sp = sub.add_parser("classify", help="region verdict at (alpha, beta)")
    _add_common(sp)
    sp.add_argument("--kmax", type=int, default=4)

    sp = sub.add_parser("solve", help="classify, then run the searches")
    _add_common(sp)
    sp.add_argument("--kmax", type=int, default=4)
    sp.add_argument("--k", type=int, default=-1,
                    help="negative pairs to find (-1: from the verdict)")
    sp.add_argument("--l", type=int, default=-1,
                    help="positive pairs to find (-1: from the verdict)")
    sp.add_argument("--starts", type=int, default=BUDGET_STARTS)
    sp.add_argument("--steps", type=int, default=BUDGET_STEPS)

    sp = sub.add_parser("beads", help="beads-domain experiment")
    _add_common(sp)
    sp.add_argument("--beads-k", dest="beads_k", type=int, default=2)
    sp.add_argument("--disk-radius", dest="disk_radius", type=float,
                    default=0.45)
    sp.add_argument("--eps", dest="eps_list", type=float, nargs="+",
                    default=[0.2, 0.1, 0.05, 0.0])
    sp.add_argument("--resolution", type=int, nargs=2, default=[256, 128])
    sp.add_argument("--dump-masks", dest="dump_masks", action="store_true")

    sp = sub.add_parser("check", help="property suites (quick)")
    _add_common(sp)
    return ap


def _config_from_args(args):
    cfg = RunConfig()
    if getattr(args, "config", None):
        with open(args.config) as fh:
            stored = json.load(fh)
        for key, val in stored.items():
            if hasattr(cfg, key):
                setattr(cfg, key, val)
    defaults = RunConfig()
    for key in vars(args):
        if key in ("config", "print_config", "starts", "steps"):
            continue
        if hasattr(cfg, key) and getattr(args, key) is not None:
            arg_val = getattr(args, key)
            # flags at their default never shadow a config-file entry
            if getattr(args, "config", None) and \
                    arg_val == getattr(defaults, key, None):
                continue
            setattr(cfg, key, arg_val)
    if hasattr(args, "starts"):
        cfg.budgets = {"starts": args.starts, "steps": args.steps}
    if cfg.out is None:
        cfg.out = os.path.join("runs", cfg.command or "out")
    if not (1.0 < cfg.q < cfg.p):
        raise ValueError(f"need 1 < q < p, got q={cfg.q} p={cfg.p}")
    return cfg


COMMANDS = {
    "eigs": cmd_eigs,
    "curve": cmd_curve,
    "classify": cmd_classify,
    "solve": cmd_solve,
    "beads": cmd_beads,
    "check": cmd_check,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except (ValueError, OSError, json.JSONDecodeError) as err:
        print(f"pqlab: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    if args.print_config:
        json.dump(asdict(cfg), sys.stdout, indent=2, sort_keys=True)
        print()
        return EXIT_OK
    try:
        return COMMANDS[cfg.command](cfg)
    except ValueError as err:
        print(f"pqlab: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, SolverBudgetError) as err:
        print(f"pqlab: convergence failure: {err}", file=sys.stderr)
        return EXIT_BUDGET
    except AssertionError as err:
        print(f"pqlab: invariant violation: {err}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
