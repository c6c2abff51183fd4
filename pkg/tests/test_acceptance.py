"""End-to-end acceptance gate.

Each test covers one numbered criterion and pushes a one-line verdict
onto the shared acceptance log (printed after the run summary). Budgets
are wall-clock seconds measured inside the test-body work, not fixtures.

Criterion 6 runs beta = 16 for the two-pair case and beta = 8 for the
one-pair case; with the package's eigenvalue normalization, beta = 8
lies between lambda_1(q) = 5.32 and lambda_2(q) = 15.04, where exactly
one negative pair exists (a nodal solution would need both nodal pieces
longer than (5.3187/8)^(2/3) = 0.761, impossible on a unit interval).
The two-pair configuration needs beta > lambda_2(q).
"""

import time

import numpy as np
import pytest

from pqlab.discretization import (
    GridFunction,
    ProblemParams,
    energy_grad_raw,
    energy_raw,
    interval,
)
from pqlab.functionals import check_sign_lemma, evaluate, random_gridfunction
from pqlab.nehari import fibered_J, fibering_t
from pqlab.curves import (
    alpha_star_const,
    beta_star_const,
    beta_star_of_alpha,
    build_curve,
    check_curve_duality,
)
from pqlab.solver import (
    SEP_TOL,
    TOL_SOLVE,
    SolverBudgetError,
    classify,
    find_negative,
    find_positive,
    negative_level_bounds,
)
from pqlab.spectrum import (
    build_table,
    cached_first_eigenpair,
    exact_1d_eigenvalue,
    first_eigenpair,
    interval_eigenvalue_formula,
)
from pqlab.beads import BeadsSpec, beads_experiment


def _verdict(log, n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    log.append(line)
    assert ok, line


def test_criterion_01_eigenvalue_oracles(acceptance_log):
    t0 = time.perf_counter()
    mesh = interval(1.0).mesh(2048)
    worst_flow = 0.0
    for r in (1.5, 2.0, 3.0):
        flow = first_eigenpair(r, mesh).lam
        shoot = exact_1d_eigenvalue(r, 1)
        worst_flow = max(worst_flow, abs(flow - shoot) / shoot)
    worst_shoot = 0.0
    for r in (1.5, 2.0, 3.0):
        for k in range(1, 5):
            sh = exact_1d_eigenvalue(r, k)
            fo = interval_eigenvalue_formula(r, k)
            worst_shoot = max(worst_shoot, abs(sh - fo) / fo)
    dt = time.perf_counter() - t0
    ok = worst_flow < 5e-3 and worst_shoot < 1e-6 and dt < 10.0
    _verdict(acceptance_log, 1, ok,
             f"flow-vs-shooting {worst_flow:.1e} (tol 5e-3), "
             f"shooting-vs-formula {worst_shoot:.1e} (tol 1e-6), {dt:.1f}s")


def test_criterion_02_beta_star_constant(acceptance_log):
    mesh = interval(1.0).mesh(1024)
    pp = ProblemParams(2.0, 1.5)
    b_star = beta_star_const(pp, mesh)
    target = np.pi**1.5
    rel = abs(b_star - target) / target
    lam1q = exact_1d_eigenvalue(1.5, 1)
    lam2q = exact_1d_eigenvalue(1.5, 2)
    chain = lam1q < b_star < lam2q
    ok = rel < 5e-3 and chain
    _verdict(acceptance_log, 2, ok,
             f"beta*={b_star:.4f} vs pi^1.5 rel {rel:.1e} (tol 5e-3); "
             f"chain {lam1q:.4f} < {b_star:.4f} < {lam2q:.4f}: {chain}")


def test_criterion_03_curve_properties(acceptance_log):
    t0 = time.perf_counter()
    mesh = interval(1.0).mesh(128)
    pp = ProblemParams(2.0, 1.5)
    lam1p = cached_first_eigenpair(2.0, mesh).lam
    lam1q = cached_first_eigenpair(1.5, mesh).lam
    a_star = alpha_star_const(pp, mesh)
    b_star = beta_star_const(pp, mesh)
    alphas = np.linspace(lam1p, 1.2 * a_star, 32)
    vals = [beta_star_of_alpha(float(a), pp, mesh).value for a in alphas]
    mono = all(b <= a * (1 + 1e-9) for a, b in zip(vals, vals[1:]))
    left_dev = abs(vals[0] - b_star) / b_star
    tail = [v for a, v in zip(alphas, vals) if a >= 1.05 * a_star]
    tail_dev = max(abs(v - lam1q) / lam1q for v in tail)
    strict = [float(a) for a in alphas if lam1p * 1.01 < a < a_star * 0.99]
    dual = check_curve_duality(strict, pp, mesh)
    dt = time.perf_counter() - t0
    ok = (mono and left_dev < 1e-2 and tail_dev < 1e-2
          and dual["n_checked"] > 0 and dual["max_deviation"] < 2e-2
          and dt < 120.0)
    _verdict(acceptance_log, 3, ok,
             f"nonincreasing {mono}, left dev {left_dev:.1e}, "
             f"tail dev {tail_dev:.1e} ({len(tail)} pts), duality "
             f"{dual['max_deviation']:.1e} on {dual['n_checked']} pts, {dt:.0f}s")


def test_criterion_04_nehari_algebra(acceptance_log):
    mesh = interval(1.0).mesh(128)
    # both configs sit deep inside their cone (alpha/beta far from every
    # sampled Rayleigh quotient), so the 1e-12 homogeneity bound measures
    # the fibering algebra and not cancellation at the H = 0 boundary
    configs = (ProblemParams(3.0, 1.5, alpha=3.0e4, beta=0.0),  # H<0<G
               ProblemParams(3.0, 1.5, alpha=0.0, beta=400.0))  # G<0<H
    rng = np.random.default_rng(4)
    worst_J = worst_hom = 0.0
    unique = 0
    total = 0
    for params in configs:
        got = 0
        while got < 500:
            u = random_gridfunction(mesh, rng)
            v = evaluate(u, params)
            if v.H * v.G >= 0:
                continue
            got += 1
            total += 1
            t = fibering_t(u, params)
            J = fibered_J(u, params)
            tu = GridFunction(mesh, t * u.values, check=False)
            worst_J = max(worst_J,
                          abs(J - evaluate(tu, params).E) / max(abs(J), 1e-300))
            for c in (0.1, 7.3):
                cu = GridFunction(mesh, c * u.values, check=False)
                worst_hom = max(worst_hom, abs(fibered_J(cu, params) - J)
                                / max(abs(J), 1e-300))
            ts = t * np.logspace(-3, 3, 2001)
            dpsi = ts ** (params.p - 1) * v.H + ts ** (params.q - 1) * v.G
            s = np.sign(dpsi)
            s = s[s != 0]  # grid point at t itself can land on the zero
            unique += int((s[1:] != s[:-1]).sum()) == 1
    ok = worst_J < 1e-10 and worst_hom < 1e-12 and unique == total == 1000
    _verdict(acceptance_log, 4, ok,
             f"J-vs-E(tu) {worst_J:.1e} (tol 1e-10), homogeneity "
             f"{worst_hom:.1e} (tol 1e-12), unique extremum {unique}/{total}")


def test_criterion_05_sign_lemma(acceptance_log):
    t0 = time.perf_counter()
    mesh = interval(1.0).mesh(192)
    pp = ProblemParams(3.0, 1.5)
    lam1p = cached_first_eigenpair(3.0, mesh).lam
    lam1q = cached_first_eigenpair(1.5, mesh).lam
    alpha = 1.2 * lam1p
    bsa = beta_star_of_alpha(alpha, pp, mesh).value
    params = pp.with_(alpha=alpha, beta=0.999 * bsa)
    info = {"lambda1p": lam1p, "lambda1q": lam1q, "beta_star_alpha": bsa,
            "phi_p": cached_first_eigenpair(3.0, mesh).phi}
    rep = check_sign_lemma(params, 10_000, mesh, info,
                           rng=np.random.default_rng(5))
    dt = time.perf_counter() - t0
    active = set(rep["clauses_active"]) == {"i", "ii", "iii"}
    exercised = all(rep["hypothesis_hits"][c] > 0 for c in ("i", "ii", "iii"))
    ok = (active and exercised and rep["total_violations"] == 0 and dt < 30.0)
    _verdict(acceptance_log, 5, ok,
             f"clauses {sorted(rep['clauses_active'])}, hits "
             f"{rep['hypothesis_hits']}, violations "
             f"{rep['total_violations']}, {dt:.1f}s")


def test_criterion_06_negative_multiplicity(acceptance_log):
    t0 = time.perf_counter()
    mesh = interval(1.0).mesh(512)
    base = ProblemParams(3.0, 1.5)
    table = build_table(mesh, base, kmax=3)
    curve = build_curve(base, mesh, n_samples=5)

    # two-pair configuration: beta above lambda_2(q)
    pp2 = base.with_(alpha=0.0, beta=16.0)
    v2 = classify(pp2, table, curve, domain=mesh)
    bounds = negative_level_bounds(2, pp2, mesh, rng=0)
    reg2 = find_negative(2, pp2, mesh, rng=0)
    energies = reg2.energies()
    level_ok = all(e <= b + 2 * TOL_SOLVE for e, b in zip(energies, bounds))
    res_ok = all(e.residual <= 1e-6 for e in reg2.entries)
    dist = reg2.pair_distance(mesh, reg2.entries[0].u.values,
                              reg2.entries[1].u.values)
    scale = max(np.abs(reg2.entries[0].u.values).max(), 1e-300)
    distinct = dist > SEP_TOL * scale
    neg_ok = all(e.energy < 0 for e in reg2.entries)

    # one-pair configuration: beta between lambda_1(q) and lambda_2(q)
    pp1 = base.with_(alpha=0.0, beta=8.0)
    v1 = classify(pp1, table, curve, domain=mesh)
    reg1 = find_negative(1, pp1, mesh, rng=0)
    b1 = negative_level_bounds(1, pp1, mesh, rng=0)
    one_ok = (v1.negative_pairs == 1 and len(reg1.entries) >= 1
              and reg1.entries[0].energy < 0
              and reg1.entries[0].energy <= b1[0] + 2 * TOL_SOLVE
              and reg1.entries[0].residual <= 1e-6
              and reg1.entries[0].sign_class in ("positive", "negative"))
    dt = time.perf_counter() - t0
    ok = (v2.negative_pairs == 2 and len(reg2.entries) >= 2 and neg_ok
          and res_ok and level_ok and distinct and one_ok and dt < 120.0)
    _verdict(acceptance_log, 6, ok,
             f"beta=16: k={v2.negative_pairs}, {len(reg2.entries)} pairs, "
             f"E={[f'{e:.3g}' for e in energies]} vs bounds "
             f"{[f'{b:.3g}' for b in bounds]}; beta=8: k={v1.negative_pairs}, "
             f"{len(reg1.entries)} pair ({reg1.entries[0].sign_class}); "
             f"{dt:.0f}s")


def test_criterion_07_positive_multiplicity(acceptance_log):
    t0 = time.perf_counter()
    mesh = interval(1.0).mesh(512)
    base = ProblemParams(3.0, 1.5)
    table = build_table(mesh, base, kmax=3)
    curve = build_curve(base, mesh, n_samples=5)
    lam2p_cert = table.upper_bound(3.0, 2)
    pp = base.with_(alpha=1.05 * lam2p_cert, beta=0.0)
    v = classify(pp, table, curve, domain=mesh)
    reg = find_positive(2, pp, mesh, rng=0)
    pos_ok = all(e.energy > 0 for e in reg.entries)
    cone_ok = all(e.in_B_plus for e in reg.entries)
    res_ok = all(e.residual <= TOL_SOLVE for e in reg.entries)
    least = min(reg.entries, key=lambda e: e.energy)
    least_sign_ok = least.sign_class in ("positive", "negative")
    dt = time.perf_counter() - t0
    ok = (v.positive_pairs >= 2 and v.citations["positive"] == "thm3"
          and len(reg.entries) >= 2 and pos_ok and cone_ok and res_ok
          and least_sign_ok and reg.diagnostics["c1_sign_constant"]
          and dt < 120.0)
    _verdict(acceptance_log, 7, ok,
             f"alpha={pp.alpha:.1f} (1.05x certified lambda_2(p)), "
             f"l={v.positive_pairs}, {len(reg.entries)} pairs in B+, "
             f"least-energy {least.sign_class} at E={least.energy:.3g}; "
             f"{dt:.0f}s")


def test_criterion_08_nonexistence_sanity(acceptance_log):
    mesh = interval(1.0).mesh(256)
    pp = ProblemParams(3.0, 1.5, alpha=10.0, beta=3.0)
    table = build_table(mesh, pp, kmax=2)
    curve = build_curve(pp, mesh, n_samples=5)
    v = classify(pp, table, curve, domain=mesh)
    with pytest.raises(SolverBudgetError) as neg:
        find_negative(1, pp, mesh, rng=0, starts=12)
    with pytest.raises(SolverBudgetError) as pos:
        find_positive(1, pp, mesh, rng=0, starts=12)
    neg_reg = neg.value.registry
    pos_reg = pos.value.registry
    scales = neg_reg.diagnostics["final_relative_scales"]
    collapsed = len(scales) > 0 and max(scales) < 1e-4
    ok = (v.negative_pairs == 0 and v.positive_pairs == 0
          and len(neg_reg.entries) == 0 and len(pos_reg.entries) == 0
          and collapsed)
    _verdict(acceptance_log, 8, ok,
             f"classify k=l=0, registries empty, all starts collapsed to 0 "
             f"(max final scale {max(scales):.1e})")


def test_criterion_09_beads(acceptance_log):
    t0 = time.perf_counter()
    pp = ProblemParams(3.0, 1.5)
    specs = [BeadsSpec(k=2, r=0.45, eps=e, resolution=(256, 128))
             for e in (0.2, 0.1, 0.05)]
    report = beads_experiment(specs, pp)
    dt = time.perf_counter() - t0
    margins = [row["margin"] for row in report.rows]
    statuses = [row["status"] for row in report.rows]
    increasing = all(b > a for a, b in zip(margins, margins[1:]))
    ok = (statuses == ["ok"] * 3 and increasing and margins[-1] > 0
          and report.flags["bound_eps_independent"]
          and report.flags["lambda1_monotone"]
          and dt < 600.0)
    _verdict(acceptance_log, 9, ok,
             f"margins {[f'{m:.3f}' for m in margins]} increasing as the "
             f"channel shrinks, bound-vs-beta* margin {margins[-1]:.3f} > 0 "
             f"at eps=0.05; {dt:.0f}s")


def test_criterion_10_gradient_correctness(acceptance_log):
    mesh = interval(1.0).mesh(256)
    pp = ProblemParams(3.0, 1.5, alpha=7.0, beta=11.0)
    rng = np.random.default_rng(10)
    h = 1e-5
    worst = 0.0
    for _ in range(100):
        u = random_gridfunction(mesh, rng).values
        # FD truncation is cubic in the direction amplitude while the
        # directional derivative is linear, so a small step direction keeps
        # the h^2 term two decades under the tolerance
        xi = 0.1 * random_gridfunction(mesh, rng).values
        g = energy_grad_raw(mesh, u, pp)
        fd = (energy_raw(mesh, u + h * xi, pp)
              - energy_raw(mesh, u - h * xi, pp)) / (2 * h)
        an = float(np.sum(g * xi))
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-300))
    ok = worst < 1e-6
    _verdict(acceptance_log, 10, ok,
             f"100 random pairs, worst relative deviation {worst:.1e} "
             f"(tol 1e-6, h=1e-5)")
