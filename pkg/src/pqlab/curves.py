"""Critical parameter curves for the two-exponent problem.

beta_star_of_alpha(a) is the infimum of the q-Rayleigh quotient over the
set {R_p <= a}; alpha_star_of_beta is its mirror. Both are computed by
escalating exact-penalty descent and bracketed from above by a dense scan
of the two-dimensional span of the first p- and q-eigenfunctions. The
constants beta_star = R_q(phi_p) and alpha_star = R_p(phi_q) pin the ends
of the curve.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .discretization import mass_pow, semi_pow, mass_pow_grad, semi_pow_grad, \
    dual_norm
from .spectrum import EPS_FLOW, as_mesh, cached_first_eigenpair

TOL_CURVE = 1e-2
TOL_FEASIBLE = 1e-6
MU_LADDER = tuple(10.0 ** e for e in range(1, 9))


class _Unbounded:
    """Tagged +infinity for infeasible curve queries.

    Deliberately supports no arithmetic: leaking it into a formula is a
    bug and should raise immediately. Comparisons treat it as larger than
    any float so curve tables can still be sorted."""

    __slots__ = ()

    def __repr__(self):
        return "UNBOUNDED"

    def __gt__(self, other):
        return isinstance(other, (int, float))

    def __ge__(self, other):
        return isinstance(other, (int, float)) or other is self

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self


UNBOUNDED = _Unbounded()


def is_unbounded(x):
    return x is UNBOUNDED


@dataclass
class CurvePoint:
    value: object  # float, or UNBOUNDED
    minimizer: object  # GridFunction | None
    constraint_slack: float = 0.0
    oracle_upper: float = np.inf
    residual: float = 0.0
    mu_final: float = 0.0

    @property
    def unbounded(self):
        return self.value is UNBOUNDED


def _quotient(mesh, u, r):
    return semi_pow(mesh, u, r, EPS_FLOW) / mass_pow(mesh, u, r)


def _quotient_grad(mesh, u, r):
    """Gradient of R_r at u (nodal layout)."""
    S = semi_pow(mesh, u, r, EPS_FLOW)
    M = mass_pow(mesh, u, r)
    g = np.zeros(mesh.shape)
    semi_pow_grad(mesh, u, r, EPS_FLOW, 1.0 / M, g)
    mass_pow_grad(mesh, u, r, -S / (M * M), g)
    return g


def _penalty_descent(mesh, u, obj_r, con_r, bound, mu, budget=300):
    """Minimize R_obj + mu*max(0, R_con - bound)^2 from u; returns
    (u, steps_used). 0-homogeneous, so iterates stay mass-normalized."""
    u = u / mass_pow(mesh, u, obj_r) ** (1.0 / obj_r)

    def value(w):
        viol = max(0.0, _quotient(mesh, w, con_r) - bound)
        return _quotient(mesh, w, obj_r) + mu * viol * viol

    val = value(u)
    tau = 0.5
    stall = 0
    for step in range(budget):
        g = _quotient_grad(mesh, u, obj_r)
        viol = max(0.0, _quotient(mesh, u, con_r) - bound)
        if viol > 0.0:
            g += 2.0 * mu * viol * _quotient_grad(mesh, u, con_r)
        z = mesh.poisson_solve(g)
        accepted = False
        for _ in range(60):
            trial = u - tau * z
            m = mass_pow(mesh, trial, obj_r)
            if m > 0:
                trial = trial / m ** (1.0 / obj_r)
                val_t = value(trial)
                if val_t < val:
                    rel = (val - val_t) / max(abs(val), 1e-300)
                    u, val = trial, val_t
                    tau = min(tau * 1.25, 1e3)
                    accepted = True
                    stall = stall + 1 if rel < 1e-12 else 0
                    break
            tau *= 0.5
        if not accepted or stall >= 3:
            return u, step + 1
    return u, budget


def subspace_upper_bound(mesh, params, obj_r, con_r, bound, n_theta=2001):
    """Dense scan of span{phi_p, phi_q} for min R_obj subject to
    R_con <= bound. Returns (value, minimizer array); value is +inf when
    no feasible direction exists in the span."""
    phi_a = cached_first_eigenpair(params.p, mesh).phi.values
    phi_b = cached_first_eigenpair(params.q, mesh).phi.values
    phi_a = phi_a / np.sqrt(np.sum(phi_a * phi_a))
    phi_b = phi_b / np.sqrt(np.sum(phi_b * phi_b))
    best = np.inf
    best_u = None
    thetas = np.linspace(0.0, np.pi / 2.0, n_theta)
    for sgn in (1.0, -1.0):
        for th in thetas:
            u = np.cos(th) * phi_a + sgn * np.sin(th) * phi_b
            if np.max(np.abs(u)) < 1e-14:
                continue
            if _quotient(mesh, u, con_r) <= bound:
                val = _quotient(mesh, u, obj_r)
                if val < best:
                    best, best_u = val, u
    return best, best_u


def _constrained_min(mesh, params, obj_r, con_r, bound):
    """min R_obj over {R_con <= bound} by escalating exact penalty with a
    subspace-oracle restart; returns a CurvePoint."""
    phi_obj = cached_first_eigenpair(obj_r, mesh).phi.values
    phi_con = cached_first_eigenpair(con_r, mesh).phi.values
    oracle_val, oracle_u = subspace_upper_bound(mesh, params, obj_r, con_r,
                                                bound)
    starts = [0.5 * phi_obj / np.max(np.abs(phi_obj))
              + 0.5 * phi_con / np.max(np.abs(phi_con))]
    if oracle_u is not None:
        starts.append(oracle_u)
    best = None
    for u0 in starts:
        u = u0.copy()
        mu = MU_LADDER[0]
        for mu in MU_LADDER:
            u, _ = _penalty_descent(mesh, u, obj_r, con_r, bound, mu)
            viol = max(0.0, _quotient(mesh, u, con_r) - bound)
            if viol == 0.0 and mu >= MU_LADDER[2]:
                break
        val = _quotient(mesh, u, obj_r)
        slack = _quotient(mesh, u, con_r) - bound
        if best is None or val < best[0]:
            best = (val, u, slack, mu)
    val, u, slack, mu = best
    g = _quotient_grad(mesh, u, obj_r)
    if slack > 0:
        g += 2.0 * mu * slack * _quotient_grad(mesh, u, con_r)
    from .discretization import GridFunction
    return CurvePoint(
        value=val,
        minimizer=GridFunction(mesh, u, check=False),
        constraint_slack=max(0.0, slack),
        oracle_upper=oracle_val,
        residual=dual_norm(mesh, g),
        mu_final=mu,
    )


def beta_star_const(params, domain, n=None):
    """beta_star = q-Rayleigh quotient of the first p-eigenfunction."""
    mesh = as_mesh(domain, n)
    phi_p = cached_first_eigenpair(params.p, mesh).phi.values
    return _quotient(mesh, phi_p, params.q)


def alpha_star_const(params, domain, n=None):
    """alpha_star = p-Rayleigh quotient of the first q-eigenfunction."""
    mesh = as_mesh(domain, n)
    phi_q = cached_first_eigenpair(params.q, mesh).phi.values
    return _quotient(mesh, phi_q, params.p)


def beta_star_of_alpha(alpha, params, domain, n=None):
    """inf{R_q(u) : R_p(u) <= alpha}; UNBOUNDED sentinel below lambda_1(p).

    Exact-penalty descent (mu in 10..1e8, warm-started), bracketed from
    above by the span{phi_p, phi_q} scan. The feasibility cut uses the
    discrete lambda_1(p) so the sentinel matches the mesh-level problem.
    """
    mesh = as_mesh(domain, n)
    lam1p = cached_first_eigenpair(params.p, mesh).lam
    if alpha < lam1p * (1.0 - TOL_FEASIBLE):
        return CurvePoint(value=UNBOUNDED, minimizer=None)
    return _constrained_min(mesh, params, params.q, params.p, alpha)


def alpha_star_of_beta(beta, params, domain, n=None):
    """inf{R_p(u) : R_q(u) <= beta}; UNBOUNDED sentinel below lambda_1(q)."""
    mesh = as_mesh(domain, n)
    lam1q = cached_first_eigenpair(params.q, mesh).lam
    if beta < lam1q * (1.0 - TOL_FEASIBLE):
        return CurvePoint(value=UNBOUNDED, minimizer=None)
    return _constrained_min(mesh, params, params.p, params.q, beta)


@dataclass
class CriticalCurve:
    alpha_samples: list
    beta_star_values: list  # floats (UNBOUNDED never appears: grid > lam1p)
    constants: dict
    snapshots: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "beta_star", "method", "residual"])
            for a, b, res in zip(self.alpha_samples, self.beta_star_values,
                                 self.residuals):
                w.writerow([repr(float(a)),
                            "UNBOUNDED" if is_unbounded(b) else repr(float(b)),
                            "sentinel" if is_unbounded(b) else "penalty",
                            repr(float(res))])


def build_curve(params, domain, n=None, n_samples=9, refine_near_star=0):
    """Sample beta_star over [lambda_1(p), alpha_star].

    refine_near_star adds that many extra geometrically-spaced samples
    before alpha_star, where the curve flattens onto lambda_1(q) at an
    unknown rate."""
    mesh = as_mesh(domain, n)
    lam1p = cached_first_eigenpair(params.p, mesh).lam
    lam1q = cached_first_eigenpair(params.q, mesh).lam
    a_star = alpha_star_const(params, mesh)
    b_star = beta_star_const(params, mesh)
    alphas = list(np.linspace(lam1p, a_star, n_samples))
    for j in range(1, refine_near_star + 1):
        alphas.append(a_star - (a_star - lam1p) * 0.5 ** (j + 1))
    alphas = sorted(set(float(a) for a in alphas))
    values, snaps, resids = [], [], []
    for a in alphas:
        pt = beta_star_of_alpha(a, params, mesh)
        values.append(pt.value)
        snaps.append(pt.minimizer)
        resids.append(pt.residual)
    return CriticalCurve(
        alphas, values,
        {"lambda1p": lam1p, "lambda1q": lam1q,
         "alpha_star": a_star, "beta_star": b_star},
        snaps, resids,
    )


def check_curve_duality(alphas, params, domain, n=None, tol_dual=2e-2):
    """For each alpha in (lambda_1(p), alpha_star): solve beta = b*(alpha),
    then a*(beta), and measure |a*(b*(alpha)) - alpha|. The two curve
    families describe the same set in the open quadrant."""
    mesh = as_mesh(domain, n)
    lam1q = cached_first_eigenpair(params.q, mesh).lam
    b_star = beta_star_const(params, mesh)
    rows = []
    max_dev = 0.0
    for a in alphas:
        fwd = beta_star_of_alpha(a, params, mesh)
        if fwd.unbounded:
            rows.append({"alpha": a, "beta": None, "alpha_back": None,
                         "deviation": None, "skipped": "sentinel"})
            continue
        beta = fwd.value
        if not (lam1q * (1 + 1e-9) < beta < b_star * (1 - 1e-9)):
            rows.append({"alpha": a, "beta": beta, "alpha_back": None,
                         "deviation": None, "skipped": "beta outside open range"})
            continue
        back = alpha_star_of_beta(beta, params, mesh)
        dev = abs(back.value - a) / abs(a)
        max_dev = max(max_dev, dev)
        rows.append({"alpha": a, "beta": beta, "alpha_back": back.value,
                     "deviation": dev, "skipped": None})
    checked = [r for r in rows if r["deviation"] is not None]
    return {
        "rows": rows,
        "max_deviation": max_dev,
        "n_checked": len(checked),
        "pass": bool(checked) and max_dev <= tol_dual,
        "tol_dual": tol_dual,
    }
