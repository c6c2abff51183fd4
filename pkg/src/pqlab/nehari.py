"""Nehari-manifold geometry.

Every nonzero u with H(u)*G(u) < 0 has exactly one scaling t(u)*u on the
manifold [F = 0]; the fibered functional J(u) = E(t(u)*u) is 0-homogeneous
and its sign is decided by the sign of H. The restricted gradient norm
measures criticality of E along the manifold without tangent-space bases:
min over lambda of the dual norm of E'(u) - lambda*F'(u), with the
minimizing lambda in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import (
    GridFunction,
    dual_dot,
    dual_norm,
    energy_grad_raw,
    mass_pow_grad,
    semi_pow_grad,
)
from .functionals import FunctionalValues, evaluate

TOL_NEHARI = 1e-10


class NotApplicableError(ValueError):
    """The fibering projection needs H and G of opposite sign."""


class ManifoldDegeneracyError(RuntimeError):
    """F'(u) vanished; the constraint is degenerate at u."""


@dataclass
class NehariPoint:
    u: GridFunction
    values: FunctionalValues
    in_B_plus: bool
    delta_margin: float  # G at the projected point
    t: float = 1.0


def _t_from_HG(H, G, p, q):
    if not H * G < 0:
        raise NotApplicableError(
            f"fibering needs H*G < 0, got H={H:.6g}, G={G:.6g}"
        )
    return (-G / H) ** (1.0 / (p - q))


def fibering_t(u, params):
    """Scaling t with t*u on the Nehari manifold: (-G/H)^(1/(p-q))."""
    vals = evaluate(u, params)
    return _t_from_HG(vals.H, vals.G, params.p, params.q)


def fibered_J(u, params):
    """E evaluated at the fiber critical point, in closed form.

    J = -sign(H) * ((p-q)/(pq)) * |G|^{p/(p-q)} / |H|^{q/(p-q)}; positive
    exactly when H < 0 < G."""
    vals = evaluate(u, params)
    H, G = vals.H, vals.G
    if not H * G < 0:
        raise NotApplicableError(
            f"fibering needs H*G < 0, got H={H:.6g}, G={G:.6g}"
        )
    p, q = params.p, params.q
    w = (p - q) / (p * q)
    return -np.sign(H) * w * abs(G) ** (p / (p - q)) / abs(H) ** (q / (p - q))


def project_to_nehari(u, params):
    """t(u)*u as a NehariPoint; in_B_plus reflects the sign dichotomy."""
    vals = evaluate(u, params)
    t = _t_from_HG(vals.H, vals.G, params.p, params.q)
    proj = GridFunction(u.mesh, t * u.values, check=False)
    pvals = evaluate(proj, params)
    return NehariPoint(
        u=proj,
        values=pvals,
        in_B_plus=bool(pvals.H < 0 < pvals.G),
        delta_margin=pvals.G,
        t=t,
    )


def constraint_grad(mesh, u, params, out=None):
    """Gradient of F = H + G (nodal layout)."""
    if out is None:
        out = np.zeros(mesh.shape)
    eps = params.eps_reg
    semi_pow_grad(mesh, u, params.p, eps, 1.0, out)
    mass_pow_grad(mesh, u, params.p, -params.alpha, out)
    semi_pow_grad(mesh, u, params.q, eps, 1.0, out)
    mass_pow_grad(mesh, u, params.q, -params.beta, out)
    return out


def restricted_grad_norm(pt, params):
    """Criticality measure of E restricted to the manifold at pt.

    Returns min over lambda of ||g_E - lambda*g_F|| in the mesh-weighted
    Euclidean dual norm; the minimizer is lambda = <g_E,g_F>/||g_F||^2."""
    mesh = pt.u.mesh
    u = pt.u.values
    g_E = energy_grad_raw(mesh, u, params)
    g_F = constraint_grad(mesh, u, params)
    gf2 = dual_dot(mesh, g_F, g_F)
    if gf2 == 0.0:
        raise ManifoldDegeneracyError("F'(u) = 0 at the given point")
    lam = dual_dot(mesh, g_E, g_F) / gf2
    return dual_norm(mesh, g_E - lam * g_F)
