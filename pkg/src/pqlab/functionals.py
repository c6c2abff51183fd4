"""The scalar functionals H, G, E, F and sign/level-set predicates.

H(u) = ||grad u||_p^p - alpha ||u||_p^p
G(u) = ||grad u||_q^q - beta  ||u||_q^q
E(u) = H(u)/p + G(u)/q        (the energy whose critical points we chase)
F(u) = H(u) + G(u)            (the Nehari constraint <E'(u), u>)

Sign conventions: B+ is the open cone {H < 0 < G}, where the constrained
manifold is regular and positive-energy solutions live.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage

from .discretization import GridFunction, mass_pow, semi_pow

TOL_LEVEL = 1e-9  # relative equality band for [H=0], [G=0]


@dataclass(frozen=True)
class FunctionalValues:
    H: float
    G: float
    E: float
    F: float
    # r-th powers of the seminorms, kept for tolerance scales downstream
    grad_p: float = 0.0
    grad_q: float = 0.0


def evaluate(u, params):
    """FunctionalValues at u; energies reported unregularized."""
    mesh = u.mesh
    sp = semi_pow(mesh, u.values, params.p)
    sq = semi_pow(mesh, u.values, params.q)
    H = sp - params.alpha * mass_pow(mesh, u.values, params.p)
    G = sq - params.beta * mass_pow(mesh, u.values, params.q)
    return FunctionalValues(
        H=H, G=G, E=H / params.p + G / params.q, F=H + G, grad_p=sp, grad_q=sq
    )


def level_membership(u, params, tol_level=TOL_LEVEL):
    """Sign flags for H, G, E and B+ membership, with equality bands.

    Bands are tol_level relative to each functional's own gradient power
    (H against ||grad u||_p^p, G against ||grad u||_q^q).
    """
    v = evaluate(u, params)
    band_H = tol_level * max(v.grad_p, 1e-300)
    band_G = tol_level * max(v.grad_q, 1e-300)
    band_E = band_H / params.p + band_G / params.q
    flags = {
        "H_neg": v.H < -band_H,
        "H_zero": abs(v.H) <= band_H,
        "H_pos": v.H > band_H,
        "G_neg": v.G < -band_G,
        "G_zero": abs(v.G) <= band_G,
        "G_pos": v.G > band_G,
        "E_neg": v.E < -band_E,
        "E_pos": v.E > band_E,
    }
    flags["B_plus"] = flags["H_neg"] and flags["G_pos"]
    return flags


# --- random test functions ---------------------------------------------------


def random_gridfunction(mesh, rng, modes=None):
    """Smooth random sample: 1-8 Fourier modes (1-D) / Gaussian bumps (2-D),
    normalized to ||grad u||_p = 1 with p immaterial (caller renormalizes)."""
    if modes is None:
        modes = int(rng.integers(1, 9))
    if mesh.kind == "interval":
        x = mesh.coords[:, 0]
        L = mesh.domain.length
        vals = np.zeros(mesh.n)
        coef = rng.normal(size=modes) / np.arange(1, modes + 1)
        for m in range(1, modes + 1):
            vals += coef[m - 1] * np.sin(m * np.pi * x / L)
        return GridFunction(mesh, vals, check=False)
    xy = mesh.coords
    vals = np.zeros(mesh.n_dof)
    span = xy.max(axis=0) - xy.min(axis=0)
    lo = xy.min(axis=0)
    for _ in range(modes):
        center = lo + rng.random(2) * span
        sigma = (0.08 + 0.25 * rng.random()) * span.max()
        c = rng.normal()
        d2 = ((xy - center) ** 2).sum(axis=1)
        vals += c * np.exp(-d2 / (2 * sigma * sigma))
    dense = mesh.unflatten_dof(vals)
    dense *= _boundary_fade(mesh)
    return GridFunction(mesh, dense, check=False)


def _fade_cache():
    return {}


_FADES = _fade_cache()


def _boundary_fade(mesh):
    # taper Gaussian tails to zero near the mask boundary (keeps samples
    # close to the zero-trace space instead of being chopped off)
    key = mesh.key
    if key not in _FADES:
        dist = scipy.ndimage.distance_transform_edt(mesh.mask)
        _FADES[key] = np.minimum(dist / 4.0, 1.0)
    return _FADES[key]


def normalize_gradient(u, p):
    """Scale u so that ||grad u||_p = 1."""
    s = semi_pow(u.mesh, u.values, p)
    if s <= 0:
        raise ValueError("cannot normalize the zero function")
    return GridFunction(u.mesh, u.values / s ** (1.0 / p), check=False)


# --- sign-lemma checker -------------------------------------------------------


def check_sign_lemma(params, samples, mesh, curve_info, rng=None,
                     tol_level=TOL_LEVEL):
    """Randomized check of the level-set inclusions behind the classifier.

    curve_info supplies lambda1p, lambda1q and beta_star_alpha (the critical
    value at params.alpha; None means +infinity, i.e. alpha < lambda1p).
    Three clauses, each active only when (alpha, beta) qualifies:

      (i)   beta <  beta*(alpha):  [H <= 0] subset {0} union [G > 0]
      (ii)  beta <= beta*(alpha):  [G < 0]  subset [H > 0]
      (iii) lambda1q < beta <= beta*(alpha):  [G <= 0] subset [H >= 0]

    Samples are biased toward [H <= 0] by mixing in the first p-eigenfunction
    so the clauses are exercised, not vacuous.
    """
    rng = np.random.default_rng(rng)
    lam1q = curve_info["lambda1q"]
    bsa = curve_info.get("beta_star_alpha")  # None == +inf sentinel
    phi_p = curve_info.get("phi_p")

    active = {
        "i": bsa is None or params.beta < bsa,
        "ii": bsa is None or params.beta <= bsa,
        "iii": (bsa is None or params.beta <= bsa) and params.beta > lam1q,
    }
    counts = {c: 0 for c in active}
    violations = {c: 0 for c in active}
    witness = None

    for j in range(samples):
        u = random_gridfunction(mesh, rng)
        if phi_p is not None and j % 3 == 0:
            # bias toward the H <= 0 cone around phi_p
            w = 0.03 * rng.random()
            u = GridFunction(
                u.mesh,
                phi_p.values / np.abs(phi_p.values).max()
                + w * u.values / max(np.abs(u.values).max(), 1e-300),
                check=False,
            )
        flags = level_membership(u, params, tol_level)
        if active["i"] and (flags["H_neg"] or flags["H_zero"]):
            counts["i"] += 1
            if not flags["G_pos"]:
                violations["i"] += 1
                witness = u
        if active["ii"] and flags["G_neg"]:
            counts["ii"] += 1
            if not flags["H_pos"]:
                violations["ii"] += 1
                witness = u
        if active["iii"] and (flags["G_neg"] or flags["G_zero"]):
            counts["iii"] += 1
            if flags["H_neg"]:
                violations["iii"] += 1
                witness = u

    report = {
        "clauses_active": [c for c, a in active.items() if a],
        "samples": samples,
        "hypothesis_hits": counts,
        "violations": violations,
        "total_violations": sum(violations.values()),
    }
    if witness is not None:
        report["witness_values"] = witness.values.tolist()
    return report


def sign_class(u, tol_rel=1e-8):
    """positive | negative | sign-changing | zero, with a relative band.

    1-D: thresholded nodal signs; 2-D: connected components of the
    thresholded positive/negative sets.
    """
    vals = u.values
    vmax = np.abs(vals).max()
    if vmax == 0.0:
        return "zero"
    band = tol_rel * vmax
    has_pos = bool((vals > band).any())
    has_neg = bool((vals < -band).any())
    if has_pos and has_neg:
        return "sign-changing"
    return "positive" if has_pos else "negative"


def nodal_count(u, tol_rel=1e-8):
    """Number of sign domains (1-D: runs of constant sign; 2-D: components)."""
    vals = u.values
    vmax = np.abs(vals).max()
    if vmax == 0.0:
        return 0
    band = tol_rel * vmax
    if u.mesh.kind == "interval":
        signs = np.where(vals > band, 1, np.where(vals < -band, -1, 0))
        signs = signs[signs != 0]
        if signs.size == 0:
            return 0
        return 1 + int((signs[1:] != signs[:-1]).sum())
    npos = scipy.ndimage.label(vals > band)[1]
    nneg = scipy.ndimage.label(vals < -band)[1]
    return int(npos + nneg)
