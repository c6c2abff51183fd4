"""Meshes, grid functions and the discrete energy gradient.

Uniform meshes over an interval or a 2-D pixel mask, zero Dirichlet
boundary by construction. Piecewise-linear nodal values; gradients are
forward differences per cell (1-D) / per-cell two-point stencils (2-D).
All Lebesgue/Sobolev quantities are returned as r-th powers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.ndimage
import scipy.sparse
import scipy.sparse.linalg

from . import kernels

DEFAULT_N_1D = 2048


class Domain:
    """Geometry only; call .mesh() to discretize."""

    def __init__(self, kind, length=None, mask=None, h=None, origin=(0.0, 0.0)):
        self.kind = kind
        self.length = length
        self.origin = tuple(float(c) for c in origin)
        if mask is not None:
            mask = np.ascontiguousarray(mask, dtype=bool)
            mask.setflags(write=False)
        self.mask = mask
        self.h = h

    @cached_property
    def key(self):
        if self.kind == "interval":
            return ("interval", float(self.length))
        digest = hashlib.sha1(self.mask.tobytes()).hexdigest()[:16]
        return ("pixel2d", self.mask.shape, float(self.h), self.origin, digest)

    def mesh(self, n=None):
        if self.kind == "interval":
            return Mesh(self, n if n is not None else DEFAULT_N_1D)
        return Mesh(self, None)

    def __repr__(self):
        if self.kind == "interval":
            return f"Domain(interval, L={self.length})"
        return f"Domain(pixel2d, {self.mask.shape}, h={self.h})"


def interval(length):
    if not (np.isfinite(length) and length > 0):
        raise ValueError(f"interval length must be positive, got {length}")
    return Domain("interval", length=float(length))


def pixel2d(mask, h, origin=(0.0, 0.0)):
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("pixel2d mask must be 2-D")
    if not (np.isfinite(h) and h > 0):
        raise ValueError(f"pixel size must be positive, got {h}")
    if mask.sum() < 2:
        raise ValueError("pixel2d mask needs at least 2 interior pixels")
    return Domain("pixel2d", mask=mask, h=float(h), origin=origin)


class Mesh:
    """Discretized domain. Nodes are interior dofs; boundary is implicit zero."""

    def __init__(self, domain, n):
        self.domain = domain
        self.kind = domain.kind
        if self.kind == "interval":
            if n is None or n < 2:
                raise ValueError(f"interval mesh needs >= 2 interior nodes, got {n}")
            self.n = int(n)
            self.h = domain.length / (self.n + 1)
            self.shape = (self.n,)
            self.n_dof = self.n
        elif self.kind == "pixel2d":
            self.mask = domain.mask
            self.h = domain.h
            self.shape = self.mask.shape
            self.n_dof = int(self.mask.sum())
            if self.n_dof < 2:
                raise ValueError("pixel2d mesh needs >= 2 interior pixels")
            self.inside_flat = np.flatnonzero(self.mask.ravel())
        else:
            raise ValueError(f"unknown domain kind {domain.kind!r}")
        self.vol = self.h if self.kind == "interval" else self.h * self.h

    @cached_property
    def key(self):
        return self.domain.key + (("n", self.n) if self.kind == "interval" else ())

    @cached_property
    def coords(self):
        if self.kind == "interval":
            return (np.arange(1, self.n + 1) * self.h)[:, None]
        iy, ix = np.nonzero(self.mask)
        x0, y0 = self.domain.origin
        return np.column_stack([x0 + (ix + 0.5) * self.h, y0 + (iy + 0.5) * self.h])

    @cached_property
    def cell_volumes(self):
        # gradient cells: n+1 segments in 1-D; inside pixels in 2-D
        if self.kind == "interval":
            return np.full(self.n + 1, self.h)
        return np.full(self.n_dof, self.vol)

    @property
    def measure(self):
        """|Omega| of the discrete domain."""
        if self.kind == "interval":
            return self.domain.length
        return self.n_dof * self.vol

    # --- dof vector helpers (2-D functions live on dense arrays) -----------

    def zeros(self):
        return np.zeros(self.shape)

    def flatten_dof(self, values):
        """Dense array -> dof vector (identity in 1-D)."""
        if self.kind == "interval":
            return values
        return values.ravel()[self.inside_flat]

    def unflatten_dof(self, vec):
        if self.kind == "interval":
            return vec
        out = np.zeros(self.mask.size)
        out[self.inside_flat] = vec
        return out.reshape(self.shape)

    def mask_inplace(self, values):
        """Zero out entries outside the mask (no-op in 1-D)."""
        if self.kind == "pixel2d":
            values[~self.mask] = 0.0
        return values

    # --- linear operators ---------------------------------------------------

    @cached_property
    def _banded_chol(self):
        # 1-D stiffness (1/h) tridiag(-1, 2, -1), upper-banded Cholesky factor
        ab = np.zeros((2, self.n))
        ab[0, 1:] = -1.0 / self.h
        ab[1, :] = 2.0 / self.h
        return scipy.linalg.cholesky_banded(ab)

    @cached_property
    def _splu(self):
        A = self.stiffness_csr().tocsc()
        return scipy.sparse.linalg.splu(A)

    def stiffness_csr(self):
        """Gradient matrix of u -> 0.5*grad_seminorm(u, 2) on dof vectors."""
        if self.kind == "interval":
            d = np.full(self.n, 2.0 / self.h)
            o = np.full(self.n - 1, -1.0 / self.h)
            return scipy.sparse.diags([o, d, o], [-1, 0, 1], format="csr")
        idx = -np.ones(self.mask.size, dtype=np.int64)
        idx[self.inside_flat] = np.arange(self.n_dof)
        idx = idx.reshape(self.shape)
        ny, nx = self.shape
        rows, cols, vals = [], [], []
        here = idx[self.mask]
        rows.append(here)
        cols.append(here)
        vals.append(np.full(self.n_dof, 4.0))
        for di, dj in ((0, 1), (1, 0)):
            a = idx[: ny - di, : nx - dj]
            b = idx[di:, dj:]
            ok = (a >= 0) & (b >= 0)
            ai, bi = a[ok], b[ok]
            rows.extend([ai, bi])
            cols.extend([bi, ai])
            vals.extend([np.full(ai.size, -1.0)] * 2)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        return scipy.sparse.csr_matrix(
            (vals, (rows, cols)), shape=(self.n_dof, self.n_dof)
        )

    def poisson_solve(self, rhs):
        """Apply the inverse 2-Laplacian (descent preconditioner).

        rhs in node layout (dense in 2-D); returns same layout.
        """
        if self.kind == "interval":
            return scipy.linalg.cho_solve_banded((self._banded_chol, False), rhs)
        flat = self.flatten_dof(rhs)
        return self.unflatten_dof(self._splu.solve(flat))


@dataclass(frozen=True)
class ProblemParams:
    """Exponents and spectral-affine parameters; enforces 1 < q < p."""

    p: float
    q: float
    alpha: float = 0.0
    beta: float = 0.0
    eps_reg: float = 1e-12

    def __post_init__(self):
        if not (1.0 < self.q < self.p):
            raise ValueError(f"need 1 < q < p; got q={self.q}, p={self.p}")
        for name in ("p", "q", "alpha", "beta"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.eps_reg > 0:
            raise ValueError("eps_reg must be positive")

    def with_(self, **kw):
        d = dict(p=self.p, q=self.q, alpha=self.alpha, beta=self.beta,
                 eps_reg=self.eps_reg)
        d.update(kw)
        return ProblemParams(**d)


class GridFunction:
    """Nodal values on a mesh; zero trace on the boundary by construction."""

    __slots__ = ("mesh", "values")

    def __init__(self, mesh, values, check=True):
        values = np.asarray(values, dtype=float)
        if values.shape != mesh.shape:
            raise ValueError(f"values shape {values.shape} != mesh {mesh.shape}")
        if check:
            if not np.all(np.isfinite(values)):
                raise ValueError("non-finite nodal values")
            if mesh.kind == "pixel2d" and np.any(values[~mesh.mask] != 0.0):
                values = values.copy()
                values[~mesh.mask] = 0.0
        self.mesh = mesh
        self.values = values

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, mesh.zeros(), check=False)

    @classmethod
    def from_callable(cls, mesh, f):
        xy = mesh.coords
        if mesh.kind == "interval":
            vals = np.asarray(f(xy[:, 0]), dtype=float)
        else:
            vals = mesh.unflatten_dof(np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float))
        return cls(mesh, vals)

    def copy(self):
        return GridFunction(self.mesh, self.values.copy(), check=False)

    def __neg__(self):
        return GridFunction(self.mesh, -self.values, check=False)

    def __add__(self, other):
        return GridFunction(self.mesh, self.values + other.values, check=False)

    def __sub__(self, other):
        return GridFunction(self.mesh, self.values - other.values, check=False)

    def __mul__(self, c):
        return GridFunction(self.mesh, self.values * float(c), check=False)

    __rmul__ = __mul__

    def dot(self, other):
        return float(np.vdot(self.values, other.values))


# --- raw-array functional engines (hot path; public ops wrap these) --------


def semi_pow(mesh, u, r, eps=0.0):
    """||grad u||_r^r (eps-regularized if eps > 0) for a node array."""
    if mesh.kind == "interval":
        return kernels.grad_pow_sum_1d(u, mesh.h, r, eps)
    return kernels.grad_pow_sum_2d(u, mesh.h, r, eps)


def semi_pow_grad(mesh, u, r, eps, coef, out):
    """out += coef * d/du ||grad u||_r^r; output re-masked in 2-D."""
    if mesh.kind == "interval":
        kernels.grad_pow_grad_1d(u, mesh.h, r, eps, coef, out)
    else:
        kernels.grad_pow_grad_2d(u, mesh.h, r, eps, coef, out)
        mesh.mask_inplace(out)
    return out


def mass_pow(mesh, u, r):
    """||u||_r^r."""
    return kernels.abs_pow_sum(u, r) * mesh.vol


def mass_pow_grad(mesh, u, r, coef, out):
    """out += coef * d/du ||u||_r^r (nodal, exact; no regularization needed)."""
    kernels.abs_pow_grad(u, r, coef * mesh.vol, out)
    return out


def dual_norm(mesh, g):
    """Mesh-weighted l2 dual norm of a nodal gradient vector."""
    return float(np.sqrt(np.vdot(g, g) / mesh.vol))


def dual_dot(mesh, a, b):
    return float(np.vdot(a, b) / mesh.vol)


def energy_raw(mesh, u, params, regularized=True):
    """E(u) = H/p + G/q on a node array; regularized form is the exact
    antiderivative of energy_grad_raw (used inside optimizers and the
    gradient check); the unregularized form is the reported energy."""
    eps = params.eps_reg if regularized else 0.0
    sp = semi_pow(mesh, u, params.p, eps)
    sq = semi_pow(mesh, u, params.q, eps)
    mp = mass_pow(mesh, u, params.p)
    mq = mass_pow(mesh, u, params.q)
    return (sp - params.alpha * mp) / params.p + (sq - params.beta * mq) / params.q


def energy_grad_raw(mesh, u, params, out=None):
    """Exact gradient of the regularized discrete energy (nodal vector)."""
    if out is None:
        out = np.zeros(mesh.shape)
    semi_pow_grad(mesh, u, params.p, params.eps_reg, 1.0 / params.p, out)
    semi_pow_grad(mesh, u, params.q, params.eps_reg, 1.0 / params.q, out)
    mass_pow_grad(mesh, u, params.p, -params.alpha / params.p, out)
    mass_pow_grad(mesh, u, params.q, -params.beta / params.q, out)
    return out


# --- public ops -------------------------------------------------------------


def _require_valid(u):
    if not np.all(np.isfinite(u.values)):
        raise ValueError("non-finite nodal values")


def grad_seminorm(u, r):
    """||grad u||_r^r, cellwise finite-difference gradient."""
    if not r > 1:
        raise ValueError(f"grad_seminorm needs r > 1, got {r}")
    _require_valid(u)
    return semi_pow(u.mesh, u.values, r)


def lr_norm(u, r):
    """||u||_r^r, nodal quadrature."""
    if not r > 0:
        raise ValueError(f"lr_norm needs r > 0, got {r}")
    _require_valid(u)
    return mass_pow(u.mesh, u.values, r)


def weak_residual(u, params):
    """Discrete gradient g of E at u: g . xi = <E'(u), xi> for all xi."""
    _require_valid(u)
    g = energy_grad_raw(u.mesh, u.values, params)
    return GridFunction(u.mesh, g, check=False)


# --- Newton-side operators --------------------------------------------------


def semi_hessian(mesh, u, r, eps):
    """Sparse Hessian of u -> ||grad u||_r^r (eps-regularized) on dof vectors."""
    if mesh.kind == "interval":
        g = np.empty(u.shape[0] + 1)
        g[0] = u[0]
        g[1:-1] = u[1:] - u[:-1]
        g[-1] = -u[-1]
        g /= mesh.h
        c = (g * g + eps) ** ((r - 4.0) / 2.0) * ((r - 1.0) * g * g + eps)
        c *= r / mesh.h
        diag = c[:-1] + c[1:]
        off = -c[1:-1]
        return scipy.sparse.diags([off, diag, off], [-1, 0, 1], format="csr")

    # 2-D: per-cell 3x3 blocks between base/east/south nodes
    ny, nx = mesh.shape
    idx = -np.ones(mesh.mask.size, dtype=np.int64)
    idx[mesh.inside_flat] = np.arange(mesh.n_dof)
    idx = idx.reshape(mesh.shape)
    pad_idx = np.full((ny + 2, nx + 2), -1, dtype=np.int64)
    pad_idx[1:-1, 1:-1] = idx
    P = np.zeros((ny + 2, nx + 2))
    P[1:-1, 1:-1] = u
    h = mesh.h
    gx = (P[:-1, 1:] - P[:-1, :-1]) / h
    gy = (P[1:, :-1] - P[:-1, :-1]) / h
    g2e = gx * gx + gy * gy + eps
    w = g2e ** ((r - 4.0) / 2.0)
    # dflux/dg = w * (g2e * I + (r-2) g g^T)
    jxx = w * (g2e + (r - 2.0) * gx * gx)
    jyy = w * (g2e + (r - 2.0) * gy * gy)
    jxy = w * (r - 2.0) * gx * gy
    # nodes per cell: b = pad(i, j), e = pad(i, j+1), s = pad(i+1, j)
    nb = pad_idx[:-1, :-1].ravel()
    ne = pad_idx[:-1, 1:].ravel()
    ns = pad_idx[1:, :-1].ravel()
    jxx, jyy, jxy = jxx.ravel(), jyy.ravel(), jxy.ravel()
    scale = r  # cell volume h^2 cancels the two 1/h factors of dg/du
    rows, cols, vals = [], [], []

    def put(a, b, v):
        ok = (a >= 0) & (b >= 0)
        rows.append(a[ok])
        cols.append(b[ok])
        vals.append(v[ok] * scale)

    # B^T J B with B rows (gx, gy) = ((e - b)/h, (s - b)/h)
    put(nb, nb, jxx + 2.0 * jxy + jyy)
    put(ne, ne, jxx)
    put(ns, ns, jyy)
    put(nb, ne, -(jxx + jxy))
    put(ne, nb, -(jxx + jxy))
    put(nb, ns, -(jyy + jxy))
    put(ns, nb, -(jyy + jxy))
    put(ne, ns, jxy)
    put(ns, ne, jxy)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return scipy.sparse.csr_matrix(
        (vals, (rows, cols)), shape=(mesh.n_dof, mesh.n_dof)
    )


def mass_hessian_diag(mesh, u, r, eps):
    """Diagonal Hessian of u -> ||u||_r^r, safeguarded near u = 0."""
    flat = mesh.flatten_dof(u)
    return r * (r - 1.0) * (flat * flat + eps) ** ((r - 2.0) / 2.0) * mesh.vol


def energy_hessian(mesh, u, params):
    """Sparse Hessian of the regularized discrete energy on dof vectors."""
    eps = params.eps_reg
    Hm = semi_hessian(mesh, u, params.p, eps) / params.p
    Hm = Hm + semi_hessian(mesh, u, params.q, eps) / params.q
    d = -params.alpha / params.p * mass_hessian_diag(mesh, u, params.p, eps)
    d += -params.beta / params.q * mass_hessian_diag(mesh, u, params.q, eps)
    return Hm + scipy.sparse.diags(d)


# --- serialization ----------------------------------------------------------


def save_gridfunction(path, gf, meta=None):
    """CSV rows (index, coords..., value) under a '#'-prefixed JSON header."""
    mesh = gf.mesh
    header = {
        "kind": mesh.kind,
        "h": mesh.h,
    }
    if mesh.kind == "interval":
        header["length"] = mesh.domain.length
        header["n"] = mesh.n
    else:
        header["shape"] = list(mesh.shape)
        header["origin"] = list(mesh.domain.origin)
    if meta:
        header["meta"] = meta
    coords = mesh.coords
    vals = mesh.flatten_dof(gf.values)
    idx = mesh.inside_flat if mesh.kind == "pixel2d" else np.arange(mesh.n_dof)
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(fh)
        cols = ["index", "x", "value"] if mesh.kind == "interval" else [
            "index", "x", "y", "value"]
        w.writerow(cols)
        for i in range(vals.size):
            w.writerow([int(idx[i]), *(repr(float(c)) for c in coords[i]),
                        repr(float(vals[i]))])


def load_gridfunction(path):
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError("missing JSON metadata header")
        header = json.loads(first[1:].strip())
        rows = [r for r in csv.reader(fh) if r]
    body = rows[1:]
    if header["kind"] == "interval":
        dom = interval(header["length"])
        mesh = dom.mesh(header["n"])
        vals = np.zeros(mesh.n)
        for row in body:
            vals[int(row[0])] = float(row[-1])
    else:
        shape = tuple(header["shape"])
        mask = np.zeros(shape, dtype=bool)
        flat_idx = np.array([int(row[0]) for row in body], dtype=np.int64)
        mask.ravel()[flat_idx] = True
        dom = pixel2d(mask, header["h"], origin=tuple(header.get("origin", (0, 0))))
        mesh = dom.mesh()
        vals = np.zeros(mask.size)
        for row in body:
            vals[int(row[0])] = float(row[-1])
        vals = vals.reshape(shape)
    return GridFunction(mesh, vals), header
