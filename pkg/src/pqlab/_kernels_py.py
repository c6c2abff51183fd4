"""NumPy backend for the grid kernels.

These six reductions are the inner loop of every flow, descent and Newton
polish in the package, so they exist twice: here as the portable reference
and in ``_kernels_cy`` as a fused compiled version.  ``pqlab.kernels``
picks one at import time.

Conventions shared by both backends:

* 1-D arrays hold interior nodal values on a uniform mesh with spacing h;
  the boundary values are an implicit zero on both ends.
* 2-D arrays are dense over the bounding box of a pixel mask, zero outside
  the mask (callers enforce that and mask gradient outputs afterwards).
* ``eps`` regularizes the gradient magnitude, (|g|^2 + eps)^(r/2); eps = 0
  gives the raw seminorm.  The flux kernels are the exact gradients of the
  eps-regularized sums.
"""

import numpy as np


def grad_pow_sum_1d(u, h, r, eps=0.0):
    """sum over cells of (|Du|^2 + eps)^(r/2) * h with zero boundary."""
    g = np.empty(u.shape[0] + 1)
    g[0] = u[0]
    np.subtract(u[1:], u[:-1], out=g[1:-1])
    g[-1] = -u[-1]
    g /= h
    if eps:
        s = (g * g + eps) ** (r / 2.0)
    else:
        s = np.abs(g) ** r
    return float(s.sum() * h)


def grad_pow_grad_1d(u, h, r, eps, coef, out):
    """out += coef * d/du of grad_pow_sum_1d(u, h, r, eps)."""
    g = np.empty(u.shape[0] + 1)
    g[0] = u[0]
    np.subtract(u[1:], u[:-1], out=g[1:-1])
    g[-1] = -u[-1]
    g /= h
    flux = (g * g + eps) ** ((r - 2.0) / 2.0)
    flux *= g
    out += (coef * r) * (flux[:-1] - flux[1:])
    return out


def _cell_grads_2d(u, h):
    # forward differences on the zero-padded array; cell (i, j) of the padded
    # grid owns gx, gy based at padded pixel (i, j), i = 0..ny, j = 0..nx
    p = np.pad(u, 1)
    gx = (p[:-1, 1:] - p[:-1, :-1]) / h
    gy = (p[1:, :-1] - p[:-1, :-1]) / h
    return gx, gy


def grad_pow_sum_2d(u, h, r, eps=0.0):
    """sum over cells of (gx^2 + gy^2 + eps)^(r/2) * h^2, zero extension."""
    gx, gy = _cell_grads_2d(u, h)
    s = (gx * gx + gy * gy + eps) ** (r / 2.0)
    return float(s.sum() * h * h)


def grad_pow_grad_2d(u, h, r, eps, coef, out):
    """out += coef * d/du of grad_pow_sum_2d(u, h, r, eps).

    Caller must re-mask the output (nodes outside the mask are not dofs).
    """
    gx, gy = _cell_grads_2d(u, h)
    w = (gx * gx + gy * gy + eps) ** ((r - 2.0) / 2.0)
    fx = w * gx
    fy = w * gy
    c = coef * r * h
    out += c * (fx[1:, :-1] - fx[1:, 1:] + fy[:-1, 1:] - fy[1:, 1:])
    return out


def abs_pow_sum(u, r):
    """sum of |u_i|^r over all entries (caller multiplies cell volume)."""
    return float((np.abs(u) ** r).sum())


def abs_pow_grad(u, r, coef, out):
    """out += coef * d/du of abs_pow_sum = coef * r * sign(u)|u|^(r-1)."""
    out += (coef * r) * np.sign(u) * np.abs(u) ** (r - 1.0)
    return out
