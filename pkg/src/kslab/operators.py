"""Finite-volume operators on the MAC grid and cosine-transform solvers.

All fluxes live on faces and every boundary face carries zero flux, so each
divergence-form operator sums to zero over the box up to round-off.
"""

from __future__ import annotations

import functools

import numpy as np
import scipy.fft as sfft

from kslab.errors import KSLabError
from kslab.grid import Grid, ScalarField, VectorField, apply_neumann


def _shift(dim, axis, sl):
    return tuple(sl if k == axis else slice(1, -1) for k in range(dim))


def laplacian(f: ScalarField) -> ScalarField:
    """Second-order ``2*dim + 1`` point Laplacian; expects Neumann ghosts."""
    g = f.grid
    d = f.data
    out = np.zeros(g.padded_shape)
    acc = out[g.interior]
    for k, h in enumerate(g.h):
        acc += (d[_shift(g.dim, k, slice(2, None))] - 2.0 * d[g.interior] + d[_shift(g.dim, k, slice(None, -2))]) / (h * h)
    return apply_neumann(ScalarField(g, out))


def grad_faces(c: ScalarField) -> VectorField:
    """Face-normal differences of adjacent cell centers; wall faces are zero."""
    g = c.grid
    comps = []
    for k, h in enumerate(g.h):
        comp = np.diff(c.data, axis=k) / h
        wall = [slice(None)] * g.dim
        wall[k] = 0
        comp[tuple(wall)] = 0.0
        wall[k] = -1
        comp[tuple(wall)] = 0.0
        comps.append(comp)
    return VectorField(g, comps)


def divergence(u: VectorField) -> ScalarField:
    """Cell-centered divergence of face-normal components."""
    g = u.grid
    out = np.zeros(g.padded_shape)
    acc = out[g.interior]
    for k, h in enumerate(g.h):
        acc += np.diff(u.inner(k), axis=k) / h
    return apply_neumann(ScalarField(g, out))


def _flux_divergence(grid: Grid, fluxes) -> ScalarField:
    """``-div(F)`` for interior-row face fluxes whose wall entries are zero."""
    out = np.zeros(grid.padded_shape)
    acc = out[grid.interior]
    for k, h in enumerate(grid.h):
        acc -= np.diff(fluxes[k], axis=k) / h
    return apply_neumann(ScalarField(grid, out))


def _upwind(data, dim, axis, velocity):
    """Donor-cell value on faces of axis ``axis`` selected by the sign of ``velocity``."""
    left = data[_shift(dim, axis, slice(None, -1))]
    right = data[_shift(dim, axis, slice(1, None))]
    return np.where(velocity > 0.0, left, right)


def _zero_walls(flux, dim, axis):
    flux[tuple(0 if k == axis else slice(None) for k in range(dim))] = 0.0
    flux[tuple(-1 if k == axis else slice(None) for k in range(dim))] = 0.0
    return flux


def chemotaxis_div(n: ScalarField, c: ScalarField, chi: float) -> ScalarField:
    """``-chi * div(n grad c)`` with donor-cell ``n`` and zero wall flux."""
    g = n.grid
    if chi == 0.0:
        return ScalarField.zeros(g)
    grad = grad_faces(c)
    fluxes = []
    for k in range(g.dim):
        gk = grad.inner(k)
        flux = chi * _upwind(n.data, g.dim, k, gk) * gk
        fluxes.append(_zero_walls(flux, g.dim, k))
    return _flux_divergence(g, fluxes)


def advect(u: VectorField, f: ScalarField) -> ScalarField:
    """``-div(u f)`` in donor-cell form; equals ``-u . grad f`` for div-free ``u``."""
    g = f.grid
    fluxes = []
    for k in range(g.dim):
        uk = u.inner(k)
        flux = uk * _upwind(f.data, g.dim, k, uk)
        fluxes.append(_zero_walls(flux, g.dim, k))
    return _flux_divergence(g, fluxes)


# -- transform solvers -----------------------------------------------------------


@functools.lru_cache(maxsize=32)
def neumann_eigenvalues(grid: Grid) -> np.ndarray:
    """Eigenvalues of the discrete Neumann Laplacian in the DCT-II basis."""
    lam = np.zeros(grid.cells)
    for k, (n, h) in enumerate(zip(grid.cells, grid.h)):
        shape = [1] * grid.dim
        shape[k] = n
        lam = lam + ((2.0 * np.cos(np.pi * np.arange(n) / n) - 2.0) / (h * h)).reshape(shape)
    lam.setflags(write=False)
    return lam


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise KSLabError(f"{what} contains non-finite values")


def poisson_neumann(rhs: ScalarField) -> ScalarField:
    """Zero-mean ``psi`` with ``laplacian(psi) = rhs - mean(rhs)``.

    Exact discrete solve: the Neumann Laplacian is diagonal in the DCT-II basis.
    """
    g = rhs.grid
    r = rhs.interior
    _check_finite(r, "poisson right-hand side")
    lam = neumann_eigenvalues(g)
    R = sfft.dctn(r, type=2, norm="ortho")
    R[(0,) * g.dim] = 0.0
    denom = lam.copy()
    denom[(0,) * g.dim] = 1.0
    psi = sfft.idctn(R / denom, type=2, norm="ortho")
    return ScalarField.from_interior(g, psi)


def solve_diffusion(rhs: ScalarField, coef: float) -> ScalarField:
    """Backward-Euler diffusion solve ``(I - coef * laplacian) x = rhs`` with Neumann walls."""
    g = rhs.grid
    lam = neumann_eigenvalues(g)
    R = sfft.dctn(rhs.interior, type=2, norm="ortho")
    x = sfft.idctn(R / (1.0 - coef * lam), type=2, norm="ortho")
    return ScalarField.from_interior(g, x)

