"""Forced Stokes flow with no-slip walls via pressure projection.

One step computes a provisional velocity from the viscous term and the
buoyancy force, then removes its gradient part with a Neumann pressure solve.
Because the MAC divergence of the MAC gradient is exactly the Neumann
Laplacian, the projected field is divergence free to round-off.

Pressure sign: we take ``u_new = u* - dt grad P``, i.e. the opposite of the
``+grad P`` convention; only ``P`` changes sign, ``u`` does not.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.fft as sfft

from kslab.errors import InvalidConfigError, StepRejectedError
from kslab.grid import Grid, ScalarField, VectorField, apply_noslip, face_inner
from kslab.operators import divergence, grad_faces, poisson_neumann
from kslab.params import LinearPotential, ModelParams, TabulatedPotential


@dataclass
class StokesStepResult:
    u_new: VectorField
    P: ScalarField
    div_residual: float


def potential_gradient(grid: Grid, p: ModelParams) -> VectorField:
    """Face-centered gradient of the potential; wall faces are zero."""
    pot = p.potential
    if isinstance(pot, LinearPotential):
        g = pot.gradient(grid.dim)
        out = VectorField.zeros(grid)
        for k in range(grid.dim):
            out.comps[k][face_inner(grid.dim, k)] = g[k]
        return apply_noslip(out)
    if isinstance(pot, TabulatedPotential):
        if pot.values.shape != grid.cells:
            raise InvalidConfigError(
                f"tabulated potential has shape {pot.values.shape}, grid has {grid.cells}", key="potential"
            )
        return grad_faces(ScalarField.from_interior(grid, pot.values))
    raise InvalidConfigError(f"unknown potential {pot!r}", key="potential")


def buoyancy(n1: ScalarField, n2: ScalarField, p: ModelParams, grad_phi: VectorField = None) -> VectorField:
    """Face force ``(gamma n1 + delta n2) grad phi`` with the density averaged to faces."""
    g = n1.grid
    if grad_phi is None:
        grad_phi = potential_gradient(g, p)
    w = p.gamma * n1.data + p.delta * n2.data
    out = VectorField.zeros(g)
    for k in range(g.dim):
        lo = tuple(slice(None, -1) if j == k else slice(1, -1) for j in range(g.dim))
        hi = tuple(slice(1, None) if j == k else slice(1, -1) for j in range(g.dim))
        out.comps[k][face_inner(g.dim, k)] = 0.5 * (w[lo] + w[hi]) * grad_phi.inner(k)
    return apply_noslip(out)


def vector_laplacian(u: VectorField) -> VectorField:
    """Componentwise Laplacian on interior faces; expects no-slip ghosts."""
    g = u.grid
    out = VectorField.zeros(g)
    # faces strictly inside the box along their own axis, interior rows elsewhere
    inner = (slice(1, -1),) * g.dim
    for k, comp in enumerate(u.comps):
        acc = out.comps[k][inner]
        centre = comp[inner]
        for j, h in enumerate(g.h):
            plus = tuple(slice(2, None) if i == j else slice(1, -1) for i in range(g.dim))
            minus = tuple(slice(None, -2) if i == j else slice(1, -1) for i in range(g.dim))
            acc += (comp[plus] - 2.0 * centre + comp[minus]) / (h * h)
    return out


@functools.lru_cache(maxsize=32)
def _velocity_eigenvalues(grid: Grid, axis: int) -> np.ndarray:
    # own axis: Dirichlet nodes 1..N-1 (DST-I); other axes: reflected ghosts (DST-II)
    shape_total = tuple(n - 1 if k == axis else n for k, n in enumerate(grid.cells))
    lam = np.zeros(shape_total)
    for j, (n, h) in enumerate(zip(grid.cells, grid.h)):
        m = np.arange(1, n) if j == axis else np.arange(1, n + 1)
        shape = [1] * grid.dim
        shape[j] = m.size
        lam = lam + ((2.0 * np.cos(np.pi * m / n) - 2.0) / (h * h)).reshape(shape)
    lam.setflags(write=False)
    return lam


def _transform(x, axis, inverse=False):
    transform = sfft.idst if inverse else sfft.dst
    for j in range(x.ndim):
        x = transform(x, type=1 if j == axis else 2, axis=j, norm="ortho")
    return x


def solve_viscous(u: VectorField, coef: float) -> VectorField:
    """Backward-Euler viscous solve ``(I - coef * Laplacian) x = u`` with no-slip walls."""
    g = u.grid
    out = VectorField.zeros(g)
    inner = (slice(1, -1),) * g.dim
    for k, comp in enumerate(u.comps):
        lam = _velocity_eigenvalues(g, k)
        X = _transform(comp[inner], k) / (1.0 - coef * lam)
        out.comps[k][inner] = _transform(X, k, inverse=True)
    return apply_noslip(out)


def project(u: VectorField, dt: float = 1.0) -> Tuple[VectorField, ScalarField]:
    """Discrete Helmholtz projection ``u - dt grad P`` with ``laplacian(P) = div(u) / dt``."""
    g = u.grid
    rhs = divergence(u)
    rhs.data /= dt
    P = poisson_neumann(rhs)
    grad = grad_faces(P)
    out = VectorField(g, [a - dt * b for a, b in zip(u.comps, grad.comps)])
    return apply_noslip(out), P


def viscous_dt_bound(grid: Grid) -> float:
    return grid.h_min**2 / (2.0 * grid.dim)


def stokes_step(u: VectorField, force: VectorField, dt: float, viscous: str = "explicit") -> StokesStepResult:
    """Advance the forced Stokes equation by ``dt``.

    ``viscous="explicit"`` is forward Euler and rejects ``dt`` above
    ``h_min^2 / (2 dim)``. ``viscous="implicit"`` diffuses with backward Euler
    (unconditionally stable) and then adds the force before projecting, so a
    pure gradient force is absorbed entirely by the pressure.
    """
    if not dt > 0.0:
        raise InvalidConfigError(f"dt must be positive, got {dt}", key="dt")
    g = u.grid
    apply_noslip(u)
    if viscous == "explicit":
        bound = viscous_dt_bound(g)
        if dt > bound * (1.0 + 1e-12):
            raise StepRejectedError(f"dt={dt:.6g} exceeds explicit viscous bound {bound:.6g}", bound)
        lap = vector_laplacian(u)
        ustar = VectorField(g, [a + dt * (b + f) for a, b, f in zip(u.comps, lap.comps, force.comps)])
    elif viscous == "implicit":
        diffused = solve_viscous(u, dt)
        ustar = VectorField(g, [a + dt * f for a, f in zip(diffused.comps, force.comps)])
    else:
        raise InvalidConfigError(f"unknown viscous treatment {viscous!r}", key="scheme")
    apply_noslip(ustar)
    u_new, P = project(ustar, dt)
    residual = float(np.max(np.abs(divergence(u_new).interior)))
    return StokesStepResult(u_new=u_new, P=P, div_residual=residual)


def stokes_decay_rate(grid: Grid) -> float:
    """Smallest Dirichlet Laplacian eigenvalue of the box, ``pi^2 * sum(1 / L_i^2)``."""
    return math.pi**2 * sum(1.0 / L**2 for L in grid.extents)
