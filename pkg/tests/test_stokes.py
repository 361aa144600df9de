import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kslab.errors import InvalidConfigError, StepRejectedError
from kslab.grid import Grid, ScalarField, VectorField, apply_noslip
from kslab.operators import divergence, grad_faces
from kslab.params import LinearPotential, ModelParams, TabulatedPotential
from kslab.stokes import (
    buoyancy,
    potential_gradient,
    project,
    solve_viscous,
    stokes_decay_rate,
    stokes_step,
    vector_laplacian,
    viscous_dt_bound,
)


def params(dim=2, **kw):
    base = dict(chi1=0.1, chi2=0.1, mu1=5.0, mu2=5.0, a1=0.5, a2=0.5, alpha=1.0, beta=1.0, gamma=0.1, delta=0.1,
                extents=(1.0,) * dim)
    base.update(kw)
    return ModelParams(**base)


def random_u(g, seed=0):
    rng = np.random.default_rng(seed)
    return apply_noslip(VectorField(g, [rng.normal(size=g.face_shape(k)) for k in range(g.dim)]))


def l2(u):
    dv = u.grid.volume_element
    return math.sqrt(sum(float(np.sum(u.inner(k) ** 2)) for k in range(u.grid.dim)) * dv)


def div_max(u):
    return float(np.max(np.abs(divergence(u).interior)))


# -- buoyancy -----------------------------------------------------------------------------------


def test_buoyancy_uniform_for_constant_densities():
    p = params(dim=3, gamma=0.3, delta=0.2)
    g = Grid((6, 5, 4), p.extents)
    one = ScalarField.from_interior(g, np.ones(g.cells))
    f = buoyancy(one, one, p)
    np.testing.assert_allclose(f.inner(2)[:, :, 1:-1], -0.5, rtol=1e-15)
    assert np.all(f.inner(0) == 0.0) and np.all(f.inner(1) == 0.0)


def test_buoyancy_bound_for_random_densities():
    p = params(gamma=0.4, delta=1.7, potential=LinearPotential(axis=0, strength=2.5))
    g = Grid((16, 12), p.extents)
    rng = np.random.default_rng(1)
    n1 = ScalarField.from_interior(g, rng.random(g.cells))
    n2 = ScalarField.from_interior(g, 3 * rng.random(g.cells))
    f = buoyancy(n1, n2, p)
    bound = (0.4 * np.max(n1.interior) + 1.7 * np.max(n2.interior)) * 2.5
    assert f.max_abs() <= bound * (1 + 1e-15)


def test_tabulated_potential_matches_linear():
    p_lin = params()
    g = Grid((10, 10), p_lin.extents)
    phi = -g.mesh()[1]
    p_tab = params(potential=TabulatedPotential(phi))
    a, b = potential_gradient(g, p_lin), potential_gradient(g, p_tab)
    for k in range(2):
        np.testing.assert_allclose(a.inner(k), b.inner(k), atol=1e-12)


def test_tabulated_potential_shape_mismatch():
    p = params(potential=TabulatedPotential(np.zeros((4, 4))))
    with pytest.raises(InvalidConfigError):
        potential_gradient(Grid((8, 8), p.extents), p)


# -- stokes step --------------------------------------------------------------------------------


@pytest.mark.parametrize("viscous", ["explicit", "implicit"])
def test_zero_in_zero_out(viscous):
    g = Grid((16, 16), (1.0, 1.0))
    res = stokes_step(VectorField.zeros(g), VectorField.zeros(g), 1e-4, viscous)
    assert res.u_new.max_abs() == 0.0 and np.all(res.P.interior == 0.0)


@pytest.mark.parametrize("viscous", ["explicit", "implicit"])
def test_curl_free_buoyancy_is_absorbed(viscous):
    p = params(gamma=1.0, delta=1.0)
    g = Grid((32, 32), p.extents)
    one = ScalarField.from_interior(g, np.ones(g.cells))
    force = buoyancy(one, one, p)
    dt = 0.9 * viscous_dt_bound(g)
    res = stokes_step(VectorField.zeros(g), force, dt, viscous)
    assert res.u_new.max_abs() <= 1e-10 * force.max_abs() * dt
    # the pressure carries the potential: grad P = force
    gp = grad_faces(res.P)
    np.testing.assert_allclose(gp.inner(1)[:, 1:-1], force.inner(1)[:, 1:-1], atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["explicit", "implicit"]))
def test_gradient_force_produces_no_flow(seed, viscous):
    g = Grid((12, 10), (1.0, 1.0))
    psi = ScalarField.from_interior(g, np.random.default_rng(seed).normal(size=g.cells))
    force = grad_faces(psi)
    dt = viscous_dt_bound(g)
    res = stokes_step(VectorField.zeros(g), force, dt, viscous)
    assert res.u_new.max_abs() <= 1e-10 * force.max_abs() * dt


@pytest.mark.parametrize("cells", [(24, 20), (10, 8, 12)])
@pytest.mark.parametrize("viscous", ["explicit", "implicit"])
def test_projection_post_conditions(cells, viscous):
    g = Grid(cells, (1.0,) * len(cells))
    res = stokes_step(random_u(g, 1), random_u(g, 2), 0.5 * viscous_dt_bound(g), viscous)
    assert res.div_residual <= 1e-10 * max(1.0, res.u_new.max_abs())
    assert res.div_residual == div_max(res.u_new)
    assert abs(res.P.interior.mean()) <= 1e-12 * max(1.0, np.max(np.abs(res.P.interior)))
    for k in range(g.dim):
        comp = np.moveaxis(res.u_new.comps[k], k, 0)
        assert np.all(comp[0] == 0.0) and np.all(comp[-1] == 0.0)


def test_projection_idempotent():
    g = Grid((20, 24), (1.0, 1.5))
    once, _ = project(random_u(g, 3))
    twice, _ = project(once)
    diff = max(float(np.max(np.abs(a - b))) for a, b in zip(once.comps, twice.comps))
    assert diff <= 1e-12 * once.max_abs()


def test_projection_is_orthogonal():
    g = Grid((16, 16), (1.0, 1.0))
    u = random_u(g, 4)
    w, _ = project(u)
    assert l2(w) <= l2(u)


def test_explicit_rejects_large_dt():
    g = Grid((16, 16), (1.0, 1.0))
    bound = viscous_dt_bound(g)
    with pytest.raises(StepRejectedError) as err:
        stokes_step(VectorField.zeros(g), VectorField.zeros(g), 1.5 * bound, "explicit")
    assert err.value.dt_max == bound


def test_bad_dt_and_mode():
    g = Grid((8, 8), (1.0, 1.0))
    with pytest.raises(InvalidConfigError):
        stokes_step(VectorField.zeros(g), VectorField.zeros(g), 0.0)
    with pytest.raises(InvalidConfigError):
        stokes_step(VectorField.zeros(g), VectorField.zeros(g), 1e-4, "crank")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 1.0), st.sampled_from(["explicit", "implicit"]))
def test_energy_dissipation_without_force(seed, frac, viscous):
    g = Grid((12, 12), (1.0, 1.0))
    u, _ = project(random_u(g, seed))
    dt = frac * viscous_dt_bound(g) * (1.0 if viscous == "explicit" else 100.0)
    res = stokes_step(u, VectorField.zeros(g), dt, viscous)
    assert l2(res.u_new) <= l2(u) * (1 + 1e-14)


def test_viscous_solve_residual():
    g = Grid((14, 10), (1.0, 1.0))
    rhs = random_u(g, 5)
    coef = 3e-3
    x = solve_viscous(rhs, coef)
    lap = vector_laplacian(x)
    inner = (slice(1, -1),) * 2
    for k in range(2):
        res = x.comps[k][inner] - coef * lap.comps[k][inner] - rhs.comps[k][inner]
        assert np.max(np.abs(res)) <= 1e-12


def test_unforced_flow_decays_within_decay_scale():
    g = Grid((24, 24), (1.0, 1.0))
    u, _ = project(random_u(g, 6))
    peak = l2(u)
    horizon = math.log(1e6) / stokes_decay_rate(g)
    dt = horizon / 400
    t = 0.0
    while t < horizon - 1e-12:
        u = stokes_step(u, VectorField.zeros(g), dt, "implicit").u_new
        t += dt
    assert l2(u) <= 1e-6 * peak


def test_decay_rate_examples():
    assert stokes_decay_rate(Grid((8, 8), (1.0, 1.0))) == pytest.approx(2 * math.pi**2, rel=1e-15)
    assert stokes_decay_rate(Grid((8, 8), (1.0, 1.0))) == pytest.approx(19.739, abs=1e-3)
    assert stokes_decay_rate(Grid((4, 4, 4), (1.0, 1.0, 1.0))) == pytest.approx(29.608, abs=1e-3)
    assert stokes_decay_rate(Grid((8, 4), (2.0, 1.0))) == pytest.approx(12.337, abs=1e-3)
