import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kslab.errors import InvalidConfigError
from kslab.grid import (
    Grid,
    ScalarField,
    VectorField,
    apply_neumann,
    apply_noslip,
    integrate,
    norm,
    read_snapshot,
    save_fields,
    write_snapshot,
)


def test_grid_geometry():
    g = Grid((32, 16), (2.0, 1.0))
    assert g.dim == 2
    assert g.h == (1 / 16, 1 / 16)
    assert g.volume_element == 1 / 256
    assert g.measure == 2.0
    assert g.padded_shape == (34, 18)
    assert g.face_shape(0) == (33, 18)
    assert g.face_shape(1) == (34, 17)
    np.testing.assert_allclose(g.centers(1), (np.arange(16) + 0.5) / 16)


@pytest.mark.parametrize("cells,extents", [((3, 8), (1, 1)), ((8,), (1,)), ((8, 8), (1, 0)), ((4,) * 4, (1,) * 4)])
def test_grid_rejects_bad_shapes(cells, extents):
    with pytest.raises(InvalidConfigError):
        Grid(cells, extents)


# -- integrate / norm --------------------------------------------------------------------------


def test_integrate_constant_unit_box():
    g = Grid((32, 32), (1.0, 1.0))
    assert integrate(ScalarField.from_interior(g, np.ones(g.cells))) == 1.0


def test_integrate_half_indicator():
    g = Grid((32, 32), (1.0, 1.0))
    v = np.zeros(g.cells)
    v[:16] = 2.0
    assert integrate(ScalarField.from_interior(g, v)) == 1.0


def naive_sum(v, dv, power=1.0):
    total = 0.0
    for x in v.ravel():
        total += abs(x) ** power
    return total * dv


@pytest.mark.parametrize("cells,extents", [((16, 24), (1.0, 2.0)), ((8, 6, 10), (0.5, 1.0, 1.5))])
def test_integrate_and_norms_match_naive_loop(cells, extents):
    rng = np.random.default_rng(7)
    g = Grid(cells, extents)
    v = rng.normal(size=cells)
    f = ScalarField.from_interior(g, v)
    dv = g.volume_element
    ref_int = sum(float(x) for x in v.ravel()) * dv
    assert integrate(f) == pytest.approx(ref_int, rel=1e-13, abs=1e-13)
    assert norm(f, "L1") == pytest.approx(naive_sum(v, dv), rel=1e-13)
    assert norm(f, "L2") == pytest.approx(math.sqrt(naive_sum(v, dv, 2)), rel=1e-13)
    assert norm(f, "Lq", 4) == pytest.approx(naive_sum(v, dv, 4) ** 0.25, rel=1e-13)
    assert norm(f, "Linf") == max(abs(float(x)) for x in v.ravel())


def test_norms_of_constant_two():
    g = Grid((16, 16), (1.0, 1.0))
    f = ScalarField.from_interior(g, np.full(g.cells, 2.0))
    assert norm(f, "L1") == pytest.approx(2.0, rel=1e-15)
    assert norm(f, "L2") == pytest.approx(2.0, rel=1e-15)
    assert norm(f, "Linf") == 2.0


def test_spike_l1_is_volume_element():
    g = Grid((64, 64), (1.0, 1.0))
    v = np.zeros(g.cells)
    v[10, 20] = 1.0
    assert norm(ScalarField.from_interior(g, v), "L1") == g.volume_element


def test_norm_rejects_bad_q():
    g = Grid((8, 8), (1.0, 1.0))
    with pytest.raises(InvalidConfigError):
        norm(ScalarField.zeros(g), "Lq", 0.5)
    with pytest.raises(InvalidConfigError):
        norm(ScalarField.zeros(g), "H1")


# -- boundary conditions ------------------------------------------------------------------------


def test_neumann_mirrors_interior():
    g = Grid((4, 5), (1.0, 1.0))
    v = np.arange(20.0).reshape(4, 5)
    f = ScalarField.from_interior(g, v)
    np.testing.assert_array_equal(f.data[0, 1:-1], v[0])
    np.testing.assert_array_equal(f.data[-1, 1:-1], v[-1])
    np.testing.assert_array_equal(f.data[1:-1, 0], v[:, 0])
    np.testing.assert_array_equal(f.data[1:-1, -1], v[:, -1])


def test_neumann_quadratic_wall_flux_zero():
    # 1D four-cell example embedded in 2D: x^2 at centres 1/8, 3/8, 5/8, 7/8
    g = Grid((4, 4), (1.0, 1.0))
    x = g.centers(0)
    f = ScalarField.from_interior(g, np.repeat((x**2)[:, None], 4, axis=1))
    wall_flux = (f.data[1, 1:-1] - f.data[0, 1:-1]) / g.h[0]
    np.testing.assert_array_equal(wall_flux, 0.0)


def test_neumann_constant_unchanged_and_idempotent():
    g = Grid((6, 7, 5), (1.0, 1.0, 1.0))
    f = ScalarField.from_interior(g, np.full(g.cells, 3.5))
    np.testing.assert_array_equal(f.data, 3.5)
    rng = np.random.default_rng(0)
    f = ScalarField.from_interior(g, rng.random(g.cells))
    before = f.data.copy()
    apply_neumann(f)
    np.testing.assert_array_equal(f.data, before)


def random_velocity(g, seed=0):
    rng = np.random.default_rng(seed)
    return VectorField(g, [rng.normal(size=g.face_shape(k)) for k in range(g.dim)])


@pytest.mark.parametrize("cells", [(8, 6), (5, 6, 7)])
def test_noslip_zeroes_normal_walls_and_is_idempotent(cells):
    g = Grid(cells, (1.0,) * len(cells))
    u = apply_noslip(random_velocity(g))
    for k in range(g.dim):
        comp = np.moveaxis(u.comps[k], k, 0)
        np.testing.assert_array_equal(comp[0], 0.0)
        np.testing.assert_array_equal(comp[-1], 0.0)
    before = [c.copy() for c in u.comps]
    apply_noslip(u)
    for a, b in zip(before, u.comps):
        np.testing.assert_array_equal(a, b)


def test_noslip_uniform_tangential_reflection():
    g = Grid((6, 6), (1.0, 1.0))
    u = VectorField.zeros(g)
    u.comps[0][:] = 1.0
    apply_noslip(u)
    # x-velocity is tangential on the y walls: ghosts are the negated first interior row
    np.testing.assert_array_equal(u.comps[0][1:-1, 0], -1.0)
    np.testing.assert_array_equal(u.comps[0][1:-1, -1], -1.0)


def test_noslip_poiseuille_wall_velocity_zero():
    g = Grid((8, 8), (1.0, 1.0))
    y = g.centers(1)
    u = VectorField.zeros(g)
    u.comps[0][:, 1:-1] = y * (1 - y)
    apply_noslip(u)
    wall_lo = 0.5 * (u.comps[0][1:-1, 0] + u.comps[0][1:-1, 1])
    wall_hi = 0.5 * (u.comps[0][1:-1, -1] + u.comps[0][1:-1, -2])
    assert np.max(np.abs(wall_lo)) <= 1e-14
    assert np.max(np.abs(wall_hi)) <= 1e-14


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (5, 6), elements=st.floats(-1e6, 1e6)))
def test_public_ops_preserve_finiteness(v):
    g = Grid((5, 6), (1.0, 2.0))
    f = ScalarField.from_interior(g, v)
    assert np.all(np.isfinite(f.data))
    assert math.isfinite(integrate(f)) and math.isfinite(norm(f, "L2"))


# -- snapshots ---------------------------------------------------------------------------------------


def test_snapshot_bit_exact_round_trip(tmp_path):
    g = Grid((7, 5, 4), (1.0, 0.5, 2.0))
    rng = np.random.default_rng(3)
    v = rng.normal(size=g.cells) * 10.0 ** rng.integers(-300, 300, size=g.cells)
    path = write_snapshot(tmp_path / "n1.snap", v, field="n1", grid=g, time=1.25)
    header, back = read_snapshot(path)
    assert back.tobytes() == np.ascontiguousarray(v).tobytes()
    assert header["field"] == "n1" and header["cells"] == [7, 5, 4] and header["time"] == 1.25
    assert header["extents"] == [1.0, 0.5, 2.0]


def test_save_fields_writes_every_component(tmp_path):
    g = Grid((6, 6), (1.0, 1.0))
    f = ScalarField.from_interior(g, np.ones(g.cells))
    u = apply_noslip(random_velocity(g, 1))
    save_fields(tmp_path, g, 0.0, {"c": f}, u)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["c.snap", "u0.snap", "u1.snap"]
    _, u0 = read_snapshot(tmp_path / "u0.snap")
    assert u0.tobytes() == np.ascontiguousarray(u.inner(0)).tobytes()
