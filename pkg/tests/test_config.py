import dataclasses
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kslab.config import (
    apply_overrides,
    build_config,
    load_config,
    parse_config,
    parse_sweep,
    serialize_config,
    sweep_points,
)
from kslab.errors import InvalidConfigError
from kslab.grid import Grid, write_snapshot
from kslab.params import LinearPotential, TabulatedPotential
from kslab.stepper import RunConfig

BASE = textwrap.dedent(
    """
    [params]
    chi1 = 0.1
    chi2 = 0.1
    mu1 = 5
    mu2 = 5
    a1 = 0.5
    a2 = 0.5
    alpha = 1
    beta = 1
    gamma = 0.1
    delta = 0.1
    """
)


def test_minimal_config_uses_defaults():
    cfg = parse_config(BASE)
    defaults = RunConfig(params=cfg.params, cells=(64, 64))
    assert cfg == defaults
    assert cfg.params.potential == LinearPotential()


def test_missing_key_is_named():
    text = BASE.replace("mu1 = 5\n", "")
    with pytest.raises(InvalidConfigError) as err:
        parse_config(text)
    assert err.value.key == "params.mu1"
    assert "params.mu1" in str(err.value)


@pytest.mark.parametrize(
    "extra,key",
    [
        ("[run]\nt_end = soon\n", "run.t_end"),
        ("[run]\nwindow = 2.5\n", "run.window"),
        ("[run]\nstop_on_converge = maybe\n", "run.stop_on_converge"),
        ("[run]\nbogus = 1\n", "run.bogus"),
        ("[domain]\ncells = 8, x\n", "domain.cells"),
        ("[domain]\nextents = 1, 0\n", "domain.extents"),
        ("[extras]\nx = 1\n", "extras"),
        ("[initial]\namplitude = nan\n", "initial.amplitude"),
    ],
)
def test_malformed_values_name_their_key(extra, key):
    with pytest.raises(InvalidConfigError) as err:
        parse_config(BASE + extra)
    assert err.value.key == key


def test_bad_coefficient_value_named():
    with pytest.raises(InvalidConfigError) as err:
        parse_config(BASE.replace("gamma = 0.1", "gamma = -1"))
    assert err.value.key == "params.gamma"


def test_syntax_error_is_config_error():
    with pytest.raises(InvalidConfigError):
        parse_config("chi1 = 1\n[params")


def test_full_config_round_trip_text():
    text = BASE + textwrap.dedent(
        """
        [domain]
        extents = 2.0, 1.0, 0.5
        cells = 16, 8, 4
        [potential]
        kind = linear
        axis = 0
        strength = 9.81
        [initial]
        background = explicit
        n1 = 0.3
        n2 = 0.4
        c = 0.5
        amplitude = 0.01
        perturbation = random
        seed = 12
        [run]
        t_end = 3.5
        dt = 1e-4
        scheme = explicit
        delta2 = auto
        stop_on_converge = false
        [search]
        n_delta = 300
        [output]
        dir = out/here
        write_snapshot = no
        """
    )
    cfg = parse_config(text)
    assert cfg.cells == (16, 8, 4) and cfg.params.extents == (2.0, 1.0, 0.5)
    assert cfg.initial.seed == 12 and cfg.dt == 1e-4 and cfg.delta2 is None
    assert cfg.search.n_delta == 300 and cfg.out_dir == "out/here" and not cfg.write_snapshot
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


finite = st.floats(1e-6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(finite, min_size=10, max_size=10),
    st.integers(0, 2**31),
    st.floats(0.0, 0.5),
    st.one_of(st.none(), st.floats(1e-6, 1.0)),
    st.booleans(),
)
def test_round_trip_is_exact(coeffs, seed, amp, dt, stop):
    keys = ("chi1", "chi2", "mu1", "mu2", "a1", "a2", "alpha", "beta", "gamma", "delta")
    cfg = parse_config(BASE)
    params = dataclasses.replace(cfg.params, **dict(zip(keys, coeffs)))
    cfg = dataclasses.replace(cfg, params=params, dt=dt, stop_on_converge=stop,
                              initial=dataclasses.replace(cfg.initial, seed=seed, amplitude=amp))
    assert parse_config(serialize_config(cfg)) == cfg


def test_tabulated_potential_from_snapshot(tmp_path):
    g = Grid((8, 8), (1.0, 1.0))
    phi = np.random.default_rng(0).normal(size=g.cells)
    write_snapshot(tmp_path / "phi.snap", phi, field="phi", grid=g, time=0.0)
    path = tmp_path / "run.ini"
    path.write_text(BASE + "[domain]\ncells = 8, 8\n[potential]\nkind = tabulated\nfile = phi.snap\n")
    cfg = load_config(path)
    assert isinstance(cfg.params.potential, TabulatedPotential)
    assert cfg.params.potential.values.tobytes() == phi.tobytes()
    assert parse_config(serialize_config(cfg), tmp_path) == cfg


def test_load_missing_file():
    with pytest.raises(InvalidConfigError):
        load_config("/nonexistent/x.ini")


# -- sweeps --------------------------------------------------------------------------------------


def test_sweep_points_are_ordered_product():
    raw, axes = parse_sweep(BASE + "[sweep]\nparams.chi1 = 0.1, 0.2\nrun.t_end = 1, 2, 3\n")
    pts = sweep_points(axes)
    assert len(pts) == 6
    assert pts[0].overrides == (("params.chi1", "0.1"), ("run.t_end", "1"))
    assert pts[3].overrides == (("params.chi1", "0.2"), ("run.t_end", "1"))
    cfg = build_config(apply_overrides(raw, pts[5].overrides))
    assert cfg.params.chi1 == 0.2 and cfg.t_end == 3.0
    # the base is untouched
    assert build_config(raw).params.chi1 == 0.1


@pytest.mark.parametrize(
    "sweep",
    ["", "[sweep]\n", "[sweep]\nparams.chi1 =\n", "[sweep]\nparams.nope = 1\n", "[sweep]\nchi1 = 1\n"],
)
def test_sweep_errors(sweep):
    with pytest.raises(InvalidConfigError):
        parse_sweep(BASE + sweep)


def test_empty_axis_list():
    with pytest.raises(InvalidConfigError):
        sweep_points([])


def test_run_config_rejects_sweep_section():
    with pytest.raises(InvalidConfigError):
        parse_config(BASE + "[sweep]\nparams.chi1 = 1\n")
