"""Run and sweep configuration in INI form.

A run config has the sections ``[params]`` (all ten coefficients required),
``[domain]``, ``[potential]``, ``[initial]``, ``[run]``, ``[search]`` and
``[output]``. Everything except ``[params]`` is optional and falls back to the
dataclass defaults. Floats are written with ``repr`` so parse -> serialize ->
parse is exact.

A sweep config is a run config plus a ``[sweep]`` section whose keys are
dotted ``section.key`` names and whose values are comma-separated lists::

    [sweep]
    params.chi1 = 0.05, 0.1, 0.2
"""

from __future__ import annotations

import configparser
import dataclasses
import itertools
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from kslab.errors import InvalidConfigError
from kslab.grid import read_snapshot
from kslab.params import LinearPotential, ModelParams, SearchConfig, TabulatedPotential
from kslab.stepper import InitialCondition, RunConfig

PARAM_KEYS = ("chi1", "chi2", "mu1", "mu2", "a1", "a2", "alpha", "beta", "gamma", "delta")

_RUN_KEYS = ("t_end", "dt", "safety", "dt_max", "scheme", "sample_dt", "q", "target", "tol", "tol_u",
             "window", "stop_on_converge", "delta2")
_INITIAL_KEYS = tuple(f.name for f in dataclasses.fields(InitialCondition))
_SEARCH_KEYS = tuple(f.name for f in dataclasses.fields(SearchConfig))
_SCHEMA = {
    "params": PARAM_KEYS,
    "domain": ("extents", "cells"),
    "potential": ("kind", "axis", "strength", "file"),
    "initial": _INITIAL_KEYS,
    "run": _RUN_KEYS,
    "search": _SEARCH_KEYS,
    "output": ("dir", "csv_name", "write_snapshot"),
}

_DEFAULT_CELLS = 64

Raw = Dict[str, Dict[str, str]]


# -- raw text <-> nested dict ----------------------------------------------------------


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive
    return cp


def read_raw(text: str, allow_sweep: bool = False) -> Raw:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InvalidConfigError(f"malformed config: {exc}", key=None) from exc
    raw: Raw = {}
    for section in cp.sections():
        if section not in _SCHEMA and not (allow_sweep and section == "sweep"):
            raise InvalidConfigError(f"unknown section [{section}]", key=section)
        for key, value in cp.items(section):
            if section != "sweep" and key not in _SCHEMA[section]:
                raise InvalidConfigError(f"unknown key {section}.{key}", key=f"{section}.{key}")
        raw[section] = dict(cp.items(section))
    return raw


def _get(raw: Raw, section: str, key: str, conv, default=None, required=False):
    value = raw.get(section, {}).get(key)
    name = f"{section}.{key}"
    if value is None or value.strip() == "":
        if required:
            raise InvalidConfigError(f"missing required key {name}", key=name)
        return default
    try:
        return conv(value.strip())
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(f"bad value for {name}: {value!r} ({exc})", key=name) from exc


def _float(s: str) -> float:
    v = float(s)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _optional_float(s: str) -> Optional[float]:
    return None if s.lower() in ("auto", "none") else _float(s)


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError("expected true or false")


def _floats(s: str) -> Tuple[float, ...]:
    return tuple(_float(x) for x in s.split(","))


def _ints(s: str) -> Tuple[int, ...]:
    return tuple(int(x) for x in s.split(","))


def _optional_str(s: str) -> Optional[str]:
    return None if s.lower() == "none" else s


# -- raw dict -> dataclasses -----------------------------------------------------------


def _potential(raw: Raw, base: Path):
    kind = _get(raw, "potential", "kind", str, "linear")
    if kind == "linear":
        return LinearPotential(
            axis=_get(raw, "potential", "axis", int, -1),
            strength=_get(raw, "potential", "strength", _float, 1.0),
        )
    if kind == "tabulated":
        source = _get(raw, "potential", "file", str, required=True)
        path = Path(source)
        if not path.is_absolute():
            path = base / path
        try:
            _, values = read_snapshot(path)
        except OSError as exc:
            raise InvalidConfigError(f"cannot read potential file {path}: {exc}", key="potential.file") from exc
        return TabulatedPotential(values=values, source=source)
    raise InvalidConfigError(f"unknown potential kind {kind!r}", key="potential.kind")


def build_config(raw: Raw, base_dir: Path = Path(".")) -> RunConfig:
    """Typed run config from the nested string dict produced by :func:`read_raw`."""
    coeffs = {k: _get(raw, "params", k, _float, required=True) for k in PARAM_KEYS}
    extents = _get(raw, "domain", "extents", _floats, (1.0, 1.0))
    cells = _get(raw, "domain", "cells", _ints, (_DEFAULT_CELLS,) * len(extents))
    try:
        params = ModelParams(**coeffs, extents=extents, potential=_potential(raw, base_dir))
    except InvalidConfigError as exc:
        if exc.key and "." not in exc.key:
            exc.key = f"domain.{exc.key}" if exc.key == "extents" else f"params.{exc.key}"
        raise

    ic_defaults = InitialCondition()
    ic_conv = {"background": str, "n1": _optional_float, "n2": _optional_float, "c": _optional_float,
               "amplitude": _float, "perturbation": str, "seed": int, "snapshot": _optional_str}
    initial = InitialCondition(
        **{k: _get(raw, "initial", k, ic_conv[k], getattr(ic_defaults, k)) for k in _INITIAL_KEYS}
    )

    search_defaults = SearchConfig()
    search = SearchConfig(
        **{k: _get(raw, "search", k, type(getattr(search_defaults, k)), getattr(search_defaults, k))
           for k in _SEARCH_KEYS}
    )

    run_conv = {"dt": _optional_float, "delta2": _optional_float, "scheme": str, "target": str,
                "window": int, "stop_on_converge": _bool}
    run_defaults = {f.name: f.default for f in dataclasses.fields(RunConfig) if f.name in _RUN_KEYS}
    run_kwargs = {k: _get(raw, "run", k, run_conv.get(k, _float), run_defaults[k]) for k in _RUN_KEYS}

    return RunConfig(
        params=params,
        cells=cells,
        initial=initial,
        search=search,
        out_dir=_get(raw, "output", "dir", _optional_str, None),
        csv_name=_get(raw, "output", "csv_name", str, "diagnostics.csv"),
        write_snapshot=_get(raw, "output", "write_snapshot", _bool, True),
        **run_kwargs,
    )


def parse_config(text: str, base_dir: Path = Path(".")) -> RunConfig:
    return build_config(read_raw(text), base_dir)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}", key=None) from exc
    return parse_config(text, path.parent)


# -- dataclasses -> text ---------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def to_raw(cfg: RunConfig) -> Raw:
    p = cfg.params
    raw: Raw = {"params": {k: _fmt(float(getattr(p, k))) for k in PARAM_KEYS}}
    raw["domain"] = {"extents": _fmt(tuple(float(x) for x in p.extents)), "cells": _fmt(cfg.cells)}
    pot = p.potential
    if isinstance(pot, LinearPotential):
        raw["potential"] = {"kind": "linear", "axis": str(pot.axis), "strength": _fmt(float(pot.strength))}
    else:
        if pot.source is None:
            raise InvalidConfigError("tabulated potential without a source file cannot be serialized",
                                     key="potential.file")
        raw["potential"] = {"kind": "tabulated", "file": pot.source}
    raw["initial"] = {k: _fmt(getattr(cfg.initial, k)) for k in _INITIAL_KEYS}
    raw["run"] = {k: _fmt(getattr(cfg, k)) for k in _RUN_KEYS}
    raw["search"] = {k: _fmt(getattr(cfg.search, k)) for k in _SEARCH_KEYS}
    raw["output"] = {"dir": _fmt(cfg.out_dir), "csv_name": cfg.csv_name,
                     "write_snapshot": _fmt(cfg.write_snapshot)}
    return raw


def write_raw(raw: Raw) -> str:
    lines = []
    for section, items in raw.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in items.items())
        lines.append("")
    return "\n".join(lines)


def serialize_config(cfg: RunConfig) -> str:
    return write_raw(to_raw(cfg))


# -- sweeps -----------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class SweepPoint:
    index: int
    overrides: Tuple[Tuple[str, str], ...]


def parse_sweep(text: str) -> Tuple[Raw, List[Tuple[str, List[str]]]]:
    """Base raw config and the ordered sweep axes ``(dotted_key, values)``."""
    raw = read_raw(text, allow_sweep=True)
    sweep = raw.pop("sweep", None)
    if not sweep:
        raise InvalidConfigError("sweep config needs a non-empty [sweep] section", key="sweep")
    axes = []
    for dotted, values in sweep.items():
        section, _, key = dotted.partition(".")
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise InvalidConfigError(f"unknown sweep axis {dotted!r}", key=f"sweep.{dotted}")
        items = [v.strip() for v in values.split(",") if v.strip()]
        if not items:
            raise InvalidConfigError(f"sweep axis {dotted!r} has no values", key=f"sweep.{dotted}")
        axes.append((dotted, items))
    return raw, axes


def sweep_points(axes: List[Tuple[str, List[str]]]) -> List[SweepPoint]:
    """Cartesian product of the axes, first axis slowest."""
    if not axes:
        raise InvalidConfigError("sweep has no axes", key="sweep")
    names = [name for name, _ in axes]
    return [
        SweepPoint(i, tuple(zip(names, combo)))
        for i, combo in enumerate(itertools.product(*(values for _, values in axes)))
    ]


def apply_overrides(raw: Raw, overrides) -> Raw:
    out = {section: dict(items) for section, items in raw.items()}
    for dotted, value in overrides:
        section, _, key = dotted.partition(".")
        out.setdefault(section, {})[key] = value
    return out

