"""Uniform box discretization with a MAC (staggered) layout.

Scalars live at cell centers and carry one ghost layer per side, so a field on
an ``(nx, ny)`` grid is stored as an ``(nx + 2, ny + 2)`` array. Velocity
component ``k`` lives on the faces normal to axis ``k``: ``cells[k] + 1`` faces
along that axis (faces ``0`` and ``cells[k]`` sit on the walls) and a ghost
layer along every other axis.

Array axis ``k`` is spatial axis ``k`` (x first), C order throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from kslab.errors import InvalidConfigError, KSLabError


@dataclass(frozen=True)
class Grid:
    cells: Tuple[int, ...]
    extents: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        if len(self.cells) not in (2, 3) or len(self.cells) != len(self.extents):
            raise InvalidConfigError(
                f"cells {self.cells} and extents {self.extents} must both have length 2 or 3", key="cells"
            )
        if any(n < 4 for n in self.cells):
            raise InvalidConfigError(f"need at least 4 cells per axis, got {self.cells}", key="cells")
        if not all(math.isfinite(e) and e > 0 for e in self.extents):
            raise InvalidConfigError(f"extents must be positive, got {self.extents}", key="extents")

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def h(self) -> Tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extents, self.cells))

    @property
    def h_min(self) -> float:
        return min(self.h)

    @property
    def volume_element(self) -> float:
        return float(np.prod(self.h))

    @property
    def measure(self) -> float:
        return float(np.prod(self.extents))

    @property
    def padded_shape(self) -> Tuple[int, ...]:
        return tuple(n + 2 for n in self.cells)

    def face_shape(self, axis: int) -> Tuple[int, ...]:
        return tuple(n + 1 if k == axis else n + 2 for k, n in enumerate(self.cells))

    @property
    def interior(self) -> Tuple[slice, ...]:
        return (slice(1, -1),) * self.dim

    def centers(self, axis: int) -> np.ndarray:
        h = self.h[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def mesh(self) -> List[np.ndarray]:
        """Cell-center coordinates of the interior cells, ``indexing='ij'``."""
        return np.meshgrid(*(self.centers(k) for k in range(self.dim)), indexing="ij")


def face_inner(dim: int, axis: int) -> Tuple[slice, ...]:
    """Index of a face array restricted to interior rows along the other axes."""
    return tuple(slice(None) if k == axis else slice(1, -1) for k in range(dim))


class ScalarField:
    """Cell-centered field with one ghost layer."""

    __slots__ = ("grid", "data")

    def __init__(self, grid: Grid, data: np.ndarray):
        if data.shape != grid.padded_shape:
            raise ValueError(f"expected padded shape {grid.padded_shape}, got {data.shape}")
        self.grid = grid
        self.data = data

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.padded_shape))

    @classmethod
    def from_interior(cls, grid: Grid, values) -> "ScalarField":
        data = np.zeros(grid.padded_shape)
        data[grid.interior] = np.broadcast_to(np.asarray(values, dtype=float), grid.cells)
        return apply_neumann(cls(grid, data))

    @property
    def interior(self) -> np.ndarray:
        return self.data[self.grid.interior]

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.data.copy())

    def __repr__(self):
        return f"ScalarField(cells={self.grid.cells})"


class VectorField:
    """Face-normal velocity components on the MAC grid."""

    __slots__ = ("grid", "comps")

    def __init__(self, grid: Grid, comps: Sequence[np.ndarray]):
        comps = list(comps)
        if len(comps) != grid.dim:
            raise ValueError(f"expected {grid.dim} components, got {len(comps)}")
        for k, comp in enumerate(comps):
            if comp.shape != grid.face_shape(k):
                raise ValueError(f"component {k}: expected {grid.face_shape(k)}, got {comp.shape}")
        self.grid = grid
        self.comps = comps

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, [np.zeros(grid.face_shape(k)) for k in range(grid.dim)])

    def copy(self) -> "VectorField":
        return VectorField(self.grid, [c.copy() for c in self.comps])

    def inner(self, axis: int) -> np.ndarray:
        """Component ``axis`` without its tangential ghost rows."""
        return self.comps[axis][face_inner(self.grid.dim, axis)]

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(self.inner(k)))) for k in range(self.grid.dim))

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.grid, [a + b for a, b in zip(self.comps, other.comps)])

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.grid, [a - b for a, b in zip(self.comps, other.comps)])

    def __mul__(self, s: float) -> "VectorField":
        return VectorField(self.grid, [s * a for a in self.comps])

    __rmul__ = __mul__

    def __repr__(self):
        return f"VectorField(cells={self.grid.cells})"


def _along(dim, axis, index):
    return tuple(index if k == axis else slice(None) for k in range(dim))


def apply_neumann(f: ScalarField) -> ScalarField:
    """Mirror interior cells into the ghosts (zero normal flux). In place; returns ``f``."""
    d = f.data
    dim = f.grid.dim
    for k in range(dim):
        d[_along(dim, k, 0)] = d[_along(dim, k, 1)]
        d[_along(dim, k, -1)] = d[_along(dim, k, -2)]
    return f


def apply_noslip(u: VectorField) -> VectorField:
    """Zero the wall-normal faces and reflect tangential ghosts with a sign flip.

    The reflection puts the interpolated tangential velocity at the wall at
    zero. In place; returns ``u``.
    """
    dim = u.grid.dim
    for k, comp in enumerate(u.comps):
        comp[_along(dim, k, 0)] = 0.0
        comp[_along(dim, k, -1)] = 0.0
        for j in range(dim):
            if j == k:
                continue
            comp[_along(dim, j, 0)] = -comp[_along(dim, j, 1)]
            comp[_along(dim, j, -1)] = -comp[_along(dim, j, -2)]
    return u


def integrate(f: ScalarField) -> float:
    return float(np.sum(f.interior)) * f.grid.volume_element


def norm(f, kind="L2", q: float = None) -> float:
    """Discrete Lebesgue norm of a scalar field (or of a raw interior array).

    ``kind`` is ``"L1"``, ``"L2"``, ``"Linf"`` or ``"Lq"`` (with ``q >= 1``).
    """
    if isinstance(f, ScalarField):
        values, dv = f.interior, f.grid.volume_element
    else:
        values, dv = f
    kind = kind.upper() if isinstance(kind, str) else kind
    if kind == "LINF":
        return float(np.max(np.abs(values)))
    if kind == "L1":
        q = 1.0
    elif kind == "L2":
        q = 2.0
    elif kind == "LQ":
        if q is None or not q >= 1.0:
            raise InvalidConfigError(f"Lq norm needs q >= 1, got {q!r}", key="q")
    else:
        raise InvalidConfigError(f"unknown norm kind {kind!r}", key="kind")
    a = np.abs(values)
    if q == 1.0:
        return float(np.sum(a) * dv)
    if q == 2.0:
        return math.sqrt(float(np.sum(a * a)) * dv)
    return float(np.sum(a**q) * dv) ** (1.0 / q)


# -- snapshots ---------------------------------------------------------------------
#
# One file per field: a single JSON header line, then the raw little-endian
# float64 values of the interior cells (or the face array) in C order.


def write_snapshot(path, values: np.ndarray, *, field: str, grid: Grid, time: float) -> Path:
    path = Path(path)
    values = np.ascontiguousarray(values, dtype="<f8")
    header = {
        "field": field,
        "dim": grid.dim,
        "cells": list(grid.cells),
        "extents": list(grid.extents),
        "shape": list(values.shape),
        "time": time,
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(values.tobytes(order="C"))
    return path


def read_snapshot(path) -> Tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        payload = fh.read()
    shape = tuple(header["shape"])
    expected = int(np.prod(shape)) * 8
    if len(payload) != expected:
        raise KSLabError(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype=header.get("dtype", "<f8")).reshape(shape).astype(float)
    return header, values


def save_fields(directory, grid: Grid, time: float, scalars: dict, velocity: VectorField = None):
    """Write every field of a state into ``directory`` as ``<name>.snap`` files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, f in scalars.items():
        write_snapshot(directory / f"{name}.snap", f.interior, field=name, grid=grid, time=time)
    if velocity is not None:
        for k in range(grid.dim):
            write_snapshot(directory / f"u{k}.snap", velocity.inner(k), field=f"u{k}", grid=grid, time=time)
