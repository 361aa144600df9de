"""Manufactured-solution convergence study for the scalar subsystem.

Each exact field is ``A + B exp(-t) prod_i cos(k_i pi x_i / L_i)``, which has
zero normal derivative on every wall. The matching source terms are injected
into the explicit scalar update (velocity held at zero) and the L2 error at
the final time is compared across resolutions. The time step scales with
``h^2``, so the temporal error does not pollute the spatial order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from kslab.errors import InvalidConfigError
from kslab.grid import Grid, ScalarField, VectorField
from kslab.params import ModelParams
from kslab.stepper import scalar_tendencies

MODES = ("diffusion-reaction", "chemotaxis", "constant")

# (background, amplitude, wavenumbers) per field; wavenumbers padded with 1 in 3D
_FIELDS = {
    "n1": (1.0, 0.3, (1, 1)),
    "n2": (1.0, 0.3, (2, 1)),
    "c": (1.0, 0.5, (1, 2)),
}


class _Manufactured:
    def __init__(self, grid: Grid, constant: bool):
        x = grid.mesh()
        self.parts = {}
        for name, (A, B, k) in _FIELDS.items():
            k = tuple(k) + (1,) * (grid.dim - len(k))
            waves = [m * math.pi / L for m, L in zip(k, grid.extents)]
            cos = [np.cos(w * xi) for w, xi in zip(waves, x)]
            sin = [np.sin(w * xi) for w, xi in zip(waves, x)]
            psi = np.prod(cos, axis=0)
            grad = []
            for j in range(grid.dim):
                others = [cos[i] for i in range(grid.dim) if i != j]
                grad.append(-waves[j] * sin[j] * np.prod(others, axis=0))
            lap = -sum(w * w for w in waves) * psi
            self.parts[name] = (A, 0.0 if constant else B, psi, grad, lap)

    def value(self, name, t):
        A, B, psi, _, _ = self.parts[name]
        return A + B * math.exp(-t) * psi

    def source(self, p: ModelParams, t: float) -> Dict[str, np.ndarray]:
        e = math.exp(-t)
        val, dt_, grad, lap = {}, {}, {}, {}
        for name, (A, B, psi, g, l) in self.parts.items():
            val[name] = A + B * e * psi
            dt_[name] = -B * e * psi
            grad[name] = [B * e * gj for gj in g]
            lap[name] = B * e * l
        out = {}
        for name, chi, mu, a, other in (("n1", p.chi1, p.mu1, p.a1, "n2"), ("n2", p.chi2, p.mu2, p.a2, "n1")):
            n = val[name]
            chemo = sum(gn * gc for gn, gc in zip(grad[name], grad["c"])) + n * lap["c"]
            if name == "n1":
                react = mu * n * (1.0 - n - a * val[other])
            else:
                react = mu * n * (1.0 - a * val[other] - n)
            out[name] = dt_[name] - lap[name] + chi * chemo - react
        out["c"] = dt_["c"] - lap["c"] + val["c"] - p.alpha * val["n1"] - p.beta * val["n2"]
        return out


def _mode_params(mode: str, dim: int) -> ModelParams:
    chi = 0.0 if mode == "diffusion-reaction" else 1.0
    return ModelParams(
        chi1=chi, chi2=chi, mu1=1.0, mu2=1.0, a1=0.5, a2=0.5,
        alpha=1.0, beta=1.0, gamma=1.0, delta=1.0, extents=(1.0,) * dim,
    )


def solve_level(cells: int, mode: str = "diffusion-reaction", dim: int = 2, t_end: float = 0.05,
                safety: float = 0.4) -> Dict[str, float]:
    """Run one resolution and return the L2 error of each field and their root-sum-square."""
    p = _mode_params(mode, dim)
    grid = Grid((cells,) * dim, p.extents)
    exact = _Manufactured(grid, constant=mode == "constant")
    dt_target = safety * grid.h_min**2 / (2.0 * dim)
    n_steps = max(1, math.ceil(t_end / dt_target))
    dt = t_end / n_steps
    u = VectorField.zeros(grid)
    fields_ = {name: ScalarField.from_interior(grid, exact.value(name, 0.0)) for name in _FIELDS}
    for k in range(n_steps):
        t = k * dt
        rhs = scalar_tendencies(fields_["n1"], fields_["n2"], fields_["c"], u, p, diffusion=True)
        src = exact.source(p, t)
        fields_ = {
            name: ScalarField.from_interior(grid, fields_[name].interior + dt * (rhs[name] + src[name]))
            for name in _FIELDS
        }
    errors = {}
    for name in _FIELDS:
        diff = fields_[name].interior - exact.value(name, t_end)
        errors[name] = math.sqrt(float(np.sum(diff * diff)) * grid.volume_element)
    errors["total"] = math.sqrt(sum(errors[n] ** 2 for n in _FIELDS))
    return errors


@dataclass
class MMSResult:
    mode: str
    levels: List[int]
    h: List[float]
    errors: List[Dict[str, float]]
    orders: List[float] = field(default_factory=list)

    @property
    def min_order(self) -> float:
        return min(self.orders)

    def table(self) -> str:
        lines = [f"# mode={self.mode}", f"{'cells':>6} {'h':>12} {'err_n1':>12} {'err_n2':>12} "
                 f"{'err_c':>12} {'err_total':>12} {'order':>7}"]
        for i, (n, h, e) in enumerate(zip(self.levels, self.h, self.errors)):
            order = f"{self.orders[i - 1]:7.3f}" if i > 0 else f"{'-':>7}"
            lines.append(f"{n:6d} {h:12.5e} {e['n1']:12.5e} {e['n2']:12.5e} {e['c']:12.5e} "
                         f"{e['total']:12.5e} {order}")
        return "\n".join(lines)


def mms_study(levels: Sequence[int] = (32, 64, 128), mode: str = "diffusion-reaction", dim: int = 2,
              t_end: float = 0.05) -> MMSResult:
    """Errors and pairwise observed orders over a sequence of resolutions."""
    levels = [int(n) for n in levels]
    if len(levels) < 3:
        raise InvalidConfigError("need ≥3 levels", key="levels")
    if mode not in MODES:
        raise InvalidConfigError(f"unknown mms mode {mode!r}; choose from {MODES}", key="mode")
    if sorted(set(levels)) != levels:
        raise InvalidConfigError("levels must be strictly increasing", key="levels")
    errors = [solve_level(n, mode, dim, t_end) for n in levels]
    h = [1.0 / n for n in levels]
    orders = []
    for i in range(1, len(levels)):
        e0, e1 = errors[i - 1]["total"], errors[i]["total"]
        if e0 > 0.0 and e1 > 0.0:
            orders.append(math.log(e0 / e1) / math.log(h[i - 1] / h[i]))
        else:
            orders.append(math.nan)
    return MMSResult(mode=mode, levels=levels, h=h, errors=errors, orders=orders)
