"""Monitored quantities: masses, norms, Lyapunov functionals, distances to the
predicted steady state and the dissipation check on a sampled series."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from typing import List, Optional, Sequence

import numpy as np

from kslab.errors import DomainError, InvalidConfigError, UnsupportedRegimeError
from kslab.grid import ScalarField, integrate, norm
from kslab.operators import divergence, grad_faces
from kslab.params import ModelParams, Regime, RegimeReport, SteadyState, steady_state


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One sample of the monitored quantities.

    ``lyapunov`` holds E1 or E2 depending on the regime and is NaN when no
    functional applies; distances are NaN without a target state.
    ``sq_dist`` is the summed squared L2 distance to the target, the quantity
    the Lyapunov functional dissipates.
    """

    t: float
    mass_n1: float
    mass_n2: float
    mass_c: float
    linf_n1: float
    linf_n2: float
    lq_c: float
    lq_grad_c: float
    l2_grad_c: float
    linf_u: float
    lyapunov: float
    dist_n1: float
    dist_n2: float
    dist_c: float
    sq_dist: float
    div_u_max: float
    clipped_mass: float

    def csv_row(self) -> List[str]:
        return [f"{v:.16e}" for v in astuple(self)]


CSV_COLUMNS = tuple(f.name for f in fields(DiagnosticsRecord))


@dataclass(frozen=True)
class LyapunovSpec:
    """Multipliers of E1 (coexistence) or E2 (exclusion)."""

    regime: Regime
    delta1: float
    delta2: float
    a1_prime: Optional[float] = None

    @classmethod
    def from_report(cls, report: RegimeReport, delta2: float = None) -> Optional["LyapunovSpec"]:
        """Multipliers from a feasible report; ``delta2`` defaults to the window midpoint."""
        if not report.feasible or report.delta2_window is None:
            return None
        lo, hi = report.delta2_window
        if delta2 is None:
            delta2 = report.delta2
        elif not lo < delta2 < hi:
            raise InvalidConfigError(f"delta2={delta2} outside admissible window ({lo}, {hi})", key="delta2")
        return cls(report.regime, report.delta1, delta2, report.a1_prime)

    def evaluate(self, state, p: ModelParams) -> float:
        if self.regime is Regime.COEXISTENCE:
            return lyapunov_e1(state, p, self.delta1, self.delta2)
        return lyapunov_e2(state, p, self.delta1, self.a1_prime, self.delta2)


def _require_positive(f: ScalarField, name: str):
    values = f.interior
    bad = values <= 0.0
    if np.any(bad):
        cell = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DomainError(f"{name} must be strictly positive; cell {cell} holds {values[cell]!r}", cell=cell)


def _relative_entropy(f: ScalarField, ref: float) -> np.ndarray:
    # s - s* - s* log(s/s*) written as s* (x - log1p(x)), x = s/s* - 1, to keep precision near s*
    x = f.interior / ref - 1.0
    return ref * (x - np.log1p(x))


def lyapunov_e1(state, p: ModelParams, delta1: float, delta2: float) -> float:
    """Coexistence functional E1 around ``(N1, N2, C*)``."""
    if not (0.0 < p.a1 < 1.0 and 0.0 < p.a2 < 1.0):
        raise UnsupportedRegimeError("E1 needs a1, a2 in (0, 1)")
    _require_positive(state.n1, "n1")
    _require_positive(state.n2, "n2")
    target = steady_state(p)
    dv = state.n1.grid.volume_element
    weight = delta1 * p.a1 * p.mu1 / (p.a2 * p.mu2)
    e = np.sum(_relative_entropy(state.n1, target.N1)) * dv
    e += weight * np.sum(_relative_entropy(state.n2, target.N2)) * dv
    e += 0.5 * delta2 * np.sum((state.c.interior - target.Cstar) ** 2) * dv
    return float(e)


def lyapunov_e2(state, p: ModelParams, delta1p: float, a1p: float, delta2p: float) -> float:
    """Exclusion functional E2 around ``(0, 1, beta)``."""
    if not p.a1 >= 1.0 > p.a2 > 0.0:
        raise UnsupportedRegimeError("E2 needs a1 >= 1 > a2 > 0")
    _require_positive(state.n2, "n2")
    dv = state.n1.grid.volume_element
    weight = delta1p * a1p * p.mu1 / (p.a2 * p.mu2)
    e = integrate(state.n1)
    e += weight * np.sum(_relative_entropy(state.n2, 1.0)) * dv
    e += 0.5 * delta2p * np.sum((state.c.interior - p.beta) ** 2) * dv
    return float(e)


def distances(state, target: SteadyState):
    """L-infinity distances ``(n1, n2, c)`` to the target constants, plus ``max |u|``."""
    return (
        float(np.max(np.abs(state.n1.interior - target.N1))),
        float(np.max(np.abs(state.n2.interior - target.N2))),
        float(np.max(np.abs(state.c.interior - target.Cstar))),
        state.u.max_abs(),
    )


def squared_distance(state, target: SteadyState) -> float:
    dv = state.n1.grid.volume_element
    return float(
        (
            np.sum((state.n1.interior - target.N1) ** 2)
            + np.sum((state.n2.interior - target.N2) ** 2)
            + np.sum((state.c.interior - target.Cstar) ** 2)
        )
        * dv
    )


def cell_gradient_magnitude(c: ScalarField) -> np.ndarray:
    """|grad c| at cell centers from the average of the two adjacent face differences."""
    grad = grad_faces(c)
    g = c.grid
    sq = np.zeros(g.cells)
    for k in range(g.dim):
        comp = grad.inner(k)
        lo = tuple(slice(None, -1) if j == k else slice(None) for j in range(g.dim))
        hi = tuple(slice(1, None) if j == k else slice(None) for j in range(g.dim))
        sq += (0.5 * (comp[lo] + comp[hi])) ** 2
    return np.sqrt(sq)


def compute_record(
    state,
    p: ModelParams,
    target: Optional[SteadyState] = None,
    lyapunov: Optional[LyapunovSpec] = None,
    q: float = 4.0,
    clipped_mass: float = 0.0,
) -> DiagnosticsRecord:
    dv = state.n1.grid.volume_element
    grad_c = cell_gradient_magnitude(state.c)
    if target is not None:
        d1, d2, dc, du = distances(state, target)
        sq = squared_distance(state, target)
    else:
        d1 = d2 = dc = sq = math.nan
        du = state.u.max_abs()
    return DiagnosticsRecord(
        t=float(state.t),
        mass_n1=integrate(state.n1),
        mass_n2=integrate(state.n2),
        mass_c=integrate(state.c),
        linf_n1=norm(state.n1, "Linf"),
        linf_n2=norm(state.n2, "Linf"),
        lq_c=norm(state.c, "Lq", q),
        lq_grad_c=norm((grad_c, dv), "Lq", q),
        l2_grad_c=norm((grad_c, dv), "L2"),
        linf_u=du,
        lyapunov=math.nan if lyapunov is None else lyapunov.evaluate(state, p),
        dist_n1=d1,
        dist_n2=d2,
        dist_c=dc,
        sq_dist=sq,
        div_u_max=float(np.max(np.abs(divergence(state.u).interior))),
        clipped_mass=float(clipped_mass),
    )


@dataclass(frozen=True)
class DissipationReport:
    violations: List[int]
    eps_hat: Optional[float]

    @property
    def n_violations(self) -> int:
        return len(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations and (self.eps_hat is None or self.eps_hat > 0.0)


def dissipation_check(
    series: Sequence,
    sq_dist: Optional[Sequence[float]] = None,
    tol_abs: float = 1e-10,
    tol_rel: float = 1e-8,
) -> DissipationReport:
    """Flag increases of a sampled functional and fit its dissipation rate.

    ``series`` holds ``(t, E)`` pairs. Pair ``k`` is a violation when
    ``E[k+1] - E[k] > tol_abs + tol_rel * E[k]``. With ``sq_dist`` given, the
    rate ``eps_hat`` is the least-squares fit of ``-dE/dt ~ eps * D`` using
    the trapezoidal average of ``D`` over each interval.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise InvalidConfigError("dissipation check needs at least two (t, E) samples", key="series")
    t, e = arr[:, 0], arr[:, 1]
    de = np.diff(e)
    violations = [int(k) for k in np.nonzero(de > tol_abs + tol_rel * np.abs(e[:-1]))[0]]
    eps_hat = None
    if sq_dist is not None:
        d = np.asarray(sq_dist, dtype=float)
        dbar = 0.5 * (d[:-1] + d[1:])
        rate = -de / np.diff(t)
        denom = float(np.sum(dbar * dbar))
        eps_hat = float(np.sum(rate * dbar)) / denom if denom > 0.0 else 0.0
    return DissipationReport(violations=violations, eps_hat=eps_hat)


def dissipation_integral(times: Sequence[float], sq_dist: Sequence[float]) -> np.ndarray:
    """Cumulative trapezoidal integral of the squared distance over the samples."""
    t = np.asarray(times, dtype=float)
    d = np.asarray(sq_dist, dtype=float)
    out = np.zeros_like(t)
    out[1:] = np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(t))
    return out
