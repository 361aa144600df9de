"""Model coefficients, constant steady states and the sufficient conditions
for coexistence and competitive exclusion.

The two stabilization checks search for Lyapunov multipliers numerically:
existence of a multiplier is all that is needed, so we scan a grid, keep the
candidate with the largest slack and polish it with a golden-section search.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from kslab.errors import InvalidConfigError, UnsupportedRegimeError

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class LinearPotential:
    """Gravity-like potential ``phi(x) = -strength * x[axis]``."""

    axis: int = -1
    strength: float = 1.0

    def gradient(self, dim: int) -> Tuple[float, ...]:
        axis = self.axis % dim
        return tuple(-self.strength if k == axis else 0.0 for k in range(dim))


@dataclass(frozen=True, eq=False)
class TabulatedPotential:
    """Potential sampled at cell centers (interior cells, C order).

    ``source`` records where the table came from so configs can be written back.
    """

    values: np.ndarray
    source: Optional[str] = None

    def __eq__(self, other):
        if not isinstance(other, TabulatedPotential):
            return NotImplemented
        return (
            self.source == other.source
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.source, self.values.shape))


Potential = Union[LinearPotential, TabulatedPotential]


@dataclass(frozen=True)
class ModelParams:
    """The ten PDE coefficients plus the box geometry and potential."""

    chi1: float
    chi2: float
    mu1: float
    mu2: float
    a1: float
    a2: float
    alpha: float
    beta: float
    gamma: float
    delta: float
    extents: Tuple[float, ...] = (1.0, 1.0)
    potential: Potential = field(default_factory=LinearPotential)

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        for name in ("chi1", "chi2", "a1", "a2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise InvalidConfigError(f"{name} must be finite and >= 0, got {value!r}", key=name)
        for name in ("mu1", "mu2", "alpha", "beta", "gamma", "delta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise InvalidConfigError(f"{name} must be finite and > 0, got {value!r}", key=name)
        if len(self.extents) not in (2, 3):
            raise InvalidConfigError(f"dim must be 2 or 3, got {len(self.extents)}", key="extents")
        if not all(math.isfinite(e) and e > 0.0 for e in self.extents):
            raise InvalidConfigError(f"extents must be positive, got {self.extents}", key="extents")
        if isinstance(self.potential, LinearPotential):
            if not -len(self.extents) <= self.potential.axis < len(self.extents):
                raise InvalidConfigError(
                    f"potential axis {self.potential.axis} out of range", key="potential.axis"
                )

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))


@dataclass(frozen=True)
class SteadyState:
    N1: float
    N2: float
    Cstar: float

    @property
    def u_target(self) -> float:
        return 0.0


class Regime(str, enum.Enum):
    COEXISTENCE = "Coexistence"
    EXCLUSION = "Exclusion"
    NO_GUARANTEE = "NoGuarantee"


@dataclass(frozen=True)
class SearchConfig:
    """Budget for the multiplier search.

    delta1 is scanned on ``n_delta`` log-spaced points in
    ``[delta1_min, delta1_max]``; in the exclusion case ``a1'`` is scanned on
    ``n_a1`` evenly spaced points in ``[1, a1]``.
    """

    delta1_min: float = 1e-3
    delta1_max: float = 10.0
    n_delta: int = 2000
    n_a1: int = 200
    refine_iters: int = 60

    def __post_init__(self):
        if self.n_delta < 1 or self.n_a1 < 1:
            raise InvalidConfigError("search budget is empty (n_delta and n_a1 must be >= 1)", key="search")
        if self.refine_iters < 0:
            raise InvalidConfigError("refine_iters must be >= 0", key="search.refine_iters")
        if not (0.0 < self.delta1_min <= self.delta1_max and math.isfinite(self.delta1_max)):
            raise InvalidConfigError(
                f"need 0 < delta1_min <= delta1_max, got ({self.delta1_min}, {self.delta1_max})",
                key="search.delta1_min",
            )

    def delta_grid(self) -> np.ndarray:
        if self.n_delta == 1:
            return np.array([self.delta1_max])
        return np.geomspace(self.delta1_min, self.delta1_max, self.n_delta)


@dataclass(frozen=True)
class RegimeReport:
    regime: Regime
    feasible: bool
    delta1: Optional[float] = None
    a1_prime: Optional[float] = None
    delta2_window: Optional[Tuple[float, float]] = None
    target: Optional[SteadyState] = None
    margin: Optional[float] = None
    reason: str = ""

    @property
    def delta2(self) -> Optional[float]:
        """Midpoint of the admissible window for the signal weight."""
        if self.delta2_window is None:
            return None
        lo, hi = self.delta2_window
        return 0.5 * (lo + hi)

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "feasible": self.feasible,
            "delta1": self.delta1,
            "a1_prime": self.a1_prime,
            "delta2_window": list(self.delta2_window) if self.delta2_window else None,
            "delta2": self.delta2,
            "target": None
            if self.target is None
            else {"N1": self.target.N1, "N2": self.target.N2, "Cstar": self.target.Cstar, "u": 0.0},
            "margin": self.margin,
            "reason": self.reason,
        }


def steady_state(p: ModelParams) -> SteadyState:
    """Constant state the solution is expected to approach.

    Coexistence for ``a1, a2 < 1``; exclusion of species 1 for ``a1 >= 1 > a2``.
    """
    a1, a2 = p.a1, p.a2
    if a1 < 1.0 and a2 < 1.0:
        det = 1.0 - a1 * a2
        N1 = (1.0 - a1) / det
        N2 = (1.0 - a2) / det
        return SteadyState(N1, N2, p.alpha * N1 + p.beta * N2)
    if a1 >= 1.0 > a2:
        return SteadyState(0.0, 1.0, p.beta)
    raise UnsupportedRegimeError(f"no stabilization result for a1={a1}, a2={a2} (need a2 < 1)")


# -- case (i): a1, a2 in (0, 1) ---------------------------------------------------


def coexistence_terms(p: ModelParams, delta1):
    """Both sides of the coexistence conditions at ``delta1`` (array friendly).

    Returns ``(slack1, lhs, rhs)`` where ``slack1 = 4 d - (1 + d)^2 a1 a2`` and
    the second condition reads ``lhs < rhs``.
    """
    d = np.asarray(delta1, dtype=float)
    a1, a2 = p.a1, p.a2
    det = 1.0 - a1 * a2
    slack1 = 4.0 * d - (1.0 + d) ** 2 * a1 * a2
    denom = a1 * p.alpha**2 * d + a2 * p.beta**2 - a1 * a2 * p.alpha * p.beta * (1.0 + d)
    lhs = p.chi1**2 * (1.0 - a1) / (4.0 * a1 * p.mu1 * det) + d * p.chi2**2 * (1.0 - a2) / (
        4.0 * a2 * p.mu2 * det
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs = np.where(slack1 > 0.0, slack1 / denom, -np.inf)
    return slack1, lhs, rhs


def coexistence_window(p: ModelParams, delta1: float) -> Tuple[float, float]:
    """Open interval of admissible signal weights for E1 at ``delta1``."""
    N = steady_state(p)
    a1, a2 = p.a1, p.a2
    lower = a2 * p.mu2 * p.chi1**2 * N.N1 / 4.0 + delta1 * a1 * p.mu1 * p.chi2**2 * N.N2 / 4.0
    slack1 = 4.0 * delta1 - (1.0 + delta1) ** 2 * a1 * a2
    denom = a1 * p.alpha**2 * delta1 + a2 * p.beta**2 - a1 * a2 * p.alpha * p.beta * (1.0 + delta1)
    upper = a1 * a2 * p.mu1 * p.mu2 * slack1 / denom
    return float(lower), float(upper)


def _coexistence_margin(p, delta1):
    slack1, lhs, rhs = coexistence_terms(p, delta1)
    return np.where(slack1 > 0.0, np.minimum(slack1, rhs - lhs), slack1)


def check_coexistence(p: ModelParams, search: SearchConfig = SearchConfig()) -> RegimeReport:
    """Search for a multiplier satisfying the coexistence conditions."""
    a1, a2 = p.a1, p.a2
    if a1 * a2 >= 1.0:
        return RegimeReport(
            Regime.NO_GUARANTEE, False, reason="a1·a2 ≥ 1: 4δ1 − (1+δ1)²a1a2 > 0 has no solution"
        )
    if not (0.0 < a1 < 1.0 and 0.0 < a2 < 1.0):
        raise UnsupportedRegimeError(f"coexistence check needs a1, a2 in (0, 1), got a1={a1}, a2={a2}")

    grid = search.delta_grid()
    margins = _coexistence_margin(p, grid)
    i = int(np.argmax(margins))
    best_d, best_m = float(grid[i]), float(margins[i])
    if search.refine_iters and grid.size > 1:
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        d, m = _golden_max(lambda x: float(_coexistence_margin(p, x)), lo, hi, search.refine_iters)
        if m > best_m:
            best_d, best_m = d, m

    target = steady_state(p)
    slack1 = 4.0 * best_d - (1.0 + best_d) ** 2 * a1 * a2
    window = coexistence_window(p, best_d) if slack1 > 0.0 else None
    feasible = best_m > 0.0
    if feasible:
        reason = "conditions hold at witness delta1"
    elif slack1 <= 0.0:
        reason = "no scanned delta1 satisfies 4δ1 − (1+δ1)²a1a2 > 0"
    else:
        reason = "chemotaxis term too large: no scanned delta1 gives a nonempty δ2 window"
    return RegimeReport(
        Regime.COEXISTENCE if feasible else Regime.NO_GUARANTEE,
        feasible,
        delta1=best_d,
        delta2_window=window,
        target=target,
        margin=best_m,
        reason=reason,
    )


# -- case (ii): a1 >= 1 > a2 ------------------------------------------------------


def exclusion_terms(p: ModelParams, delta1p, a1p):
    """``(slack1, mu2_bound)`` for the exclusion conditions; the second reads ``mu2 > mu2_bound``."""
    d = np.asarray(delta1p, dtype=float)
    a = np.asarray(a1p, dtype=float)
    a2 = p.a2
    slack1 = 4.0 * d - a * a2 * (1.0 + d) ** 2
    denom = p.alpha**2 * a * d + p.beta**2 * a2 - p.alpha * p.beta * a * a2 * (1.0 + d)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(slack1 > 0.0, p.chi2**2 * d * denom / (4.0 * a2 * slack1), np.inf)
    return slack1, bound


def exclusion_window(p: ModelParams, delta1p: float, a1p: float) -> Tuple[float, float]:
    """Open interval of admissible signal weights for E2 at ``(delta1', a1')``."""
    a2 = p.a2
    lower = a1p * p.mu1 * p.chi2**2 * delta1p / (4.0 * a2 * p.mu2)
    slack1 = 4.0 * delta1p - a1p * a2 * (1.0 + delta1p) ** 2
    denom = p.alpha**2 * a1p * delta1p + p.beta**2 * a2 - p.alpha * p.beta * a1p * a2 * (1.0 + delta1p)
    upper = a1p * p.mu1 * slack1 / denom
    return float(lower), float(upper)


def _exclusion_margin(p, d, a):
    slack1, bound = exclusion_terms(p, d, a)
    return np.where(slack1 > 0.0, np.minimum(slack1, p.mu2 - bound), slack1)


def check_exclusion(p: ModelParams, search: SearchConfig = SearchConfig()) -> RegimeReport:
    """Search ``(delta1', a1')`` for the competitive-exclusion conditions."""
    a1, a2 = p.a1, p.a2
    if a2 == 0.0:
        raise UnsupportedRegimeError("exclusion check divides by a2; a2 = 0 is unsupported")
    if not a1 >= 1.0 > a2 > 0.0:
        raise UnsupportedRegimeError(f"exclusion check needs a1 >= 1 > a2 > 0, got a1={a1}, a2={a2}")

    deltas = search.delta_grid()
    a_grid = np.linspace(1.0, a1, search.n_a1) if a1 > 1.0 else np.array([1.0])
    D, A = np.meshgrid(deltas, a_grid, indexing="ij")
    margins = _exclusion_margin(p, D, A)
    flat = int(np.argmax(margins))
    i, j = np.unravel_index(flat, margins.shape)
    best_d, best_a, best_m = float(deltas[i]), float(a_grid[j]), float(margins[i, j])
    if search.refine_iters and deltas.size > 1:
        lo = deltas[max(i - 1, 0)]
        hi = deltas[min(i + 1, deltas.size - 1)]
        d, m = _golden_max(lambda x: float(_exclusion_margin(p, x, best_a)), lo, hi, search.refine_iters)
        if m > best_m:
            best_d, best_m = d, m

    slack1 = 4.0 * best_d - best_a * a2 * (1.0 + best_d) ** 2
    window = exclusion_window(p, best_d, best_a) if slack1 > 0.0 else None
    feasible = best_m > 0.0
    if feasible:
        reason = "conditions hold at witness (delta1', a1')"
    elif slack1 <= 0.0:
        reason = "no scanned (δ1', a1') satisfies 4δ1' − a1'a2(1+δ1')² > 0"
    else:
        reason = "mu2 below the chemotaxis bound for every scanned (δ1', a1')"
    return RegimeReport(
        Regime.EXCLUSION if feasible else Regime.NO_GUARANTEE,
        feasible,
        delta1=best_d,
        a1_prime=best_a,
        delta2_window=window,
        target=steady_state(p),
        margin=best_m,
        reason=reason,
    )


def check_regime(p: ModelParams, search: SearchConfig = SearchConfig()) -> RegimeReport:
    """Dispatch to the coexistence or exclusion check based on ``(a1, a2)``.

    Parameter pairs covered by neither case give an infeasible ``NoGuarantee``
    report instead of raising.
    """
    a1, a2 = p.a1, p.a2
    if a1 >= 1.0 > a2:
        if a2 <= 0.0:
            return RegimeReport(Regime.NO_GUARANTEE, False, target=steady_state(p),
                                reason="exclusion conditions need a2 > 0")
        return check_exclusion(p, search)
    if a1 * a2 >= 1.0:
        return check_coexistence(p, search)
    if 0.0 < a1 < 1.0 and 0.0 < a2 < 1.0:
        return check_coexistence(p, search)
    target = steady_state(p) if (a1 < 1.0 and a2 < 1.0) else None
    return RegimeReport(
        Regime.NO_GUARANTEE,
        False,
        target=target,
        reason=f"no sufficient condition covers a1={a1}, a2={a2}",
    )


def _golden_max(f, lo, hi, iters):
    """Golden-section search for a maximum of ``f`` on ``[lo, hi]`` (log-spaced)."""
    a, b = math.log(lo), math.log(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(math.exp(c)), f(math.exp(d))
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(math.exp(d))
    if fc >= fd:
        return math.exp(c), fc
    return math.exp(d), fd


@dataclass(frozen=True)
class Xi0Result:
    xi0: float
    ell_star: float
    infimum: float


def xi0_from_K(p_exp: float, K: float, chi: float) -> Xi0Result:
    """Threshold ``xi0`` defined by ``inf_l (l + K l^-p chi^(p+1)) = chi / xi0``.

    The infimum is attained at ``l* = (p K chi^(p+1))^(1/(p+1))``; ``K`` is a
    user-supplied constant since no explicit value is available.
    """
    for name, value in (("p_exp", p_exp), ("K", K), ("chi", chi)):
        if not (math.isfinite(value) and value > 0.0):
            raise InvalidConfigError(f"{name} must be positive, got {value!r}", key=name)
    if p_exp <= 1.0:
        raise InvalidConfigError(f"p_exp must exceed 1, got {p_exp}", key="p_exp")
    ell = (p_exp * K * chi ** (p_exp + 1.0)) ** (1.0 / (p_exp + 1.0))
    infimum = ell + K * ell ** (-p_exp) * chi ** (p_exp + 1.0)
    return Xi0Result(xi0=chi / infimum, ell_star=ell, infimum=infimum)
