"""Two-species chemotaxis with competitive kinetics coupled to Stokes flow.

Finite-volume solver on a MAC grid, regime checks for the coexistence and
exclusion limits, Lyapunov monitoring and a command-line front end.
"""

from kslab.errors import (
    BlowUpError,
    DomainError,
    InvalidConfigError,
    KSLabError,
    StepRejectedError,
    UnsupportedRegimeError,
)
from kslab.grid import Grid, ScalarField, VectorField
from kslab.mms import mms_study
from kslab.params import (
    LinearPotential,
    ModelParams,
    Regime,
    RegimeReport,
    SearchConfig,
    SteadyState,
    TabulatedPotential,
    check_coexistence,
    check_exclusion,
    check_regime,
    steady_state,
    xi0_from_K,
)
from kslab.stepper import InitialCondition, RunConfig, RunResult, State, init_state, run, stable_dt, step
from kslab.config import load_config, parse_config, serialize_config

__version__ = "0.1.0"
