"""Noise-minimal descent trajectories by direct transcription.

Library layout:

- flight_dynamics: atmosphere, forces, equations of motion, fuel flow
- noise: jet source level, corrections, equivalent level, consumption
- transcription: grid, Runge-Kutta defects, packed NLP callbacks
- nlp_solver: augmented-Lagrangian solver and KKT residuals
- scenarios: problem variants, initial guess, solve orchestration
- config / cli: config-file ingestion and run tooling
"""

from .flight_dynamics import (
    AircraftModel,
    Atmosphere,
    Control,
    ISA,
    State,
    StateDerivative,
    air_density,
    drag,
    dynamics_rhs,
    fuel_flow,
    lift,
    speed_of_sound,
    thrust,
)
from .noise import (
    EngineNoiseParams,
    Observer,
    Trajectory,
    leq,
    level_breakdown,
    sound_pressure_level,
    total_consumption,
)
from .nlp_solver import NlpProblem, SolveReport, SolverOptions, kkt_residuals, solve
from .scenarios import (
    PathBounds,
    Scenario,
    VariantResult,
    build_fuel_capped_ocp,
    build_minimax_ocp,
    build_noise_ocp,
    default_scenario,
    initial_guess,
    solve_fuel_reference,
    solve_variant,
)
from .transcription import (
    Grid,
    RkScheme,
    VectorLayout,
    assemble,
    heun_step,
    simulate,
)

__version__ = "0.1.0"
