"""Problem variants of the descent: noise-minimal, fuel-minimal,
fuel-capped noise, and multi-observer minimax, plus initial-guess
generation and solve orchestration.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import noise, transcription
from .errors import ScenarioError
from .flight_dynamics import (
    IV, IGAMMA, ICHI, IX, IY, IH,
    AircraftModel, Atmosphere, ISA,
    air_density, drag, thrust,
)
from .nlp_solver import NlpProblem, SolveReport, SolverOptions, solve
from .noise import EngineNoiseParams, Observer, Trajectory
from .transcription import Grid, RkScheme, VectorLayout, assemble

VARIANTS = ("noise", "fuel", "noise_fuel_capped", "minimax")

# Path-constraint component order (gamma, V, chi, alpha, delta_x, mu).
PATH_COMPONENTS = ("gamma", "V", "chi", "alpha", "delta_x", "mu")

_DEG = math.pi / 180.0


@dataclass(frozen=True)
class PathBounds:
    """Two-sided limits on (gamma, V, chi, alpha, delta_x, mu)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != (6,) or hi.shape != (6,):
            raise ScenarioError("path bounds must have six components")
        if not np.all(lo < hi):
            bad = PATH_COMPONENTS[int(np.argmax(~(lo < hi)))]
            raise ScenarioError(f"lower bound must stay below upper bound ({bad})")

    @classmethod
    def default(cls, stall_speed: float = 70.0) -> "PathBounds":
        """Representative civil-descent envelope; every value overridable."""
        return cls(
            lower=np.array([-8.0 * _DEG, 1.3 * stall_speed, -30.0 * _DEG,
                            -2.0 * _DEG, 0.2, -25.0 * _DEG]),
            upper=np.array([3.0 * _DEG, 180.0, 30.0 * _DEG,
                            12.0 * _DEG, 1.0, 25.0 * _DEG]),
        )

    def component(self, name: str) -> tuple[float, float]:
        i = PATH_COMPONENTS.index(name)
        return float(self.lower[i]), float(self.upper[i])


@dataclass(frozen=True)
class Scenario:
    """Boundary data, bounds, observers and variant selection for one run."""

    x0: float = 0.0
    y0: float = 0.0
    h0: float = 3500.0
    V0: float = 160.0
    xf: float = 60000.0
    yf: float = 5000.0
    hf: float = 500.0
    tf: float = 600.0
    n_intervals: int = 100
    bounds: PathBounds = field(default_factory=PathBounds.default)
    observers: tuple[Observer, ...] = (Observer(0.0, 0.0),)
    variant: str = "noise"
    fuel_cap_factor: float = 1.1
    stall_speed: float = 70.0
    aircraft: AircraftModel = field(default_factory=AircraftModel)
    engine: EngineNoiseParams = field(default_factory=EngineNoiseParams)
    atmosphere: Atmosphere = ISA
    n_starts: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ScenarioError(f"unknown variant {self.variant!r}")
        if not self.tf > 0:
            raise ScenarioError("final time must be positive")
        if self.n_intervals < 2:
            raise ScenarioError("need at least 2 grid intervals")
        if self.variant != "fuel" and len(self.observers) == 0:
            raise ScenarioError(f"variant {self.variant!r} needs at least one observer")
        if self.fuel_cap_factor <= 0:
            raise ScenarioError("fuel cap factor must be positive")
        if self.n_starts < 1:
            raise ScenarioError("need at least one start")
        v_lo, v_hi = self.bounds.component("V")
        if v_lo < 1.3 * self.stall_speed - 1e-9:
            raise ScenarioError(
                f"speed floor {v_lo:.1f} m/s is below 1.3*stall speed "
                f"({1.3 * self.stall_speed:.1f} m/s)")
        if not (v_lo <= self.V0 <= v_hi):
            raise ScenarioError(f"initial speed {self.V0} outside bounds [{v_lo}, {v_hi}]")
        for name, val in (("h0", self.h0), ("hf", self.hf)):
            if val < 0 or val >= self.atmosphere.max_height:
                raise ScenarioError(f"{name}={val} outside the atmosphere domain")

    def grid(self) -> Grid:
        return Grid(0.0, self.tf, self.n_intervals)

    def layout(self) -> VectorLayout:
        return VectorLayout(self.n_intervals, has_epigraph=(self.variant == "minimax"))


def default_scenario(**overrides) -> Scenario:
    """The shipped reference scenario (matches configs/default.ini)."""
    return dataclasses.replace(Scenario(), **overrides) if overrides else Scenario()


@dataclass
class VariantResult:
    """Solution of one variant solve, with trajectory-level metrics."""

    variant: str
    trajectory: Trajectory
    report: SolveReport
    w: np.ndarray
    leq_by_observer: tuple[float, ...]
    consumption_kg: float
    theta_db: Optional[float] = None
    internode_violation: float = 0.0


def initial_guess(scn: Scenario, grid: Grid | None = None) -> np.ndarray:
    """Deterministic bound-feasible starting vector.

    Straight-line (x, y, h) between the boundary points, airspeed
    ramped linearly from V0 down to the speed floor, flight-path and
    yaw angles consistent with that path, angle of attack and throttle
    from quasi-static trim at each node, wings level.  Every component
    is clipped into its bounds; defect residuals are expected to be
    nonzero.
    """
    scn.validate()
    grid = grid or scn.grid()
    n = grid.n_intervals
    model, atm, b = scn.aircraft, scn.atmosphere, scn.bounds
    frac = np.linspace(0.0, 1.0, n + 1)

    x = scn.x0 + frac * (scn.xf - scn.x0)
    y = scn.y0 + frac * (scn.yf - scn.y0)
    h = scn.h0 + frac * (scn.hf - scn.h0)
    v_lo, v_hi = b.component("V")
    v_end = min(max(1.3 * scn.stall_speed, v_lo), v_hi)
    V = scn.V0 + frac * (v_end - scn.V0)

    h_rate = (scn.hf - scn.h0) / grid.duration
    gamma = np.arcsin(np.clip(h_rate / V, -1.0, 1.0))
    g_lo, g_hi = b.component("gamma")
    gamma = np.clip(gamma, g_lo, g_hi)
    chi_lo, chi_hi = b.component("chi")
    chi = np.full(n + 1, np.clip(math.atan2(scn.yf - scn.y0, scn.xf - scn.x0),
                                 chi_lo, chi_hi))

    # quasi-static trim: lift balances weight, thrust balances drag,
    # gravity component and the slow deceleration
    rho = air_density(h, atm)
    q = 0.5 * rho * V ** 2 * model.S
    alpha = model.mass * model.g * np.cos(gamma) / (q * model.Cz_alpha)
    a_lo, a_hi = b.component("alpha")
    alpha = np.clip(alpha, a_lo, a_hi)
    v_rate = (V[-1] - V[0]) / grid.duration
    t_req = (model.mass * v_rate
             + drag(h, V, alpha, model, atm)
             + model.mass * model.g * np.sin(gamma))
    t_full = thrust(h, V, np.ones(n + 1), model, atm)
    d_lo, d_hi = b.component("delta_x")
    delta = np.clip(t_req / t_full, d_lo, d_hi)

    Z = np.column_stack([V, gamma, chi, x, y, h])
    U = np.column_stack([alpha[:-1], delta[:-1], np.zeros(n)])

    layout = scn.layout()
    if layout.has_epigraph:
        traj = Trajectory(times=grid.times(), states=Z, controls=U)
        worst = max(noise.leq(traj, obs, scn.engine, atm) for obs in scn.observers)
        return layout.pack(Z, U, theta=worst + 1.0)
    return layout.pack(Z, U)


def build_noise_ocp(scn: Scenario) -> NlpProblem:
    """Single-observer noise-minimal NLP (observer 0 is the receiver)."""
    return assemble(dataclasses.replace(scn, variant="noise"))


def build_fuel_capped_ocp(scn: Scenario, tr1: Trajectory) -> NlpProblem:
    """Noise objective plus the scalar consumption cap relative to tr1."""
    cap = scn.fuel_cap_factor * noise.total_consumption(tr1, scn.aircraft, scn.atmosphere)
    return assemble(dataclasses.replace(scn, variant="noise_fuel_capped"), fuel_cap=cap)


def build_minimax_ocp(scn: Scenario) -> NlpProblem:
    """Epigraph formulation: minimize theta subject to theta >= each observer level."""
    return assemble(dataclasses.replace(scn, variant="minimax"))


def _perturbed(w0: np.ndarray, problem: NlpProblem, rng: np.random.Generator) -> np.ndarray:
    span = 0.05 * problem.x_scale
    w = w0 + rng.uniform(-1.0, 1.0, size=w0.shape) * span
    return np.clip(w, problem.lower, problem.upper)


_COARSEST_GRID = 12     # starting resolution of the continuation ladder
_CONTINUATION_TOL = 1e-4  # relaxed tolerances on intermediate grids


def _refine_vector(w, coarse: Grid, fine: Grid, coarse_lay: VectorLayout,
                   fine_lay: VectorLayout) -> np.ndarray:
    """Interpolate a coarse solution onto a finer grid.

    States are interpolated linearly in time; piecewise-constant controls
    are resampled at interval midpoints; the epigraph value carries over.
    """
    Zc, Uc, theta = coarse_lay.unpack(w)
    tc, tf_ = coarse.times(), fine.times()
    Zf = np.column_stack([np.interp(tf_, tc, Zc[:, j]) for j in range(6)])
    mid = tf_[:-1] + 0.5 * fine.h_step
    idx = np.clip(((mid - coarse.t0) / coarse.h_step).astype(int),
                  0, coarse.n_intervals - 1)
    Uf = Uc[idx]
    return fine_lay.pack(Zf, Uf, theta)


def _continuation_grids(n: int) -> list[int]:
    """Doubling ladder from the coarsest grid up to n."""
    ladder = [n]
    while ladder[0] > 2 * _COARSEST_GRID:
        ladder.insert(0, (ladder[0] + 1) // 2)
    return ladder


def _refine_multipliers(report: SolveReport, coarse: Grid, fine: Grid,
                        n_extra: int):
    """Map scaled-row multipliers onto a refined grid.

    Defect and path multipliers behave like time densities sampled per
    row, so they interpolate in time and shrink with the step ratio;
    boundary and extra (cap/epigraph) rows carry over unchanged.
    """
    nc, nf = coarse.n_intervals, fine.n_intervals
    ratio = fine.h_step / coarse.h_step
    lam_eq = report.eq_multipliers
    defect = lam_eq[:6 * nc].reshape(nc, 6)
    mid_c = coarse.times()[:-1] + 0.5 * coarse.h_step
    mid_f = fine.times()[:-1] + 0.5 * fine.h_step
    defect_f = np.column_stack(
        [np.interp(mid_f, mid_c, defect[:, j]) for j in range(6)]) * ratio
    eq_f = np.concatenate([defect_f.ravel(), lam_eq[6 * nc:]])

    lam_in = report.ineq_multipliers
    path = lam_in[:6 * (nc + 1)].reshape(nc + 1, 6)
    path_f = np.column_stack(
        [np.interp(fine.times(), coarse.times(), path[:, j]) for j in range(6)]) * ratio
    extra = lam_in[6 * (nc + 1):]
    if n_extra and extra.size != n_extra:
        extra = np.zeros(n_extra)
    in_f = np.concatenate([path_f.ravel(), extra])
    return eq_f, in_f


def _solve_problem(scn: Scenario, problem: NlpProblem,
                   opts: SolverOptions) -> tuple[np.ndarray, SolveReport]:
    """Deterministic solve driver: grid continuation plus optional
    perturbed multi-start; the best feasible result wins."""
    tr = problem.meta["transcription"]
    variant_scn = dataclasses.replace(scn, variant=tr.scn.variant)
    grid: Grid = problem.meta["grid"]
    layout: VectorLayout = problem.meta["layout"]

    ladder = _continuation_grids(grid.n_intervals)
    coarse_tols = dict(
        feasibility_tol=max(opts.feasibility_tol, _CONTINUATION_TOL),
        optimality_tol=max(opts.optimality_tol, _CONTINUATION_TOL),
    )

    def run_ladder(seed_vec: np.ndarray | None):
        """Solve the coarse levels, returning (start vector, warm multipliers,
        warm penalty) for the final grid."""
        w_level = seed_vec
        report = None
        prev_grid = prev_lay = None
        for n_level in ladder[:-1]:
            scn_level = dataclasses.replace(variant_scn, n_intervals=n_level)
            prob_level = assemble(scn_level, fuel_cap=tr.fuel_cap)
            grid_level: Grid = prob_level.meta["grid"]
            lay_level: VectorLayout = prob_level.meta["layout"]
            if w_level is None:
                w_start = initial_guess(scn_level, grid_level)
                warm = (None, None)
                rho0 = opts.initial_penalty
            else:
                w_start = np.clip(
                    _refine_vector(w_level, prev_grid, grid_level, prev_lay, lay_level),
                    prob_level.lower, prob_level.upper)
                warm = _refine_multipliers(report, prev_grid, grid_level,
                                           prob_level.n_ineq - 6 * (n_level + 1))
                # moderate restart penalty: the refined start carries only
                # interpolation defects
                rho0 = float(np.clip(report.iteration_log[-1].penalty,
                                     opts.initial_penalty, 1e3))
            level_opts = dataclasses.replace(opts, verbose=False,
                                             initial_penalty=rho0, **coarse_tols)
            w_level, report = solve(prob_level, w_start, level_opts,
                                    warm_eq_multipliers=warm[0],
                                    warm_ineq_multipliers=warm[1])
            prev_grid, prev_lay = grid_level, lay_level
        if w_level is None:
            return initial_guess(variant_scn, grid), (None, None), opts.initial_penalty
        w = np.clip(_refine_vector(w_level, prev_grid, grid, prev_lay, layout),
                    problem.lower, problem.upper)
        warm = _refine_multipliers(report, prev_grid, grid,
                                   problem.n_ineq - 6 * (grid.n_intervals + 1))
        rho0 = float(np.clip(report.iteration_log[-1].penalty,
                             opts.initial_penalty, 1e3))
        return w, warm, rho0

    best = None
    rng = np.random.default_rng(scn.seed)
    w0_full = initial_guess(variant_scn, grid)
    for start in range(scn.n_starts):
        seed_vec = None if start == 0 else _perturbed(w0_full, problem, rng)
        if len(ladder) > 1 and seed_vec is None:
            w_start, warm, rho0 = run_ladder(None)
            final_opts = dataclasses.replace(opts, initial_penalty=rho0)
        else:
            w_start = w0_full if seed_vec is None else seed_vec
            warm = (None, None)
            final_opts = opts
        w, report = solve(problem, w_start, final_opts,
                          warm_eq_multipliers=warm[0],
                          warm_ineq_multipliers=warm[1])
        key = (report.status != "optimal",
               max(report.feasibility_error - opts.feasibility_tol, 0.0),
               report.objective)
        if best is None or key < best[0]:
            best = (key, w, report)
        if report.status == "optimal" and scn.n_starts == 1:
            break
    return best[1], best[2]


def _result_from_solution(scn: Scenario, problem: NlpProblem, w: np.ndarray,
                          report: SolveReport) -> VariantResult:
    layout: VectorLayout = problem.meta["layout"]
    grid: Grid = problem.meta["grid"]
    traj = transcription.trajectory_from_vector(w, layout, grid)
    levels = tuple(noise.leq(traj, obs, scn.engine, scn.atmosphere)
                   for obs in scn.observers)
    consumption = noise.total_consumption(traj, scn.aircraft, scn.atmosphere)
    theta = layout.unpack(w)[2] if layout.has_epigraph else None
    violation = transcription.internode_violation(
        traj, scn.bounds.lower, scn.bounds.upper, scn.aircraft, scn.atmosphere)
    return VariantResult(
        variant=problem.meta["transcription"].scn.variant,
        trajectory=traj,
        report=report,
        w=w,
        leq_by_observer=levels,
        consumption_kg=float(consumption),
        theta_db=theta,
        internode_violation=violation,
    )


def solve_fuel_reference(scn: Scenario,
                         opts: SolverOptions | None = None) -> VariantResult:
    """Fuel-minimal trajectory under the same boundary data and bounds.

    The per-observer levels of this trajectory are the comparison
    baseline for every noise variant.
    """
    opts = opts or SolverOptions()
    fuel_scn = dataclasses.replace(scn, variant="fuel")
    problem = assemble(fuel_scn)
    w, report = _solve_problem(fuel_scn, problem, opts)
    return _result_from_solution(scn, problem, w, report)


def solve_variant(scn: Scenario, opts: SolverOptions | None = None,
                  fuel_reference: VariantResult | None = None) -> VariantResult:
    """Solve the scenario's selected variant end to end.

    The fuel-capped variant needs the fuel-minimal trajectory; it is
    computed on demand when not supplied.
    """
    opts = opts or SolverOptions()
    scn.validate()
    if scn.variant == "fuel":
        return solve_fuel_reference(scn, opts)
    if scn.variant == "noise":
        problem = build_noise_ocp(scn)
    elif scn.variant == "minimax":
        problem = build_minimax_ocp(scn)
    elif scn.variant == "noise_fuel_capped":
        if fuel_reference is None:
            fuel_reference = solve_fuel_reference(scn, opts)
        problem = build_fuel_capped_ocp(scn, fuel_reference.trajectory)
    else:
        raise ScenarioError(f"unknown variant {scn.variant!r}")
    w, report = _solve_problem(scn, problem, opts)
    return _result_from_solution(scn, problem, w, report)
