"""Direct transcription of the descent problem into a finite NLP.

Equidistant grid, piecewise-constant controls (u_k held on
[t_k, t_{k+1})), explicit Runge-Kutta defect constraints (Heun by
default), seven boundary equations, path-constraint rows at every node,
and the variant objective.  The decision vector packs all node states,
all interval controls and, for the minimax variant, one epigraph
variable.

Objective gradients and constraint Jacobians are evaluated by
complex-step differentiation, vectorized over grid nodes: one
perturbation per local variable suffices because each defect row couples
only (z_k, u_k, z_{k+1}) and each level sample depends only on its own
node.  The results are exact to machine precision and are validated
against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from . import noise
from .errors import ScenarioError
from .flight_dynamics import (
    IALPHA, IDELTA_X, IMU, IV, IGAMMA, ICHI, IX, IY, IH,
    AircraftModel, Atmosphere, ISA, fuel_flow_arrays, rhs_arrays,
)
from .nlp_solver import NlpProblem

if TYPE_CHECKING:  # pragma: no cover
    from .scenarios import Scenario

_CS = 1e-100  # complex-step size; exact to machine precision, no cancellation
_FD = 1e-5    # relative step for Hessian blocks (central FD over exact gradients)

# Characteristic magnitudes used for variable and constraint-row scaling.
STATE_SCALE = np.array([100.0, 1.0, 1.0, 1.0e4, 1.0e4, 1.0e3])
CONTROL_SCALE = np.array([1.0, 1.0, 1.0])
# Path-constraint component order (gamma, V, chi, alpha, delta_x, mu).
PATH_SCALE = np.array([1.0, 100.0, 1.0, 1.0, 1.0, 1.0])

_H_CEILING = 15000.0  # generic altitude box for the decision variables, m


@dataclass(frozen=True)
class Grid:
    """Equidistant time grid t_k = t0 + k*h_step."""

    t0: float
    tf: float
    n_intervals: int

    def __post_init__(self):
        if self.n_intervals < 2:
            raise ValueError("grid needs at least 2 intervals")
        if not self.tf > self.t0:
            raise ValueError("tf must exceed t0")

    @property
    def h_step(self) -> float:
        return (self.tf - self.t0) / self.n_intervals

    @property
    def duration(self) -> float:
        return self.tf - self.t0

    def times(self) -> np.ndarray:
        return self.t0 + self.h_step * np.arange(self.n_intervals + 1)


@dataclass(frozen=True)
class RkScheme:
    """Explicit Runge-Kutta tableau (strictly lower-triangular a)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if a.shape != (b.size, b.size):
            raise ValueError("tableau shapes inconsistent")
        if not np.allclose(np.triu(a), 0.0):
            raise ValueError("scheme must be explicit (strictly lower-triangular a)")
        if not np.isclose(b.sum(), 1.0):
            raise ValueError("stage weights must sum to 1")

    @property
    def stages(self) -> int:
        return self.b.size

    @classmethod
    def heun(cls) -> "RkScheme":
        return cls(a=np.array([[0.0, 0.0], [1.0, 0.0]]), b=np.array([0.5, 0.5]))

    @classmethod
    def euler(cls) -> "RkScheme":
        return cls(a=np.zeros((1, 1)), b=np.ones(1))


def rk_step(z, u, h_step, rhs, scheme: RkScheme | None = None):
    """One explicit RK update of z under constant control u.

    `rhs(z, u)` may operate on scalars or arrays; the stage states are
    evaluated sequentially.
    """
    scheme = scheme or RkScheme.heun()
    stages = []
    for i in range(scheme.stages):
        zi = z
        for j in range(i):
            aij = scheme.a[i, j]
            if aij != 0.0:
                zi = zi + h_step * aij * stages[j]
        stages.append(rhs(zi, u))
    out = z
    for bi, ki in zip(scheme.b, stages):
        if bi != 0.0:
            out = out + h_step * bi * ki
    return out


def heun_step(z, u, h_step, rhs):
    """Explicit Heun update z + (h/2)*(f(z,u) + f(z + h*f(z,u), u))."""
    return rk_step(z, u, h_step, rhs, RkScheme.heun())


def _rhs_cols(Z, U, model: AircraftModel, atm: Atmosphere):
    """rhs stacked on (..., 6) state and (..., 3) control arrays."""
    out = rhs_arrays(Z[..., 0], Z[..., 1], Z[..., 2], Z[..., 3], Z[..., 4], Z[..., 5],
                     U[..., 0], U[..., 1], U[..., 2], model, atm)
    return np.stack(out, axis=-1)


def rk_step_arrays(Z, U, h_step, model: AircraftModel, atm: Atmosphere,
                   scheme: RkScheme | None = None):
    """RK update applied to whole arrays of nodes at once."""
    return rk_step(Z, U, h_step, lambda z, u: _rhs_cols(z, u, model, atm), scheme)


def simulate(z0, controls, grid: Grid, model: AircraftModel, atm: Atmosphere = ISA,
             scheme: RkScheme | None = None) -> noise.Trajectory:
    """Forward-simulate the piecewise-constant controls from z0."""
    U = np.asarray(controls, dtype=float)
    if U.shape != (grid.n_intervals, 3):
        raise ValueError(f"controls must have shape ({grid.n_intervals}, 3)")
    Z = np.empty((grid.n_intervals + 1, 6))
    Z[0] = np.asarray(z0, dtype=float)
    for k in range(grid.n_intervals):
        Z[k + 1] = rk_step_arrays(Z[k], U[k], grid.h_step, model, atm, scheme)
    return noise.Trajectory(times=grid.times(), states=Z, controls=U)


@dataclass(frozen=True)
class VectorLayout:
    """Index map of the packed decision vector.

    Node states come first (node-major, 6 components each), then the
    interval controls (3 each), then the optional epigraph variable.
    """

    n_intervals: int
    has_epigraph: bool = False

    @property
    def n_state_vars(self) -> int:
        return 6 * (self.n_intervals + 1)

    @property
    def n_control_vars(self) -> int:
        return 3 * self.n_intervals

    @property
    def n_vars(self) -> int:
        return self.n_state_vars + self.n_control_vars + (1 if self.has_epigraph else 0)

    def state_index(self, k: int, comp: int) -> int:
        return 6 * k + comp

    def control_index(self, k: int, comp: int) -> int:
        return self.n_state_vars + 3 * k + comp

    @property
    def epigraph_index(self) -> int:
        if not self.has_epigraph:
            raise ValueError("layout has no epigraph variable")
        return self.n_vars - 1

    def pack(self, states, controls, theta: float | None = None) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        controls = np.asarray(controls, dtype=float)
        if states.shape != (self.n_intervals + 1, 6):
            raise ValueError(f"states must have shape ({self.n_intervals + 1}, 6)")
        if controls.shape != (self.n_intervals, 3):
            raise ValueError(f"controls must have shape ({self.n_intervals}, 3)")
        parts = [states.ravel(), controls.ravel()]
        if self.has_epigraph:
            if theta is None:
                raise ValueError("epigraph layout needs a theta value")
            parts.append(np.array([float(theta)]))
        elif theta is not None:
            raise ValueError("theta given but layout has no epigraph variable")
        return np.concatenate(parts)

    def unpack(self, w: np.ndarray):
        w = np.asarray(w)
        if w.shape != (self.n_vars,):
            raise ValueError(f"decision vector must have shape ({self.n_vars},)")
        Z = w[:self.n_state_vars].reshape(self.n_intervals + 1, 6).copy()
        U = w[self.n_state_vars:self.n_state_vars + self.n_control_vars] \
            .reshape(self.n_intervals, 3).copy()
        theta = float(w[-1]) if self.has_epigraph else None
        return Z, U, theta

    def variable_scale(self) -> np.ndarray:
        s = np.concatenate([
            np.tile(STATE_SCALE, self.n_intervals + 1),
            np.tile(CONTROL_SCALE, self.n_intervals),
        ])
        if self.has_epigraph:
            s = np.concatenate([s, [1.0]])
        return s


def trajectory_from_vector(w: np.ndarray, layout: VectorLayout,
                           grid: Grid) -> noise.Trajectory:
    Z, U, _ = layout.unpack(w)
    return noise.Trajectory(times=grid.times(), states=Z, controls=U)


def _trapezoid_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.n_intervals + 1, grid.h_step)
    w[0] = w[-1] = 0.5 * grid.h_step
    return w


def _floor_eigenvalues(block: np.ndarray, scale_outer: np.ndarray) -> np.ndarray:
    """Clamp a symmetric block's eigenvalues at zero, measured in the
    scaled variable metric the solver optimizes in."""
    scaled = block * scale_outer
    vals, vecs = np.linalg.eigh(0.5 * (scaled + scaled.T))
    if vals[0] >= 0.0:
        return block
    floored = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    return floored / scale_outer


def _node_controls(U: np.ndarray) -> np.ndarray:
    # the path/integrand sample at t_N reuses the last interval's control
    return np.vstack([U, U[-1]])


class _Transcription:
    """Shared state behind the NlpProblem callbacks of one scenario."""

    def __init__(self, scn: "Scenario", grid: Grid, scheme: RkScheme,
                 fuel_cap: float | None):
        self.scn = scn
        self.grid = grid
        self.scheme = scheme
        self.fuel_cap = fuel_cap
        self.layout = VectorLayout(grid.n_intervals, has_epigraph=(scn.variant == "minimax"))
        self.model = scn.aircraft
        self.atm = scn.atmosphere
        self.params = scn.engine
        self.weights = _trapezoid_weights(grid)
        n = grid.n_intervals
        self.n_eq = 6 * n + 7
        self.n_path = 6 * (n + 1)
        self.n_extra = (1 if scn.variant == "noise_fuel_capped" else 0) \
            + (len(scn.observers) if scn.variant == "minimax" else 0)
        self.n_ineq = self.n_path + self.n_extra
        self._path_jac = self._build_path_jacobian()

    # ----- equalities -------------------------------------------------

    def _step_map(self, Z, U):
        """Phi(z_k, u_k) for every interval, shape (N, 6)."""
        return rk_step_arrays(Z[:-1], U, self.grid.h_step, self.model, self.atm,
                              self.scheme)

    def equalities(self, w: np.ndarray) -> np.ndarray:
        Z, U, _ = self.layout.unpack(w)
        defects = Z[1:] - self._step_map(Z, U)
        scn = self.scn
        boundary = np.array([
            Z[0, IX] - scn.x0, Z[0, IY] - scn.y0, Z[0, IH] - scn.h0,
            Z[0, IV] - scn.V0,
            Z[-1, IX] - scn.xf, Z[-1, IY] - scn.yf, Z[-1, IH] - scn.hf,
        ])
        return np.concatenate([defects.ravel(), boundary])

    def equalities_jacobian(self, w: np.ndarray) -> np.ndarray:
        Z, U, _ = self.layout.unpack(w)
        n, lay = self.grid.n_intervals, self.layout
        A = np.empty((n, 6, 6))
        B = np.empty((n, 6, 3))
        Zc = Z.astype(complex)
        Uc = U.astype(complex)
        for j in range(6):
            Zp = Zc.copy()
            Zp[:-1, j] += 1j * _CS
            A[:, :, j] = self._step_map(Zp, Uc).imag / _CS
        for j in range(3):
            Up = Uc.copy()
            Up[:, j] += 1j * _CS
            B[:, :, j] = self._step_map(Zc, Up).imag / _CS

        J = np.zeros((self.n_eq, lay.n_vars))
        eye = np.eye(6)
        for k in range(n):
            r = 6 * k
            zc = lay.state_index(k, 0)
            uc = lay.control_index(k, 0)
            J[r:r + 6, zc:zc + 6] = -A[k]
            J[r:r + 6, zc + 6:zc + 12] = eye
            J[r:r + 6, uc:uc + 3] = -B[k]
        base = 6 * n
        for i, (node, comp) in enumerate(
                [(0, IX), (0, IY), (0, IH), (0, IV), (n, IX), (n, IY), (n, IH)]):
            J[base + i, lay.state_index(node, comp)] = 1.0
        return J

    def eq_scale(self) -> np.ndarray:
        defect = np.tile(STATE_SCALE, self.grid.n_intervals)
        boundary = STATE_SCALE[[IX, IY, IH, IV, IX, IY, IH]]
        return np.concatenate([defect, boundary])

    def eq_sparsity(self) -> np.ndarray:
        n, lay = self.grid.n_intervals, self.layout
        mask = np.zeros((self.n_eq, lay.n_vars), dtype=bool)
        for k in range(n):
            r = 6 * k
            zc = lay.state_index(k, 0)
            uc = lay.control_index(k, 0)
            mask[r:r + 6, zc:zc + 12] = True
            mask[r:r + 6, uc:uc + 3] = True
        base = 6 * n
        for i, (node, comp) in enumerate(
                [(0, IX), (0, IY), (0, IH), (0, IV), (n, IX), (n, IY), (n, IH)]):
            mask[base + i, lay.state_index(node, comp)] = True
        return mask

    # ----- inequalities -----------------------------------------------

    def _build_path_jacobian(self) -> np.ndarray:
        n, lay = self.grid.n_intervals, self.layout
        J = np.zeros((self.n_path, lay.n_vars))
        for k in range(n + 1):
            r = 6 * k
            ku = min(k, n - 1)
            J[r + 0, lay.state_index(k, IGAMMA)] = 1.0
            J[r + 1, lay.state_index(k, IV)] = 1.0
            J[r + 2, lay.state_index(k, ICHI)] = 1.0
            J[r + 3, lay.control_index(ku, IALPHA)] += 1.0
            J[r + 4, lay.control_index(ku, IDELTA_X)] += 1.0
            J[r + 5, lay.control_index(ku, IMU)] += 1.0
        return J

    def _path_values(self, Z, U) -> np.ndarray:
        Un = _node_controls(U)
        rows = np.column_stack([Z[:, IGAMMA], Z[:, IV], Z[:, ICHI],
                                Un[:, IALPHA], Un[:, IDELTA_X], Un[:, IMU]])
        return rows.ravel()

    def _consumption(self, Z, U):
        delta = np.concatenate([U[:, IDELTA_X], U[-1:, IDELTA_X]])
        flows = fuel_flow_arrays(Z[:, IV], Z[:, IH], delta, self.model, self.atm)
        return self.weights @ flows

    def _consumption_gradient(self, Z, U) -> np.ndarray:
        lay = self.layout
        n = self.grid.n_intervals
        grad = np.zeros(lay.n_vars)
        Vc = Z[:, IV].astype(complex)
        Hc = Z[:, IH].astype(complex)
        delta = np.concatenate([U[:, IDELTA_X], U[-1:, IDELTA_X]]).astype(complex)

        def flows(V, h, dx):
            return fuel_flow_arrays(V, h, dx, self.model, self.atm)

        dV = flows(Vc + 1j * _CS, Hc, delta).imag / _CS * self.weights
        dH = flows(Vc, Hc + 1j * _CS, delta).imag / _CS * self.weights
        dD = flows(Vc, Hc, delta + 1j * _CS).imag / _CS * self.weights
        for k in range(n + 1):
            grad[lay.state_index(k, IV)] += dV[k]
            grad[lay.state_index(k, IH)] += dH[k]
            grad[lay.control_index(min(k, n - 1), IDELTA_X)] += dD[k]
        return grad

    def inequalities(self, w: np.ndarray) -> np.ndarray:
        Z, U, theta = self.layout.unpack(w)
        vals = [self._path_values(Z, U)]
        if self.scn.variant == "noise_fuel_capped":
            vals.append(np.array([self._consumption(Z, U)]))
        elif self.scn.variant == "minimax":
            vals.append(np.array([self._leq(Z, obs) - theta
                                  for obs in self.scn.observers]))
        return np.concatenate(vals)

    def inequalities_jacobian(self, w: np.ndarray) -> np.ndarray:
        Z, U, _ = self.layout.unpack(w)
        J = np.zeros((self.n_ineq, self.layout.n_vars))
        J[:self.n_path] = self._path_jac
        r = self.n_path
        if self.scn.variant == "noise_fuel_capped":
            J[r] = self._consumption_gradient(Z, U)
        elif self.scn.variant == "minimax":
            for i, obs in enumerate(self.scn.observers):
                _, grad = self._leq_and_gradient(Z, obs)
                grad[self.layout.epigraph_index] = -1.0
                J[r + i] = grad
        return J

    def ineq_bounds(self):
        lo = np.concatenate([np.tile(self.scn.bounds.lower, self.grid.n_intervals + 1),
                             np.full(self.n_extra, -np.inf)])
        hi_extra = []
        if self.scn.variant == "noise_fuel_capped":
            hi_extra.append(self.fuel_cap)
        elif self.scn.variant == "minimax":
            hi_extra.extend([0.0] * len(self.scn.observers))
        hi = np.concatenate([np.tile(self.scn.bounds.upper, self.grid.n_intervals + 1),
                             np.array(hi_extra, dtype=float)])
        return lo, hi

    def ineq_scale(self) -> np.ndarray:
        # extra rows keep unit scale: the fuel cap and epigraph gaps are
        # meaningful in absolute kg / dB
        return np.concatenate([np.tile(PATH_SCALE, self.grid.n_intervals + 1),
                               np.ones(self.n_extra)])

    def ineq_sparsity(self) -> np.ndarray:
        lay = self.layout
        mask = np.zeros((self.n_ineq, lay.n_vars), dtype=bool)
        mask[:self.n_path] = self._path_jac != 0.0
        r = self.n_path
        n = self.grid.n_intervals
        if self.scn.variant == "noise_fuel_capped":
            for k in range(n + 1):
                mask[r, lay.state_index(k, IV)] = True
                mask[r, lay.state_index(k, IH)] = True
            for k in range(n):
                mask[r, lay.control_index(k, IDELTA_X)] = True
        elif self.scn.variant == "minimax":
            for i in range(len(self.scn.observers)):
                for k in range(n + 1):
                    mask[r + i, lay.state_index(k, 0):lay.state_index(k, 0) + 6] = True
                mask[r + i, lay.epigraph_index] = True
        return mask

    # ----- objective ---------------------------------------------------

    def _levels(self, Z, obs) -> np.ndarray:
        return noise.levels_arrays(Z[:, 0], Z[:, 1], Z[:, 2], Z[:, 3], Z[:, 4], Z[:, 5],
                                   obs, self.params, self.atm)

    def _leq(self, Z, obs) -> float:
        energy = 10.0 ** (0.1 * self._levels(Z, obs))
        total = self.weights @ energy
        return float(10.0 * np.log10(total / self.grid.duration))

    def _leq_and_gradient(self, Z, obs):
        levels = np.real(self._levels(Z, obs))
        energy = 10.0 ** (0.1 * levels)
        total = self.weights @ energy
        value = float(10.0 * np.log10(total / self.grid.duration))
        node_weight = self.weights * energy / total

        dlev = np.empty((Z.shape[0], 6))
        Zc = Z.astype(complex)
        for j in range(6):
            Zp = Zc.copy()
            Zp[:, j] += 1j * _CS
            dlev[:, j] = self._levels(Zp, obs).imag / _CS

        grad = np.zeros(self.layout.n_vars)
        contrib = node_weight[:, None] * dlev
        grad[:self.layout.n_state_vars] = contrib.ravel()
        return value, grad

    def objective(self, w: np.ndarray) -> float:
        Z, U, theta = self.layout.unpack(w)
        variant = self.scn.variant
        if variant in ("noise", "noise_fuel_capped"):
            return self._leq(Z, self.scn.observers[0])
        if variant == "fuel":
            return float(self._consumption(Z, U))
        if variant == "minimax":
            return theta
        raise ScenarioError(f"unknown variant {variant!r}")

    def objective_gradient(self, w: np.ndarray) -> np.ndarray:
        Z, U, _ = self.layout.unpack(w)
        variant = self.scn.variant
        if variant in ("noise", "noise_fuel_capped"):
            _, grad = self._leq_and_gradient(Z, self.scn.observers[0])
            return grad
        if variant == "fuel":
            return self._consumption_gradient(Z, U)
        if variant == "minimax":
            grad = np.zeros(self.layout.n_vars)
            grad[self.layout.epigraph_index] = 1.0
            return grad
        raise ScenarioError(f"unknown variant {variant!r}")

    # ----- second derivatives -------------------------------------------

    def _level_node_gradients(self, Z, obs) -> np.ndarray:
        """d(L_P at node k)/d(z_k), shape (K, 6), via complex step."""
        dlev = np.empty((Z.shape[0], 6))
        Zc = Z.astype(complex)
        for j in range(6):
            Zp = Zc.copy()
            Zp[:, j] += 1j * _CS
            dlev[:, j] = self._levels(Zp, obs).imag / _CS
        return dlev

    def _add_leq_hessian(self, H: np.ndarray, Z, obs, weight: float,
                         convexify: bool = False) -> None:
        """Accumulate weight * Hessian of the equivalent level into H.

        With p_k the normalized energy quadrature weights and
        beta = ln(10)/10, the Hessian is
        blockdiag(p_k*(B_k + beta*g_k g_k^T)) - beta*G G^T, where B_k and
        g_k are the per-node level Hessian/gradient and G the assembled
        gradient vector.  With convexify the node blocks get their
        eigenvalues floored at zero and the negative rank-one term is
        dropped, yielding the positive-semidefinite model used by the
        solver's modified-Newton fallback.
        """
        if weight == 0.0:
            return
        K = Z.shape[0]
        levels = np.real(self._levels(Z, obs))
        energy = 10.0 ** (0.1 * levels)
        total = self.weights @ energy
        p = self.weights * energy / total
        beta = np.log(10.0) / 10.0

        dlev = self._level_node_gradients(Z, obs)
        blocks = np.empty((K, 6, 6))
        for j in range(6):
            eps = _FD * STATE_SCALE[j]
            Zp = Z.copy()
            Zp[:, j] += eps
            Zm = Z.copy()
            Zm[:, j] -= eps
            blocks[:, :, j] = (self._level_node_gradients(Zp, obs)
                               - self._level_node_gradients(Zm, obs)) / (2.0 * eps)
        blocks = 0.5 * (blocks + np.transpose(blocks, (0, 2, 1)))

        if not convexify:
            G = np.zeros(self.layout.n_vars)
            G[:self.layout.n_state_vars] = (p[:, None] * dlev).ravel()
            H -= (weight * beta) * np.outer(G, G)
        scale_mat = np.outer(STATE_SCALE, STATE_SCALE)
        for k in range(K):
            i = self.layout.state_index(k, 0)
            gk = dlev[k]
            block = p[k] * (blocks[k] + beta * np.outer(gk, gk))
            if convexify:
                block = _floor_eigenvalues(block, scale_mat)
            H[i:i + 6, i:i + 6] += weight * block

    def _add_consumption_hessian(self, H: np.ndarray, Z, U, weight: float,
                                 convexify: bool = False) -> None:
        """Accumulate weight * Hessian of the total consumption into H."""
        if weight == 0.0:
            return
        lay, n = self.layout, self.grid.n_intervals
        V = Z[:, IV]
        h = Z[:, IH]
        delta = np.concatenate([U[:, IDELTA_X], U[-1:, IDELTA_X]])
        scales = (STATE_SCALE[IV], STATE_SCALE[IH], CONTROL_SCALE[IDELTA_X])

        def flow_grads(V_, h_, d_):
            out = np.empty((V_.shape[0], 3))
            args = [V_.astype(complex), h_.astype(complex), d_.astype(complex)]
            for j in range(3):
                pert = [a.copy() for a in args]
                pert[j] += 1j * _CS
                out[:, j] = fuel_flow_arrays(pert[0], pert[1], pert[2],
                                             self.model, self.atm).imag / _CS
            return out

        blocks = np.empty((V.shape[0], 3, 3))
        for j, base in enumerate((V, h, delta)):
            eps = _FD * scales[j]
            args_p = [V.copy(), h.copy(), delta.copy()]
            args_m = [V.copy(), h.copy(), delta.copy()]
            args_p[j] = base + eps
            args_m[j] = base - eps
            blocks[:, :, j] = (flow_grads(*args_p) - flow_grads(*args_m)) / (2.0 * eps)
        blocks = 0.5 * (blocks + np.transpose(blocks, (0, 2, 1)))

        if convexify:
            scale_mat = np.outer(scales, scales)
            blocks = np.stack([_floor_eigenvalues(b, scale_mat) for b in blocks])
        for k in range(n + 1):
            idx = np.array([lay.state_index(k, IV), lay.state_index(k, IH),
                            lay.control_index(min(k, n - 1), IDELTA_X)])
            H[np.ix_(idx, idx)] += (weight * self.weights[k]) * blocks[k]

    def _defect_psi_gradients(self, Z, U, mu) -> np.ndarray:
        """d(mu_k . Phi_k)/d(z_k, u_k), shape (N, 9), via complex step."""
        g9 = np.empty((self.grid.n_intervals, 9))
        Zc = Z.astype(complex)
        Uc = U.astype(complex)
        for j in range(6):
            Zp = Zc.copy()
            Zp[:-1, j] += 1j * _CS
            g9[:, j] = np.sum(mu * self._step_map(Zp, Uc).imag, axis=1) / _CS
        for j in range(3):
            Up = Uc.copy()
            Up[:, j] += 1j * _CS
            g9[:, 6 + j] = np.sum(mu * self._step_map(Zc, Up).imag, axis=1) / _CS
        return g9

    def _add_defect_hessian(self, H: np.ndarray, Z, U, mu) -> None:
        """Accumulate the curvature of mu . (z_next - Phi) into H.

        Only Phi is nonlinear, so the contribution is minus the Hessian
        of the weighted step map, one 9x9 block per interval over
        (z_k, u_k).
        """
        if not np.any(mu):
            return
        lay, n = self.layout, self.grid.n_intervals
        loc_scale = np.concatenate([STATE_SCALE, CONTROL_SCALE])
        blocks = np.empty((n, 9, 9))
        for j in range(9):
            eps = _FD * loc_scale[j]
            Zp, Zm = Z.copy(), Z.copy()
            Up, Um = U.copy(), U.copy()
            if j < 6:
                Zp[:-1, j] += eps
                Zm[:-1, j] -= eps
            else:
                Up[:, j - 6] += eps
                Um[:, j - 6] -= eps
            blocks[:, :, j] = (self._defect_psi_gradients(Zp, Up, mu)
                               - self._defect_psi_gradients(Zm, Um, mu)) / (2.0 * eps)
        blocks = 0.5 * (blocks + np.transpose(blocks, (0, 2, 1)))

        for k in range(n):
            idx = np.concatenate([
                np.arange(lay.state_index(k, 0), lay.state_index(k, 0) + 6),
                np.arange(lay.control_index(k, 0), lay.control_index(k, 0) + 3),
            ])
            H[np.ix_(idx, idx)] -= blocks[k]

    def lagrangian_hessian(self, w: np.ndarray, sigma_f: float,
                           eq_mult: np.ndarray, ineq_mult: np.ndarray,
                           convexify: bool = False) -> np.ndarray:
        """Hessian of sigma_f*objective + eq_mult.c_eq + ineq_mult.c_ineq.

        Boundary and path rows are linear and contribute nothing; the
        epigraph variable is linear everywhere.  With convexify the
        nonlinear blocks get their spectra floored at zero (the solver's
        modified-Newton model).
        """
        Z, U, _ = self.layout.unpack(w)
        n = self.grid.n_intervals
        H = np.zeros((self.layout.n_vars, self.layout.n_vars))
        variant = self.scn.variant
        if variant in ("noise", "noise_fuel_capped"):
            self._add_leq_hessian(H, Z, self.scn.observers[0], sigma_f, convexify)
        elif variant == "fuel":
            self._add_consumption_hessian(H, Z, U, sigma_f, convexify)
        mu = np.asarray(eq_mult[:6 * n]).reshape(n, 6)
        self._add_defect_hessian(H, Z, U, mu)
        if variant == "noise_fuel_capped":
            self._add_consumption_hessian(H, Z, U, float(ineq_mult[self.n_path]),
                                          convexify)
        elif variant == "minimax":
            for i, obs in enumerate(self.scn.observers):
                self._add_leq_hessian(H, Z, obs, float(ineq_mult[self.n_path + i]),
                                      convexify)
        return 0.5 * (H + H.T)

    # ----- variable bounds ---------------------------------------------

    def variable_bounds(self):
        lay = self.layout
        n = self.grid.n_intervals
        lo = np.full(lay.n_vars, -np.inf)
        hi = np.full(lay.n_vars, np.inf)
        b = self.scn.bounds
        h_hi = min(max(_H_CEILING, 1.5 * max(self.scn.h0, self.scn.hf)),
                   0.9 * self.atm.max_height)
        # mirror the path bounds onto the variable box: keeps every inner
        # iterate inside the model domain (V > 0, cos(gamma) > 0, M < 1)
        state_lo = np.array([b.lower[1], b.lower[0], b.lower[2], -np.inf, -np.inf, 0.0])
        state_hi = np.array([b.upper[1], b.upper[0], b.upper[2], np.inf, np.inf, h_hi])
        for k in range(n + 1):
            i = lay.state_index(k, 0)
            lo[i:i + 6] = state_lo
            hi[i:i + 6] = state_hi
        ctrl_lo = np.array([b.lower[3], b.lower[4], b.lower[5]])
        ctrl_hi = np.array([b.upper[3], b.upper[4], b.upper[5]])
        for k in range(n):
            i = lay.control_index(k, 0)
            lo[i:i + 3] = ctrl_lo
            hi[i:i + 3] = ctrl_hi
        return lo, hi

    def f_scale(self) -> float:
        if self.scn.variant == "fuel":
            return 0.1 * self.model.C_SR * self.model.T0 * self.grid.duration
        return 1.0


def assemble(scn: "Scenario", grid: Grid | None = None,
             scheme: RkScheme | None = None,
             fuel_cap: float | None = None) -> NlpProblem:
    """Build the NLP for one scenario variant.

    `fuel_cap` is the absolute consumption bound in kg and is required
    for the noise_fuel_capped variant (the caller computes it from the
    fuel-reference trajectory).
    """
    scn.validate()
    grid = grid or Grid(0.0, scn.tf, scn.n_intervals)
    scheme = scheme or RkScheme.heun()
    if scn.variant == "noise_fuel_capped":
        if fuel_cap is None:
            raise ScenarioError("noise_fuel_capped variant needs a fuel_cap value")
    elif fuel_cap is not None:
        raise ScenarioError(f"fuel_cap is meaningless for variant {scn.variant!r}")
    tr = _Transcription(scn, grid, scheme, fuel_cap)
    lo, hi = tr.variable_bounds()
    ineq_lo, ineq_hi = tr.ineq_bounds()
    problem = NlpProblem(
        n_vars=tr.layout.n_vars,
        objective=tr.objective,
        objective_gradient=tr.objective_gradient,
        lower=lo,
        upper=hi,
        n_eq=tr.n_eq,
        equalities=tr.equalities,
        equalities_jacobian=tr.equalities_jacobian,
        n_ineq=tr.n_ineq,
        inequalities=tr.inequalities,
        inequalities_jacobian=tr.inequalities_jacobian,
        ineq_lower=ineq_lo,
        ineq_upper=ineq_hi,
        x_scale=tr.layout.variable_scale(),
        eq_scale=tr.eq_scale(),
        ineq_scale=tr.ineq_scale(),
        f_scale=tr.f_scale(),
        eq_sparsity=tr.eq_sparsity(),
        ineq_sparsity=tr.ineq_sparsity(),
        lagrangian_hessian=tr.lagrangian_hessian,
        reentrant=True,
    )
    problem.meta = {"layout": tr.layout, "grid": grid, "scheme": scheme,
                    "transcription": tr}
    return problem


def objective_and_gradient(problem: NlpProblem, w: np.ndarray):
    """Objective value and gradient at w (complex-step based)."""
    return problem.objective(w), problem.objective_gradient(w)


def constraint_jacobian(problem: NlpProblem, w: np.ndarray) -> np.ndarray:
    """Jacobian of all equality rows stacked over all inequality rows."""
    parts = []
    if problem.n_eq:
        parts.append(problem.equalities_jacobian(w))
    if problem.n_ineq:
        parts.append(problem.inequalities_jacobian(w))
    return np.vstack(parts) if parts else np.zeros((0, problem.n_vars))


def internode_violation(traj: noise.Trajectory, bounds_lower, bounds_upper,
                        model: AircraftModel, atm: Atmosphere = ISA,
                        refine: int = 10, scheme: RkScheme | None = None) -> float:
    """Max scaled path-constraint violation between grid nodes.

    Each interval is re-simulated from its own node state with `refine`
    substeps under the interval's control; the path components are
    checked at every substate.  Node values themselves are the NLP's
    responsibility and are not re-reported here.
    """
    lo = np.asarray(bounds_lower, dtype=float)
    hi = np.asarray(bounds_upper, dtype=float)
    h_sub = traj.dt / refine
    Z = traj.states[:-1].copy()
    U = traj.controls
    worst = 0.0
    for _ in range(refine):
        Z = rk_step_arrays(Z, U, h_sub, model, atm, scheme)
        rows = np.column_stack([Z[:, IGAMMA], Z[:, IV], Z[:, ICHI],
                                U[:, IALPHA], U[:, IDELTA_X], U[:, IMU]])
        over = (rows - hi) / PATH_SCALE
        under = (lo - rows) / PATH_SCALE
        worst = max(worst, float(np.max(np.maximum(over, under), initial=0.0)))
    return worst
