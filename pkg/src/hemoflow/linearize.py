"""Time-varying linearization of the flow model about a stored reference.

The nonlinear Riemann-coordinate system is linearized about a reference
trajectory (u*, v*)(x, t), yielding a linear hyperbolic system for the error
variables with a diagonal transport matrix, a full 2x2 zeroth-order coupling
matrix, and scalar reflection coefficients at both boundaries:

    inlet:  e_u(0, t) = -a(t) e_v(0, t)
    outlet: e_v(L, t) = -b(t) e_u(L, t)

``build_reference`` converts a solver trajectory into the sampled reference
fields; the coefficient builders are pure transformations of those fields.
An explicit upwind integrator for the linear error system is included for
consistency checks against the nonlinear solver; the stability analysis
itself only evaluates the coefficient fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model
from .model import ArteryParams
from .solver import Trajectory


class LinearizationError(ValueError):
    """Raised for references outside the admissible domain."""


@dataclass
class ReferenceTrajectory:
    """Riemann-coordinate reference fields sampled on (t, x).

    ``u``/``v`` are (nt, nx) cell-center fields, ``ux``/``vx`` their spatial
    derivatives (central differences, one-sided at the ends), and the
    boundary traces are the ghost-consistent states at x = 0 and x = L.
    """

    times: np.ndarray
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    ux: np.ndarray
    vx: np.ndarray
    inlet_u: np.ndarray
    inlet_v: np.ndarray
    outlet_u: np.ndarray
    outlet_v: np.ndarray

    @property
    def L(self) -> float:
        return float(self.x[-1] + 0.5 * (self.x[1] - self.x[0]))


@dataclass
class LinearCoeffs:
    """Sampled coefficients of the linearized error system.

    lam1/lam2 are the diagonal transport speeds over (t, x); lam1_x/lam2_x
    their spatial derivatives; g11..g22 the coupling matrix entries; the
    *_trace arrays hold boundary data over t (transport speeds evaluated at
    the ghost-consistent boundary states and the reflection coefficients).
    """

    times: np.ndarray
    x: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    lam1_x: np.ndarray
    lam2_x: np.ndarray
    g11: np.ndarray
    g12: np.ndarray
    g21: np.ndarray
    g22: np.ndarray
    a_trace: np.ndarray
    b_trace: np.ndarray
    inlet_lam1: np.ndarray
    inlet_lam2: np.ndarray
    outlet_lam1: np.ndarray
    outlet_lam2: np.ndarray
    degenerate_outlet: np.ndarray
    L: float


def _central_derivative(field: np.ndarray, dx: float) -> np.ndarray:
    """Second-order central differences along the last axis, one-sided ends."""
    out = np.empty_like(field)
    out[..., 1:-1] = (field[..., 2:] - field[..., :-2]) / (2.0 * dx)
    out[..., 0] = (field[..., 1] - field[..., 0]) / dx
    out[..., -1] = (field[..., -1] - field[..., -2]) / dx
    return out


def build_reference(traj: Trajectory, p: ArteryParams,
                    domain_slack: float = 0.0) -> ReferenceTrajectory:
    """Convert a stored trajectory to Riemann-coordinate reference fields.

    Every stored cell state must lie in the subcritical domain (forward,
    subsonic flow); ``domain_slack`` relaxes the V > 0 check by a fraction of
    the rest wave speed for references that graze the rest state.
    """
    if len(traj.snapshots) < 2:
        raise LinearizationError("reference needs at least two stored snapshots")
    dx = traj.grid.dx
    times = traj.times
    A = np.array([s.A for s in traj.snapshots])
    Q = np.array([s.Q for s in traj.snapshots])
    V = Q / A
    c = p.wave_speed(A)
    v_floor = -domain_slack * p.rest_wave_speed
    if np.any(A <= 0.0) or np.any(V < v_floor) or np.any(V >= c):
        raise LinearizationError(
            "reference trajectory leaves the subcritical domain")
    u, v = model.riemann_from_state(A, V, p)
    gi = np.array([(s.inlet_state.A, s.inlet_state.V) for s in traj.snapshots])
    go = np.array([(s.outlet_state.A, s.outlet_state.V) for s in traj.snapshots])
    iu, iv = model.riemann_from_state(gi[:, 0], gi[:, 1], p)
    ou, ov = model.riemann_from_state(go[:, 0], go[:, 1], p)
    return ReferenceTrajectory(
        times=times, x=traj.grid.centers, u=u, v=v,
        ux=_central_derivative(u, dx), vx=_central_derivative(v, dx),
        inlet_u=iu, inlet_v=iv, outlet_u=ou, outlet_v=ov)


def lambda_field(ref: ReferenceTrajectory):
    """Diagonal transport speeds ((5u*+3v*)/8, (3u*+5v*)/8) over (t, x)."""
    lam1 = (5.0 * ref.u + 3.0 * ref.v) / 8.0
    lam2 = (3.0 * ref.u + 5.0 * ref.v) / 8.0
    return lam1, lam2


def gamma_field(ref: ReferenceTrajectory, p: ArteryParams):
    """Coupling matrix entries (g11, g12, g21, g22) over (t, x).

    Rows combine the transport-matrix sensitivity acting on the reference
    gradients with the friction Jacobian:

        g11 = 5/8 u*_x - kappa (3u*+5v*)/(u*-v*)^5
        g12 = 3/8 u*_x + kappa (5u*+3v*)/(u*-v*)^5
        g21 = 3/8 v*_x - kappa (3u*+5v*)/(u*-v*)^5
        g22 = 5/8 v*_x + kappa (5u*+3v*)/(u*-v*)^5
    """
    w = ref.u - ref.v
    if np.any(w <= 0.0):
        raise LinearizationError("reference needs u* > v* everywhere")
    k_minus = p.kappa * (3.0 * ref.u + 5.0 * ref.v) / w ** 5
    k_plus = p.kappa * (5.0 * ref.u + 3.0 * ref.v) / w ** 5
    g11 = 0.625 * ref.ux - k_minus
    g12 = 0.375 * ref.ux + k_plus
    g21 = 0.375 * ref.vx - k_minus
    g22 = 0.625 * ref.vx + k_plus
    return g11, g12, g21, g22


def inlet_reflection(ref: ReferenceTrajectory):
    """Inlet reflection a(t) = -(3u*+5v*)/(5u*+3v*) at the x = 0 trace."""
    denom = 5.0 * ref.inlet_u + 3.0 * ref.inlet_v
    if np.any(denom == 0.0):
        raise LinearizationError("degenerate inlet trace: forward speed vanishes")
    return -(3.0 * ref.inlet_u + 5.0 * ref.inlet_v) / denom


#: Relative threshold below which the outlet linearization is flagged
#: degenerate: |dG/dv| < DEGENERATE_RTOL * |dG/du|.
DEGENERATE_RTOL = 1e-12


def outlet_reflection(ref: ReferenceTrajectory, p: ArteryParams):
    """Outlet reflection b(t) = (dG/du)/(dG/dv) at the x = L trace.

    G is the Riemann-coordinate outlet constraint with analytic partials.
    Samples with |dG/dv| below ``DEGENERATE_RTOL`` * |dG/du| cannot be
    linearized; they are returned as NaN together with a boolean mask
    (b_trace, degenerate_mask).
    """
    gu, gv = model.riemann_outlet_grad(ref.outlet_u, ref.outlet_v, p)
    degenerate = np.abs(gv) < DEGENERATE_RTOL * np.abs(gu)
    safe = np.where(degenerate, 1.0, gv)
    b = np.where(degenerate, np.nan, gu / safe)
    return b, degenerate


def build_linear_coeffs(ref: ReferenceTrajectory, p: ArteryParams) -> LinearCoeffs:
    """All coefficient fields and boundary traces in one container."""
    lam1, lam2 = lambda_field(ref)
    g11, g12, g21, g22 = gamma_field(ref, p)
    dx = float(ref.x[1] - ref.x[0])
    b_trace, degenerate = outlet_reflection(ref, p)
    return LinearCoeffs(
        times=ref.times, x=ref.x,
        lam1=lam1, lam2=lam2,
        lam1_x=(5.0 * ref.ux + 3.0 * ref.vx) / 8.0,
        lam2_x=(3.0 * ref.ux + 5.0 * ref.vx) / 8.0,
        g11=g11, g12=g12, g21=g21, g22=g22,
        a_trace=inlet_reflection(ref),
        b_trace=b_trace,
        inlet_lam1=(5.0 * ref.inlet_u + 3.0 * ref.inlet_v) / 8.0,
        inlet_lam2=(3.0 * ref.inlet_u + 5.0 * ref.inlet_v) / 8.0,
        outlet_lam1=(5.0 * ref.outlet_u + 3.0 * ref.outlet_v) / 8.0,
        outlet_lam2=(3.0 * ref.outlet_u + 5.0 * ref.outlet_v) / 8.0,
        degenerate_outlet=degenerate,
        L=ref.L)


# ---------------------------------------------------------------------------
# explicit integrator for the linear error system (consistency checks only)
# ---------------------------------------------------------------------------

class _NodeInterpolant:
    """Reference coefficients resampled onto a node grid, linear in time.

    The boundary traces provide exact endpoint values at x = 0 and x = L, so
    the node resampling is interpolation throughout the domain.
    """

    def __init__(self, ref: ReferenceTrajectory, coeffs: LinearCoeffs, nodes: np.ndarray):
        L = coeffs.L
        x_full = np.concatenate([[0.0], ref.x, [L]])
        self.times = coeffs.times

        def resample(field, left, right):
            full = np.hstack([left[:, None], field, right[:, None]])
            return np.array([np.interp(nodes, x_full, row) for row in full])

        self.lam1 = resample(coeffs.lam1, coeffs.inlet_lam1, coeffs.outlet_lam1)
        self.lam2 = resample(coeffs.lam2, coeffs.inlet_lam2, coeffs.outlet_lam2)
        g_bound = {}
        for name in ("g11", "g12", "g21", "g22"):
            field = getattr(coeffs, name)
            g_bound[name] = resample(field, field[:, 0], field[:, -1])
        self.g11, self.g12 = g_bound["g11"], g_bound["g12"]
        self.g21, self.g22 = g_bound["g21"], g_bound["g22"]
        self.a = coeffs.a_trace
        self.b = coeffs.b_trace

    def at(self, t: float):
        """Linear-in-time blend of all node fields at time t."""
        times = self.times
        i = int(np.searchsorted(times, t, side="right")) - 1
        i = min(max(i, 0), len(times) - 2)
        w = (t - times[i]) / (times[i + 1] - times[i])
        w = min(max(w, 0.0), 1.0)

        def blend(f):
            return (1.0 - w) * f[i] + w * f[i + 1]

        return (blend(self.lam1), blend(self.lam2), blend(self.g11),
                blend(self.g12), blend(self.g21), blend(self.g22),
                (1.0 - w) * self.a[i] + w * self.a[i + 1],
                (1.0 - w) * self.b[i] + w * self.b[i + 1])


def _upwind_gradient_forward(e: np.ndarray, h: float) -> np.ndarray:
    """d/dx for a rightward-moving field (backward-biased, 2nd order)."""
    g = np.empty_like(e)
    g[2:] = (3.0 * e[2:] - 4.0 * e[1:-1] + e[:-2]) / (2.0 * h)
    g[1] = (e[1] - e[0]) / h
    g[0] = (e[1] - e[0]) / h
    return g


def _upwind_gradient_backward(e: np.ndarray, h: float) -> np.ndarray:
    """d/dx for a leftward-moving field (forward-biased, 2nd order)."""
    g = np.empty_like(e)
    g[:-2] = (-3.0 * e[:-2] + 4.0 * e[1:-1] - e[2:]) / (2.0 * h)
    g[-2] = (e[-1] - e[-2]) / h
    g[-1] = (e[-1] - e[-2]) / h
    return g


def integrate_error_system(ref: ReferenceTrajectory, p: ArteryParams,
                           eu0, ev0, t_end: float, nodes: int = 640,
                           cfl: float = 0.4, record_interval: float = 2.5e-3):
    """Integrate the linear error system on a node grid over [0, t_end].

    ``eu0``/``ev0`` are callables of x giving the initial error profiles.
    Second-order upwind-biased differences with Heun time stepping; boundary
    values are closed by the reflection relations after every stage.  Returns
    (record times, x nodes, eu history, ev history).
    """
    coeffs = build_linear_coeffs(ref, p)
    if bool(np.any(coeffs.degenerate_outlet)):
        raise LinearizationError("degenerate outlet reflection in the reference")
    L = coeffs.L
    x = np.linspace(0.0, L, nodes + 1)
    h = x[1] - x[0]
    interp = _NodeInterpolant(ref, coeffs, x)
    speed_cap = max(float(np.max(np.abs(coeffs.lam1))),
                    float(np.max(np.abs(coeffs.lam2))),
                    float(np.max(np.abs(coeffs.inlet_lam1))),
                    float(np.max(np.abs(coeffs.outlet_lam1))))
    dt = cfl * h / speed_cap
    nsteps = int(math.ceil(t_end / dt))
    dt = t_end / nsteps
    every = max(1, int(round(record_interval / dt)))

    eu = np.asarray(eu0(x), dtype=float).copy()
    ev = np.asarray(ev0(x), dtype=float).copy()

    def apply_bcs(eu, ev, a_t, b_t):
        eu[0] = -a_t * ev[0]
        ev[-1] = -b_t * eu[-1]

    def rhs(eu, ev, at_t):
        lam1, lam2, g11, g12, g21, g22, _, _ = at_t
        deu = -lam1 * _upwind_gradient_forward(eu, h) - (g11 * eu + g12 * ev)
        dev = -lam2 * _upwind_gradient_backward(ev, h) - (g21 * eu + g22 * ev)
        return deu, dev

    at0 = interp.at(0.0)
    apply_bcs(eu, ev, at0[6], at0[7])
    times = [0.0]
    eu_hist = [eu.copy()]
    ev_hist = [ev.copy()]
    t = 0.0
    for k in range(1, nsteps + 1):
        at_t = interp.at(t)
        at_t1 = interp.at(t + dt)
        k1u, k1v = rhs(eu, ev, at_t)
        pu, pv = eu + dt * k1u, ev + dt * k1v
        apply_bcs(pu, pv, at_t1[6], at_t1[7])
        k2u, k2v = rhs(pu, pv, at_t1)
        eu = eu + 0.5 * dt * (k1u + k2u)
        ev = ev + 0.5 * dt * (k1v + k2v)
        apply_bcs(eu, ev, at_t1[6], at_t1[7])
        t += dt
        if k % every == 0 or k == nsteps:
            times.append(t)
            eu_hist.append(eu.copy())
            ev_hist.append(ev.copy())
    return np.array(times), x, np.array(eu_hist), np.array(ev_hist)
