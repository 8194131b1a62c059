"""Algebraic model of 1-D arterial flow with a stenosed outlet.

Everything in this module is a pure, pointwise function of the state
(cross-sectional area A [m^2], mean speed V [m/s]) and an
:class:`ArteryParams` record.  All formulas accept numpy arrays for the
state arguments and broadcast elementwise; the finite-volume solver and
the linearized analysis are built on top of these primitives.

Two places in the governing relations are dimensionally ambiguous in the
source material, so both are mode-selected on :class:`ArteryParams`:

* ``friction_mode``: the wall-friction coefficient is either the raw
  ``8*pi*nu`` value (``"literal"``) or ``8*pi*nu/rho`` (``"kinematic"``,
  default), the only variant whose damping time scale is compatible with
  pulsatile flow over a heartbeat.
* ``stenosis_mode``: the quadratic pressure-loss factor of the outlet
  relation is ``Ks/rho`` (``"literal"``) or ``Ks*rho`` (``"dimensional"``,
  default), the only variant that produces a pressure of consequential
  magnitude at the throat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

FRICTION_MODES = ("literal", "kinematic")
STENOSIS_MODES = ("literal", "dimensional")


class DomainError(ValueError):
    """Raised when a state argument leaves the physically meaningful domain."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise DomainError(msg)


@dataclass(frozen=True)
class ArteryParams:
    """Physical and stenosis parameters of one artery segment.

    Attributes
    ----------
    L : float
        Segment length (m).
    r0 : float
        Reference lumen radius at rest (m).
    rho : float
        Blood density (kg m^-3).
    nu : float
        Blood viscosity parameter (Pa s).
    h : float
        Wall thickness (m).
    E : float
        Young's modulus of the wall (N m^-2).
    b : float
        Dimensionless elasticity shape constant.
    Ks : float
        Dimensionless stenosis loss constant.
    As : float
        Stenosis throat area (m^2); equals ``A0`` when there is no stenosis.
    RT : float
        Terminal resistance of the downstream network (N s m^-5).
    friction_mode, stenosis_mode : str
        See the module docstring.
    """

    L: float
    r0: float
    rho: float
    nu: float
    h: float
    E: float
    b: float
    Ks: float
    As: float
    RT: float
    friction_mode: str = "kinematic"
    stenosis_mode: str = "dimensional"

    def __post_init__(self):
        for name in ("L", "r0", "rho", "nu", "h", "E", "b", "Ks", "RT"):
            _require(getattr(self, name) > 0.0, f"{name} must be strictly positive")
        _require(0.0 < self.As <= self.A0 * (1.0 + 1e-12),
                 f"As must satisfy 0 < As <= A0, got As={self.As}, A0={self.A0}")
        _require(self.friction_mode in FRICTION_MODES,
                 f"friction_mode must be one of {FRICTION_MODES}")
        _require(self.stenosis_mode in STENOSIS_MODES,
                 f"stenosis_mode must be one of {STENOSIS_MODES}")

    # Derived constants are recomputed, never stored, so they can not drift
    # out of sync with the primitive fields.

    @property
    def A0(self) -> float:
        """Reference cross-sectional area at rest (m^2)."""
        return math.pi * self.r0 ** 2

    @property
    def beta(self) -> float:
        """Wall stiffness h*E*sqrt(pi)*b (N m^-1)."""
        return self.h * self.E * math.sqrt(math.pi) * self.b

    @property
    def Kr(self) -> float:
        """Wall-friction coefficient in the mode selected at construction."""
        raw = 8.0 * math.pi * self.nu
        return raw if self.friction_mode == "literal" else raw / self.rho

    @property
    def Ks_eff(self) -> float:
        """Stenosis pressure-loss factor in the selected mode (Pa s^2 m^-2)."""
        return self.Ks / self.rho if self.stenosis_mode == "literal" else self.Ks * self.rho

    @property
    def wave_coef(self) -> float:
        """Coefficient of A^(1/4) in the local wave speed: 0.5*sqrt(2*beta/(rho*A0))."""
        return 0.5 * math.sqrt(2.0 * self.beta / (self.rho * self.A0))

    @property
    def kappa(self) -> float:
        """Friction coupling constant of the Riemann-coordinate form."""
        return 4.0 ** 4.5 * self.Kr * self.beta ** 2 / (self.rho ** 2 * self.A0 ** 2)

    @property
    def rest_wave_speed(self) -> float:
        """Wave speed c(A0) at the rest state (m/s)."""
        return self.wave_speed(self.A0)

    def wave_speed(self, A):
        """Local wave speed c(A) = 0.5*sqrt(2*beta/(rho*A0)) * A^(1/4) (m/s)."""
        A = np.asarray(A, dtype=float)
        _require(np.all(A > 0.0), "wave_speed needs A > 0")
        return self.wave_coef * A ** 0.25

    def with_stenosis_radius(self, r_after: float) -> "ArteryParams":
        """Copy of these parameters with the throat radius set to ``r_after`` (m)."""
        _require(0.0 < r_after <= self.r0 * (1.0 + 1e-12),
                 "throat radius must lie in (0, r0]")
        return replace(self, As=min(math.pi * r_after ** 2, self.A0))


#: Abdominal-aorta segment used throughout the bundled scenarios.
def standard_artery(r_after_m: float | None = None,
                    friction_mode: str = "kinematic",
                    stenosis_mode: str = "dimensional") -> ArteryParams:
    """Clinical parameter set for a 6 cm abdominal aorta segment.

    ``r_after_m`` is the lumen radius immediately after the outlet (m);
    ``None`` means no stenosis (throat area equals the rest area).
    """
    p = ArteryParams(
        L=0.06,
        r0=0.0055,
        rho=1060.0,
        nu=0.0035,
        h=0.0005,
        E=4.0e5,
        b=4.0 / 3.0,
        Ks=1.52,
        As=math.pi * 0.0055 ** 2,
        RT=1.33e8,
        friction_mode=friction_mode,
        stenosis_mode=stenosis_mode,
    )
    if r_after_m is not None:
        p = p.with_stenosis_radius(r_after_m)
    return p


@dataclass(frozen=True)
class StatePoint:
    """Pointwise physical state: area A (m^2) and mean speed V (m/s)."""

    A: float
    V: float

    @property
    def Q(self) -> float:
        """Volumetric flow A*V (m^3/s)."""
        return self.A * self.V


@dataclass(frozen=True)
class RiemannPoint:
    """Pointwise Riemann coordinates: forward invariant u, backward invariant v (m/s)."""

    u: float
    v: float


# ---------------------------------------------------------------------------
# pressure law and characteristic structure
# ---------------------------------------------------------------------------

def pressure(A, p: ArteryParams):
    """Transmural pressure (beta/A0)*(sqrt(A) - sqrt(A0)) in Pa.

    Strictly increasing in A; zero at the rest area.
    """
    A = np.asarray(A, dtype=float)
    _require(np.all(A > 0.0), "pressure needs A > 0")
    return p.beta / p.A0 * (np.sqrt(A) - math.sqrt(p.A0))


def char_speeds(s: StatePoint, p: ArteryParams):
    """Characteristic speeds (lambda1, lambda2) = (V + c(A), V - c(A)) in m/s."""
    c = p.wave_speed(s.A)
    return s.V + c, s.V - c


def in_subcritical_domain(s: StatePoint, p: ArteryParams) -> bool:
    """True iff A > 0, V > 0 and V < c(A) (strict subcritical forward flow)."""
    if not s.A > 0.0:
        return False
    return 0.0 < s.V < p.wave_speed(s.A)


# ---------------------------------------------------------------------------
# Riemann coordinate transform and its inverse
# ---------------------------------------------------------------------------

def riemann_from_state(A, V, p: ArteryParams):
    """Arrays (u, v) of Riemann coordinates for arrays (A, V)."""
    A = np.asarray(A, dtype=float)
    V = np.asarray(V, dtype=float)
    _require(np.all(A > 0.0), "riemann transform needs A > 0")
    four_c = 4.0 * p.wave_coef * A ** 0.25
    return V + four_c, V - four_c


def state_from_riemann(u, v, p: ArteryParams):
    """Arrays (A, V) recovered from Riemann coordinate arrays (u, v)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _require(np.all(u > v), "inverse riemann transform needs u > v")
    A = p.rho ** 2 * p.A0 ** 2 / (4.0 ** 5 * p.beta ** 2) * (u - v) ** 4
    return A, 0.5 * (u + v)


def to_riemann(s: StatePoint, p: ArteryParams) -> RiemannPoint:
    u, v = riemann_from_state(s.A, s.V, p)
    return RiemannPoint(float(u), float(v))


def from_riemann(r: RiemannPoint, p: ArteryParams) -> StatePoint:
    A, V = state_from_riemann(r.u, r.v, p)
    return StatePoint(float(A), float(V))


# ---------------------------------------------------------------------------
# conservative form: flux and friction source
# ---------------------------------------------------------------------------

def conservative_flux(A, Q, p: ArteryParams):
    """Flux (F1, F2) of the conservative (A, Q) system.

    F1 = Q and F2 = Q^2/A + beta/(3*rho*A0) * A^(3/2).
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    _require(np.all(A > 0.0), "conservative_flux needs A > 0")
    return Q, Q * Q / A + p.beta / (3.0 * p.rho * p.A0) * A ** 1.5


def friction_source(A, Q, p: ArteryParams):
    """Friction source (0, Kr*Q/A); enters the balance law with a plus sign,
    i.e. it drains momentum for forward flow."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    _require(np.all(A > 0.0), "friction_source needs A > 0")
    return np.zeros_like(Q), p.Kr * Q / A


# ---------------------------------------------------------------------------
# quasilinear Riemann-coordinate form
# ---------------------------------------------------------------------------

def quasilinear_coeffs(r: RiemannPoint, p: ArteryParams):
    """Coefficients (F, G) of the quasilinear system in Riemann coordinates.

    F is the diagonal transport matrix diag((5u+3v)/8, (3u+5v)/8) and
    G = (f1, f1) with f1 = kappa*(u+v)/(u-v)^4 the friction coupling.
    """
    _require(r.u > r.v, "quasilinear_coeffs needs u > v")
    F = np.diag([(5.0 * r.u + 3.0 * r.v) / 8.0, (3.0 * r.u + 5.0 * r.v) / 8.0])
    f1 = p.kappa * (r.u + r.v) / (r.u - r.v) ** 4
    return F, np.array([f1, f1])


# ---------------------------------------------------------------------------
# outlet (stenosis) relation, in physical and Riemann variables
# ---------------------------------------------------------------------------

def pressure_drop(s: StatePoint, p: ArteryParams) -> float:
    """Pressure drop across the outlet: P(A) - RT*A*V (Pa)."""
    return float(pressure(s.A, p)) - p.RT * s.A * s.V


def outlet_residual(s: StatePoint, p: ArteryParams) -> float:
    """Residual of the outlet boundary relation at x = L (Pa).

    P(A) - RT*A*V - Ks_eff*V^2*(A/As - 1)^2; admissible boundary states
    make this exactly zero.
    """
    loss = p.Ks_eff * s.V ** 2 * (s.A / p.As - 1.0) ** 2
    return pressure_drop(s, p) - loss


def stenosis_percent(r_after, p: ArteryParams):
    """Severity 100*(A0 - pi*r_after^2)/A0 for a throat radius in meters."""
    r_after = np.asarray(r_after, dtype=float)
    _require(np.all(r_after > 0.0), "throat radius must be positive")
    _require(np.all(r_after <= p.r0 * (1.0 + 1e-12)),
             "throat radius above the rest radius would be a negative stenosis")
    return 100.0 * (p.A0 - math.pi * r_after ** 2) / p.A0


def riemann_inlet_flow(u, v, p: ArteryParams):
    """Inlet flow A*V expressed in Riemann coordinates (m^3/s).

    Equals rho^2*A0^2/(4^(11/2)*beta^2) * (u+v)*(u-v)^4; the inlet boundary
    condition is this expression pinned to the prescribed inflow.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    coef = p.rho ** 2 * p.A0 ** 2 / (4.0 ** 5.5 * p.beta ** 2)
    return coef * (u + v) * (u - v) ** 4


def riemann_inlet_flow_grad(u, v, p: ArteryParams):
    """Analytic partials (d/du, d/dv) of :func:`riemann_inlet_flow`."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    coef = p.rho ** 2 * p.A0 ** 2 / (4.0 ** 5.5 * p.beta ** 2)
    du = coef * (u - v) ** 3 * (5.0 * u + 3.0 * v)
    dv = coef * (u - v) ** 3 * (-3.0 * u - 5.0 * v)
    return du, dv


def _outlet_coefs(p: ArteryParams):
    d1 = p.RT * p.rho ** 2 * p.A0 ** 2 / (4.0 ** 3 * p.beta ** 2)
    d2 = p.rho ** 2 * p.A0 ** 2 / (4.0 ** 5 * p.beta ** 2 * p.As)
    ks8 = 8.0 * p.Ks_eff
    return d1, d2, ks8


def riemann_outlet_constraint(u, v, p: ArteryParams):
    """Outlet relation mapped to Riemann coordinates (32 x the Pa residual).

    Derived by substituting the inverse transform into the physical outlet
    relation and scaling by 32:

        rho*(u-v)^2 - 32*beta/sqrt(A0) - d1*(u-v)^4*(u+v)
            - 8*Ks_eff*(u+v)^2*(d2*(u-v)^4 - 1)^2

    with d1 = RT*rho^2*A0^2/(64*beta^2) and d2 = rho^2*A0^2/(1024*beta^2*As).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    d1, d2, ks8 = _outlet_coefs(p)
    w = u - v
    s = u + v
    return (p.rho * w ** 2 - 32.0 * p.beta / math.sqrt(p.A0)
            - d1 * w ** 4 * s - ks8 * s ** 2 * (d2 * w ** 4 - 1.0) ** 2)


def riemann_outlet_grad(u, v, p: ArteryParams):
    """Analytic partials (dG/du, dG/dv) of :func:`riemann_outlet_constraint`."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    d1, d2, ks8 = _outlet_coefs(p)
    w = u - v
    s = u + v
    gate = d2 * w ** 4 - 1.0
    # d/du with w_u = 1, s_u = 1 and d/dv with w_v = -1, s_v = 1.
    dw = 2.0 * p.rho * w - 4.0 * d1 * w ** 3 * s - ks8 * s ** 2 * 2.0 * gate * 4.0 * d2 * w ** 3
    ds = -d1 * w ** 4 - ks8 * 2.0 * s * gate ** 2
    return dw + ds, -dw + ds
