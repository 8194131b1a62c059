"""Numerical verification of the boundary-stability conditions.

For a weighted-L2 functional with weight P(x) = diag(p1 e^{-mu x},
p2 e^{mu x}), exponential decay of the linearized error system is certified
by three sampled conditions:

1. inlet ratio:      |lam2(0,t)| / lam1(0,t) <= p2/p1
2. outlet reflection: e^{2 mu L} * (p2 |lam2(L,t)| / (p1 lam1(L,t))) * b(t)^2 <= 1
3. interior matrix:  R(x,t) = P*Gamma + Gamma^T*P - P'*Lambda - P*Lambda_x
                     positive semidefinite on the whole sample grid.

The certified decay rate is min lambda_min(R) / max_x lambda_max(P).  All
checks are grid-verified on the stored (t, x) samples; nothing is claimed
between samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linearize import LinearCoeffs

#: Default exponential-weight search grid (m^-1), log-spaced.
DEFAULT_MU_GRID = tuple(np.geomspace(1e-3, 50.0, 40))


@dataclass(frozen=True)
class LyapunovParams:
    """Analysis constants: diagonal weights p1, p2 and exponential rate mu."""

    p1: float
    p2: float
    mu: float

    def __post_init__(self):
        if self.p1 <= 0.0 or self.p2 <= 0.0:
            raise ValueError("p1 and p2 must be positive")
        if self.mu <= 0.0:
            raise ValueError("mu must be positive")


def weight_matrix(x, lp: LyapunovParams):
    """Diagonal weight P(x) and its derivative dP/dx.

    Returns (P1, P2, dP1, dP2) elementwise over x, with P1 = p1 e^{-mu x}
    and P2 = p2 e^{mu x}.
    """
    x = np.asarray(x, dtype=float)
    P1 = lp.p1 * np.exp(-lp.mu * x)
    P2 = lp.p2 * np.exp(lp.mu * x)
    return P1, P2, -lp.mu * P1, lp.mu * P2


def symmetric_eigvals(a, b, c):
    """Eigenvalues (min, max) of the symmetric 2x2 [[a, b], [b, c]]."""
    mean = 0.5 * (np.asarray(a) + np.asarray(c))
    radius = np.sqrt((0.5 * (np.asarray(a) - np.asarray(c))) ** 2 + np.asarray(b) ** 2)
    return mean - radius, mean + radius


def r_matrix_field(coeffs: LinearCoeffs, lp: LyapunovParams):
    """Entries (r11, r12, r22) of the symmetric decay matrix over (t, x).

    The off-diagonal blocks of P*Gamma + Gamma^T*P are symmetric by
    construction and the weight/transport corrections are diagonal, so the
    analytic entries are already the symmetrized matrix.
    """
    P1, P2, _, _ = weight_matrix(coeffs.x, lp)
    r11 = P1 * (2.0 * coeffs.g11 + lp.mu * coeffs.lam1 - coeffs.lam1_x)
    r22 = P2 * (2.0 * coeffs.g22 - lp.mu * coeffs.lam2 - coeffs.lam2_x)
    r12 = P1 * coeffs.g12 + P2 * coeffs.g21
    return r11, r12, r22


def r_matrix(ix: int, it: int, coeffs: LinearCoeffs, lp: LyapunovParams) -> np.ndarray:
    """The 2x2 decay matrix at sample indices (ix, it)."""
    r11, r12, r22 = r_matrix_field(coeffs, lp)
    return np.array([[r11[it, ix], r12[it, ix]], [r12[it, ix], r22[it, ix]]])


@dataclass
class ConditionReport:
    """Sampled margins of the three stability conditions and the estimate.

    Margins are nonnegative exactly when the corresponding condition holds:
    ``inlet_margin`` is p2/p1 - |lam2(0,t)|/lam1(0,t), ``outlet_margin`` is
    1 - e^{2 mu L} (p2 |lam2(L,t)| / (p1 lam1(L,t))) b(t)^2 (NaN where the
    outlet linearization is degenerate), and ``min_eig_by_time`` is the
    x-minimum of lambda_min(R).
    """

    params: LyapunovParams
    times: np.ndarray
    inlet_margin: np.ndarray
    outlet_margin: np.ndarray
    min_eig_by_time: np.ndarray
    min_eig: float
    max_abs_eig: float
    weight_max: float
    weight_min: float
    feasible: bool
    first_violation: dict = field(default_factory=dict)
    degenerate_times: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def decay_rate(self) -> float | None:
        return decay_rate_estimate(self)


def check_conditions(coeffs: LinearCoeffs, lp: LyapunovParams) -> ConditionReport:
    """Evaluate all three conditions on the stored sample grid."""
    times = coeffs.times
    inlet_margin = lp.p2 / lp.p1 - np.abs(coeffs.inlet_lam2) / coeffs.inlet_lam1

    growth = math.exp(2.0 * lp.mu * coeffs.L)
    ratio = lp.p2 * np.abs(coeffs.outlet_lam2) / (lp.p1 * coeffs.outlet_lam1)
    outlet_margin = 1.0 - growth * ratio * coeffs.b_trace ** 2
    degenerate = coeffs.degenerate_outlet
    outlet_margin = np.where(degenerate, np.nan, outlet_margin)

    r11, r12, r22 = r_matrix_field(coeffs, lp)
    eig_min, eig_max = symmetric_eigvals(r11, r12, r22)
    min_eig_by_time = np.min(eig_min, axis=1)
    min_eig = float(np.min(eig_min))
    max_abs_eig = float(max(np.max(np.abs(eig_min)), np.max(np.abs(eig_max))))

    weight_max = max(lp.p1, lp.p2 * math.exp(lp.mu * coeffs.L))
    weight_min = min(lp.p1 * math.exp(-lp.mu * coeffs.L), lp.p2)

    valid_outlet = outlet_margin[~degenerate]
    feasible = (bool(np.all(inlet_margin >= 0.0))
                and bool(np.all(valid_outlet >= 0.0))
                and min_eig >= 0.0)

    def first_bad(margins) -> float | None:
        bad = np.nonzero(np.asarray(margins) < 0.0)[0]
        return float(times[bad[0]]) if len(bad) else None

    report = ConditionReport(
        params=lp,
        times=times,
        inlet_margin=inlet_margin,
        outlet_margin=outlet_margin,
        min_eig_by_time=min_eig_by_time,
        min_eig=min_eig,
        max_abs_eig=max_abs_eig,
        weight_max=weight_max,
        weight_min=weight_min,
        feasible=feasible,
        first_violation={
            "inlet_ratio": first_bad(inlet_margin),
            "outlet_reflection": first_bad(np.nan_to_num(outlet_margin, nan=1.0)),
            "interior_matrix": first_bad(min_eig_by_time),
        },
        degenerate_times=times[degenerate],
    )
    return report


def decay_rate_estimate(report: ConditionReport) -> float | None:
    """Certified decay rate min lambda_min(R) / max_x lambda_max(P).

    None (no estimate) when the report is infeasible.
    """
    if not report.feasible:
        return None
    return report.min_eig / report.weight_max


@dataclass
class MuSearchResult:
    mu: float
    score: float
    report: ConditionReport
    candidates: np.ndarray
    scores: np.ndarray


def normalized_margins(report: ConditionReport) -> tuple[float, float, float]:
    """Scale-free worst-case margins of the three conditions.

    The inlet and outlet margins are normalized to 1 at perfect slack; the
    matrix margin is the worst eigenvalue over the grid divided by the
    largest eigenvalue magnitude, so all three are dimensionless and a
    negative value means the condition fails somewhere.
    """
    lp = report.params
    n_inlet = float(np.min(report.inlet_margin)) / (lp.p2 / lp.p1)
    valid = report.outlet_margin[~np.isnan(report.outlet_margin)]
    n_outlet = float(np.min(valid)) if len(valid) else -math.inf
    scale = report.max_abs_eig if report.max_abs_eig > 0.0 else 1.0
    n_matrix = report.min_eig / scale
    return n_inlet, n_outlet, n_matrix


def search_mu(coeffs: LinearCoeffs, p1: float, p2: float,
              mu_grid=DEFAULT_MU_GRID) -> MuSearchResult:
    """Pick the exponential rate maximizing the worst normalized margin.

    Deterministic tie-break: the smallest mu attaining the best score.  With
    an empty feasible set the best-effort mu (least-negative score) is still
    returned; its report is marked infeasible.
    """
    candidates = np.asarray(sorted(mu_grid), dtype=float)
    if len(candidates) == 0 or np.any(candidates <= 0.0) or not np.all(np.isfinite(candidates)):
        raise ValueError("mu grid must be positive and finite")
    best = None
    scores = np.empty(len(candidates))
    for i, mu in enumerate(candidates):
        report = check_conditions(coeffs, LyapunovParams(p1, p2, float(mu)))
        score = min(normalized_margins(report))
        scores[i] = score
        if best is None or score > best.score:
            best = MuSearchResult(float(mu), float(score), report,
                                  candidates, scores)
    best.candidates = candidates
    best.scores = scores
    return best
