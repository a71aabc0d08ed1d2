"""Blow-up coordinates, charts, chart transitions, and closed-form slow flows.

The degenerate point (mu, eps) = (0, 0) of the slow parameter plane is blown
up to a half-circle: a state is written as

    u = r * psi,        mu = r^2 * mu_bar,        eps = r^(2+beta) * eps_bar,

with (mu_bar, eps_bar) on the unit circle, eps_bar >= 0, and r >= 0 the
distance from the bifurcation point.  Spatial and temporal derivatives are
desingularized as d/dx -> r d/dxbar (unbounded directions only) and
d/dt -> r^beta d/dtbar.

Computations happen in three local charts:

* K1 (mu_bar = -1): the approach regime, coordinates (r1, eps1);
* K2 (eps_bar = +1): the passage regime, coordinates (r2, mu2);
* K3 (mu_bar = +1): the departure regime, coordinates (r3, eps3).

In each chart the slow variables obey a closed-form flow:

    K1:  r1' = -r1*eps1/2,  eps1' = (2+beta)/2 * eps1^2
         (finite-time blow-up of eps1 at t1 = 2/((2+beta)*eps1(0)))
    K2:  r2' = 0,           mu2'  = 1
    K3:  r3' = +r3*eps3/2,  eps3' = -(2+beta)/2 * eps3^2

The transition maps kappa12 (K2 -> K1 for mu2 < 0) and kappa23 (K3 -> K2 for
eps3 > 0) change chart coordinates and rescale the amplitude; their inverses
kappa21/kappa32 are used when a trajectory crosses from the approach side to
the passage and departure sides.

Everything here is exact closed-form arithmetic; no ODE integration happens
in this module.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

__all__ = [
    "Chart",
    "BlowUpPoint",
    "ChartPoint",
    "blowup_to_params",
    "params_to_blowup",
    "chart_from_global",
    "kappa12",
    "kappa23",
    "kappa21",
    "kappa32",
    "slow_flow_eval",
    "blowup_time",
    "chart_ode_rhs",
    "next_chart",
]

_CIRCLE_TOL = 1e-12


class Chart(enum.IntEnum):
    """The three local charts on the blown-up half-circle."""

    K1 = 1  # mu_bar = -1 (approach)
    K2 = 2  # eps_bar = 1 (passage)
    K3 = 3  # mu_bar = +1 (departure)


@dataclass(frozen=True)
class BlowUpPoint:
    """A point in global blown-up coordinates (r, mu_bar, eps_bar; beta)."""

    r: float
    mu_bar: float
    eps_bar: float
    beta: int

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"blow-up radius must be nonnegative, got r={self.r}")
        if self.eps_bar < 0:
            raise ValueError(
                f"only the eps >= 0 half-circle is physical, got eps_bar={self.eps_bar}"
            )
        if self.beta < 1:
            raise ValueError(f"beta must be a positive integer, got {self.beta}")
        norm_err = abs(self.mu_bar**2 + self.eps_bar**2 - 1.0)
        if norm_err > _CIRCLE_TOL:
            raise ValueError(
                "(mu_bar, eps_bar) must lie on the unit circle: "
                f"|mu_bar^2 + eps_bar^2 - 1| = {norm_err:.3e} > {_CIRCLE_TOL}"
            )


@dataclass(frozen=True)
class ChartPoint:
    """Chart coordinates: (r1, eps1) in K1, (r2, mu2) in K2, (r3, eps3) in K3.

    ``slow`` holds eps1, mu2 or eps3 depending on ``chart``.
    """

    chart: Chart
    r: float
    slow: float
    beta: int

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"chart radius must be nonnegative, got r={self.r}")
        if self.beta < 1:
            raise ValueError(f"beta must be a positive integer, got {self.beta}")
        if self.chart in (Chart.K1, Chart.K3) and self.slow < 0:
            name = "eps1" if self.chart == Chart.K1 else "eps3"
            raise ValueError(
                f"{name} must be nonnegative in the physical regime, got {self.slow}"
            )


# ---------------------------------------------------------------------------
# global blow-up map and its inverse
# ---------------------------------------------------------------------------

def blowup_to_params(p: BlowUpPoint) -> tuple[float, float]:
    """Map a blown-up point to the original parameters (mu, eps)."""
    return p.r**2 * p.mu_bar, p.r ** (2 + p.beta) * p.eps_bar


def params_to_blowup(mu: float, eps: float, beta: int) -> BlowUpPoint:
    """Invert the blow-up map: find the unique (r > 0, mu_bar, eps_bar).

    Solves (mu/r^2)^2 + (eps/r^(2+beta))^2 = 1 for r by bisection; the left
    side is strictly decreasing in r, so the root is unique.  The degenerate
    input (0, 0) is rejected: its preimage is the whole half-circle.
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if mu == 0.0 and eps == 0.0:
        raise ValueError(
            "(mu, eps) = (0, 0) has no unique blow-up preimage (it maps to the "
            "whole half-circle); refusing to invert"
        )
    if eps == 0.0:
        r = math.sqrt(abs(mu))
        return BlowUpPoint(r=r, mu_bar=math.copysign(1.0, mu), eps_bar=0.0, beta=beta)
    if mu == 0.0:
        r = eps ** (1.0 / (2 + beta))
        return BlowUpPoint(r=r, mu_bar=0.0, eps_bar=1.0, beta=beta)

    s_mu = math.sqrt(abs(mu))
    s_eps = eps ** (1.0 / (2 + beta))
    lo = 0.5 * min(s_mu, s_eps)
    hi = 2.0 * max(s_mu, s_eps)

    def excess(r: float) -> float:
        return (mu / r**2) ** 2 + (eps / r ** (2 + beta)) ** 2 - 1.0

    if not (excess(lo) > 0.0 > excess(hi)):  # pragma: no cover - defensive
        raise ValueError(f"bisection bracket failed for (mu={mu}, eps={eps})")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    mu_bar = mu / r**2
    eps_bar = eps / r ** (2 + beta)
    norm = math.hypot(mu_bar, eps_bar)
    return BlowUpPoint(r=r, mu_bar=mu_bar / norm, eps_bar=eps_bar / norm, beta=beta)


# ---------------------------------------------------------------------------
# chart projections and transition maps
# ---------------------------------------------------------------------------

def chart_from_global(p: BlowUpPoint, chart: Chart) -> tuple[ChartPoint, float]:
    """Express a global blown-up point in chart coordinates.

    Returns the chart point together with the amplitude rescale factor
    relating the global amplitude psi to the chart amplitude psi_i
    (psi_i = factor * psi, so that r*psi = r_i*psi_i reproduces the same u).
    """
    w = 2 + p.beta
    if chart == Chart.K1:
        if p.mu_bar >= 0:
            raise ValueError(f"K1 requires mu_bar < 0, got mu_bar={p.mu_bar}")
        s = math.sqrt(-p.mu_bar)
        r1 = p.r * s
        eps1 = p.eps_bar / (-p.mu_bar) ** (w / 2.0)
        return ChartPoint(Chart.K1, r1, eps1, p.beta), 1.0 / s
    if chart == Chart.K2:
        if p.eps_bar <= 0:
            raise ValueError(f"K2 requires eps_bar > 0, got eps_bar={p.eps_bar}")
        s = p.eps_bar ** (1.0 / w)
        r2 = p.r * s
        mu2 = p.mu_bar / p.eps_bar ** (2.0 / w)
        return ChartPoint(Chart.K2, r2, mu2, p.beta), 1.0 / s
    if chart == Chart.K3:
        if p.mu_bar <= 0:
            raise ValueError(f"K3 requires mu_bar > 0, got mu_bar={p.mu_bar}")
        s = math.sqrt(p.mu_bar)
        r3 = p.r * s
        eps3 = p.eps_bar / p.mu_bar ** (w / 2.0)
        return ChartPoint(Chart.K3, r3, eps3, p.beta), 1.0 / s
    raise ValueError(f"unknown chart {chart!r}")


def kappa12(q: ChartPoint, psi_scale: float = 1.0) -> tuple[ChartPoint, float]:
    """Transition K2 -> K1 (valid for mu2 < 0).

    Returns the K1 point and the composed amplitude rescale
    (psi1 = returned_scale / psi_scale ... i.e. the returned scale is
    psi_scale multiplied by the map's factor 1/sqrt(-mu2)).
    """
    if q.chart != Chart.K2:
        raise ValueError(f"kappa12 expects a K2 point, got chart {q.chart.name}")
    mu2 = q.slow
    if mu2 >= 0:
        raise ValueError(f"kappa12 requires mu2 < 0, got mu2={mu2}")
    w = 2 + q.beta
    s = math.sqrt(-mu2)
    r1 = q.r * s
    eps1 = (-mu2) ** (-w / 2.0)
    return ChartPoint(Chart.K1, r1, eps1, q.beta), psi_scale / s


def kappa23(q: ChartPoint, psi_scale: float = 1.0) -> tuple[ChartPoint, float]:
    """Transition K3 -> K2 (valid for eps3 > 0)."""
    if q.chart != Chart.K3:
        raise ValueError(f"kappa23 expects a K3 point, got chart {q.chart.name}")
    eps3 = q.slow
    if eps3 <= 0:
        raise ValueError(f"kappa23 requires eps3 > 0, got eps3={eps3}")
    w = 2 + q.beta
    s = eps3 ** (1.0 / w)
    r2 = q.r * s
    mu2 = eps3 ** (-2.0 / w)
    return ChartPoint(Chart.K2, r2, mu2, q.beta), psi_scale / s


def kappa21(q: ChartPoint, psi_scale: float = 1.0) -> tuple[ChartPoint, float]:
    """Inverse transition K1 -> K2 (valid for eps1 > 0)."""
    if q.chart != Chart.K1:
        raise ValueError(f"kappa21 expects a K1 point, got chart {q.chart.name}")
    eps1 = q.slow
    if eps1 <= 0:
        raise ValueError(f"kappa21 requires eps1 > 0, got eps1={eps1}")
    w = 2 + q.beta
    s = eps1 ** (1.0 / w)
    r2 = q.r * s
    mu2 = -(eps1 ** (-2.0 / w))
    return ChartPoint(Chart.K2, r2, mu2, q.beta), psi_scale / s


def kappa32(q: ChartPoint, psi_scale: float = 1.0) -> tuple[ChartPoint, float]:
    """Inverse transition K2 -> K3 (valid for mu2 > 0)."""
    if q.chart != Chart.K2:
        raise ValueError(f"kappa32 expects a K2 point, got chart {q.chart.name}")
    mu2 = q.slow
    if mu2 <= 0:
        raise ValueError(f"kappa32 requires mu2 > 0, got mu2={mu2}")
    w = 2 + q.beta
    s = math.sqrt(mu2)
    r3 = q.r * s
    eps3 = mu2 ** (-w / 2.0)
    return ChartPoint(Chart.K3, r3, eps3, q.beta), psi_scale / s


# ---------------------------------------------------------------------------
# closed-form slow flows
# ---------------------------------------------------------------------------

def blowup_time(start: ChartPoint) -> float:
    """Finite blow-up time of eps1 in K1; +inf for K2/K3 or eps1(0) = 0."""
    if start.chart == Chart.K1 and start.slow > 0:
        return 2.0 / ((2 + start.beta) * start.slow)
    return math.inf


def slow_flow_eval(start: ChartPoint, t: float) -> ChartPoint:
    """Evaluate the closed-form chart slow flow at desingularized time t >= 0.

    K1:  eps1(t) = 2 eps1(0) / (2 - (2+beta) eps1(0) t),
         r1(t) = r1(0) * ((2 - (2+beta) eps1(0) t)/2)^(1/(2+beta));
    K2:  mu2(t) = mu2(0) + t, r2 constant;
    K3:  eps3(t) = 2 eps3(0) / (2 + (2+beta) eps3(0) t),
         r3(t) = r3(0) * ((2 + (2+beta) eps3(0) t)/2)^(1/(2+beta)).
    """
    if t < 0:
        raise ValueError(f"slow flow time must be nonnegative, got t={t}")
    w = 2 + start.beta
    if start.chart == Chart.K2:
        return ChartPoint(Chart.K2, start.r, start.slow + t, start.beta)
    if start.chart == Chart.K1:
        denom = 2.0 - w * start.slow * t
        if denom <= 0.0:
            raise ValueError(
                f"t={t} is at or beyond the K1 blow-up time "
                f"{blowup_time(start)} (eps1 diverges)"
            )
        eps1 = 2.0 * start.slow / denom
        r1 = start.r * (denom / 2.0) ** (1.0 / w)
        return ChartPoint(Chart.K1, r1, eps1, start.beta)
    if start.chart == Chart.K3:
        denom = 2.0 + w * start.slow * t
        eps3 = 2.0 * start.slow / denom
        r3 = start.r * (denom / 2.0) ** (1.0 / w)
        return ChartPoint(Chart.K3, r3, eps3, start.beta)
    raise ValueError(f"unknown chart {start.chart!r}")


def chart_ode_rhs(point: ChartPoint) -> tuple[float, float]:
    """Right-hand side (dr/dt, dslow/dt) of the chart slow system.

    This is the vector field whose exact solution ``slow_flow_eval`` returns;
    it is exposed so independent integrators can cross-check the closed forms.
    """
    w = 2 + point.beta
    if point.chart == Chart.K1:
        return -0.5 * point.r * point.slow, 0.5 * w * point.slow**2
    if point.chart == Chart.K2:
        return 0.0, 1.0
    if point.chart == Chart.K3:
        return 0.5 * point.r * point.slow, -0.5 * w * point.slow**2
    raise ValueError(f"unknown chart {point.chart!r}")


def next_chart(
    point: ChartPoint,
    psi_scale: float = 1.0,
    *,
    eps1_threshold: float = 1.0,
    mu2_threshold: float = 1.0,
) -> tuple[ChartPoint, float] | None:
    """Chart-switch policy: K1 -> K2 once eps1 >= threshold, K2 -> K3 once
    mu2 >= threshold.  Returns the mapped point and composed amplitude scale,
    or None if no switch applies.  Thresholds default to 1 (coordinates
    stay O(1)); both are configurable.
    """
    if point.chart == Chart.K1 and point.slow >= eps1_threshold:
        return kappa21(point, psi_scale)
    if point.chart == Chart.K2 and point.slow >= mu2_threshold:
        return kappa32(point, psi_scale)
    return None
