"""Reconstruction of physical fields from envelope solutions, and the
error/residual instrumentation that compares them with direct simulations.

The leading-order ansatz ties an envelope state to a physical field through
the slow-space identification ``x_bar = r * x`` and a model-specific
carrier pattern:

* stationary rolls:        u = 2 r Re(A(x_bar) e^{ix});
* oscillatory (Hopf):      U = 2 r Re(A(x_bar) phi e^{iat}),
                           phi = (1, -1 + i/a);
* counter-propagating:     u = 2 r Re(A_L(x_bar) e^{i(x-t)}),
                           v = 2 r Re(A_R(x_bar) e^{i(x+t)});
* conserved long-wave:     (u', v') = r A(x_bar) (-sqrt(2) cos y, 1).

Errors are measured in the sup norm (primary) with a root-mean-square
secondary norm; scaling exponents come from a log-log regression with a
95% confidence interval.  PDE residuals are evaluated with fourth-order
central time differences on uniformly recorded trajectories and spectral
space derivatives of the full model equations (no dealiasing, with the
incompressible projection for the sheared-flow model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Chart, ChartPoint, slow_flow_eval
from .models import R_STAR, ModelSpec
from .modulation import CoefficientTrack, ModulationState, evolve
from .physical import FieldState, Grid, SolverConfig, make_state, simulate

__all__ = [
    "ErrorReport",
    "reconstruct",
    "pde_rhs",
    "approximation_error",
    "residual",
    "delay_metric",
    "fit_error_slope",
    "scaling_report",
    "static_validity_run",
    "residual_scaling_run",
    "delay_run",
    "scalar_delay_prediction",
]


# --------------------------------------------------------------------------
# report type
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorReport:
    """Per-time error norms, optional residual norms, and an optional
    fitted scaling exponent with its 95% regression interval."""

    times: tuple = ()
    sup_errors: tuple = ()
    l2_errors: tuple = ()
    #: per-time (l2, sup) norms of the PDE residual
    residual_norms: tuple = ()
    fitted_slope: float | None = None
    slope_interval: tuple | None = None
    runs_metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for e in self.sup_errors:
            if not (math.isfinite(e) and e >= 0.0):
                raise ValueError(f"sup errors must be finite and nonnegative, got {e}")
        if (self.slope_interval is None) != (self.fitted_slope is None):
            raise ValueError("fitted_slope and slope_interval come together")

    @property
    def max_error(self) -> float:
        return max(self.sup_errors) if self.sup_errors else 0.0


# --------------------------------------------------------------------------
# reconstruction
# --------------------------------------------------------------------------


def _chart_params(p: ChartPoint) -> tuple[float, float]:
    """Blow down a chart point to the physical (mu, eps)."""
    w = 2 + p.beta
    if p.chart == Chart.K1:
        return -p.r**2, p.r**w * p.slow
    if p.chart == Chart.K2:
        return p.r**2 * p.slow, p.r**w
    return p.r**2, p.r**w * p.slow


def _next_pow2(x: float) -> int:
    n = 16
    while n < x:
        n *= 2
    return n


def _sample_axis(values: np.ndarray, length: float, targets: np.ndarray,
                 axis: int, interpolate: bool) -> np.ndarray:
    """Evaluate a periodic gridded field at arbitrary coordinates along one
    axis: exact node lookup, or trigonometric (spectral) interpolation."""
    n = values.shape[axis]
    spacing = length / n
    pos = targets / spacing
    idx = np.rint(pos)
    on_nodes = np.max(np.abs(pos - idx)) < 1e-9
    if on_nodes:
        return np.take(values, idx.astype(int) % n, axis=axis)
    if not interpolate:
        raise ValueError(
            "physical grid nodes do not coincide with envelope nodes; "
            "enable spectral interpolation"
        )
    hat = np.fft.fft(values, axis=axis) / n
    k = 2 * np.pi * np.fft.fftfreq(n, d=spacing)
    weights = np.exp(1j * np.outer(targets, k))
    return np.moveaxis(np.tensordot(weights, np.moveaxis(hat, axis, 0), axes=1), 0, axis)


def reconstruct(model: ModelSpec, state: ModulationState, *, r: float | None = None,
                grid: Grid | None = None, time: float = 0.0, mu: float | None = None,
                eps: float | None = None, interpolate: bool = True) -> FieldState:
    """Sample the leading-order ansatz ``r * psi^(0)`` on a physical grid.

    For chart-based envelope states the radius, ``mu`` and ``eps`` default to
    the blown-down values at the state's chart time; global tracks need an
    explicit ``r``.  The physical grid must satisfy ``r * L = L_bar`` (the
    slow box maps onto the physical box); its default keeps the envelope
    resolution and, for models with a spatial carrier, at least eight points
    per carrier wavelength.
    """
    if state.track.model_id != model.model_id:
        raise ValueError(
            f"state carries model {state.track.model_id!r}, asked for "
            f"{model.model_id!r}"
        )
    if r is None or mu is None or eps is None:
        if state.track.chart is None:
            if r is None:
                raise ValueError("global tracks need an explicit radius r")
            mu = 0.0 if mu is None else mu
            eps = 0.0 if eps is None else eps
        else:
            point = slow_flow_eval(state.track.start, state.tbar)
            r = point.r if r is None else r
            chart_mu, chart_eps = _chart_params(point)
            mu = chart_mu if mu is None else mu
            eps = chart_eps if eps is None else eps
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")

    mid = model.model_id
    length_bar = state.grid.length
    if grid is None:
        length = length_bar / r
        if mid in ("m1", "m3"):
            n = _next_pow2(max(state.grid.n_points, 8 * length / (2 * math.pi)))
            grid = Grid(n_points=n, length=length)
        elif mid == "m2":
            grid = Grid(n_points=state.grid.n_points, length=length,
                        dimension=state.grid.dimension)
        else:
            grid = Grid(n_points=state.grid.n_points, length=length,
                        dimension=2, n_y=64)
    if abs(r * grid.length - length_bar) > 1e-8 * length_bar:
        raise ValueError(
            f"incommensurate grids: r * L = {r * grid.length} does not match "
            f"the envelope box {length_bar}"
        )

    x = grid.x()
    targets = r * x
    amps = [np.asarray(a) for a in state.amplitudes]
    if state.grid.dimension == 2:
        sampled = [
            _sample_axis(
                _sample_axis(a, length_bar, targets, 0, interpolate),
                length_bar, targets, 1, interpolate,
            )
            for a in amps
        ]
    else:
        sampled = [_sample_axis(a, length_bar, targets, 0, interpolate) for a in amps]

    if mid == "m1":
        carrier = np.exp(1j * x)
        comps = (2.0 * r * np.real(sampled[0] * carrier),)
    elif mid == "m2":
        a_param = model.params["a"]
        phase = complex(np.exp(1j * a_param * time))
        b = -1.0 + 1j / a_param
        comps = (
            2.0 * r * np.real(sampled[0] * phase),
            2.0 * r * np.real(sampled[0] * b * phase),
        )
    elif mid == "m3":
        left = np.exp(1j * (x - time))
        right = np.exp(1j * (x + time))
        comps = (
            2.0 * r * np.real(sampled[0] * left),
            2.0 * r * np.real(sampled[1] * right),
        )
    else:
        cos_y = np.cos(grid.y())[None, :]
        profile = np.real(sampled[0])[:, None]
        comps = (
            -math.sqrt(2.0) * r * cos_y * profile,
            r * np.broadcast_to(profile, grid.shape).copy(),
        )
    return FieldState(grid=grid, components=comps, mu=mu, eps=eps, time=time)


# --------------------------------------------------------------------------
# the full PDE right-hand sides (spectral, no dealiasing)
# --------------------------------------------------------------------------


def pde_rhs(model: ModelSpec, state: FieldState) -> tuple:
    """Evaluate the model's right-hand side on a field state spectrally.

    Uses the exact (non-dealiased) nonlinear terms; the sheared-flow model
    includes the incompressible projection and mean-flow removal that its
    evolution enforces.
    """
    mid = model.model_id
    grid = state.grid
    mu, eps = state.mu, state.eps
    if mid in ("m1", "m2", "m3") and grid.dimension == 1:
        k = 2 * np.pi / grid.length * np.fft.rfftfreq(grid.n_points, d=1.0 / grid.n_points)
    if mid == "m1":
        u = state.components[0]
        lin = np.fft.irfft(-((1.0 - k * k) ** 2) * np.fft.rfft(u), n=grid.n_points)
        return (lin + mu * u - u**3,)
    if mid == "m2":
        a = model.params["a"]
        d1, d2 = model.params["d1"], model.params["d2"]
        u, v = state.components
        one = 1.0 + a * a
        if grid.dimension == 1:
            lin1 = np.fft.irfft(-d1 * k * k * np.fft.rfft(u), n=grid.n_points)
            lin2 = np.fft.irfft(-d2 * k * k * np.fft.rfft(v), n=grid.n_points)
        else:
            n = grid.n_points
            kx = 2 * np.pi / grid.length * np.fft.fftfreq(n, d=1.0 / n)
            ky = 2 * np.pi / grid.length * np.fft.rfftfreq(n, d=1.0 / n)
            k2 = kx[:, None] ** 2 + ky[None, :] ** 2
            lin1 = np.fft.irfft2(-d1 * k2 * np.fft.rfft2(u), s=grid.shape)
            lin2 = np.fft.irfft2(-d2 * k2 * np.fft.rfft2(v), s=grid.shape)
        f = (one * (1.0 + mu) / a) * u * u + 2.0 * a * u * v + u * u * v
        rhs1 = lin1 + a * a * u + a * a * v + one * mu * u + f
        rhs2 = lin2 - one * u - a * a * v - one * mu * u - f - eps * one / a
        return (rhs1, rhs2)
    if mid == "m3":
        u, v = state.components
        uh, vh = np.fft.rfft(u), np.fft.rfft(v)
        base = -((1.0 - k * k) ** 2)
        quad = np.fft.rfft(u * u + u * v + v * v)
        dq = np.fft.irfft(1j * k * quad, n=grid.n_points)
        rhs1 = np.fft.irfft((base - 1j * k) * uh, n=grid.n_points) + mu * u + dq
        rhs2 = np.fft.irfft((base + 1j * k) * vh, n=grid.n_points) + mu * v + dq
        return (rhs1, rhs2)
    # m4
    u, v = state.components
    nx, ny = grid.shape
    kx = (2 * np.pi / grid.length) * np.fft.fftfreq(nx, d=1.0 / nx)[:, None]
    ky = np.fft.rfftfreq(ny, d=1.0 / ny)[None, :]  # y-box length 2*pi: integers
    k2 = kx**2 + ky**2
    k2_safe = k2.copy()
    k2_safe[0, 0] = 1.0
    y = grid.y()[None, :]
    sin_y, cos_y = np.sin(y), np.cos(y)
    uh, vh = np.fft.rfft2(u), np.fft.rfft2(v)
    lin_u = np.fft.irfft2(-k2 * uh, s=grid.shape)
    lin_v = np.fft.irfft2(-k2 * vh, s=grid.shape)
    dxu = np.fft.irfft2(1j * kx * uh, s=grid.shape)
    dxv = np.fft.irfft2(1j * kx * vh, s=grid.shape)
    dyu = np.fft.irfft2(1j * ky * uh, s=grid.shape)
    dyv = np.fft.irfft2(1j * ky * vh, s=grid.shape)
    R = R_STAR + mu
    fu = -R * (sin_y * dxu + cos_y * v) - eps * sin_y - (u * dxu + v * dyu)
    fv = -R * sin_y * dxv - (u * dxv + v * dyv)
    fuh, fvh = np.fft.rfft2(fu), np.fft.rfft2(fv)
    for hat in (fuh, fvh):
        hat[nx // 2, :] = 0.0
        hat[:, ny // 2] = 0.0
    div = kx * fuh + ky * fvh
    fuh = fuh - kx * div / k2_safe
    fvh = fvh - ky * div / k2_safe
    fuh[0, 0] = 0.0
    return (
        lin_u + np.fft.irfft2(fuh, s=grid.shape),
        lin_v + np.fft.irfft2(fvh, s=grid.shape),
    )


# --------------------------------------------------------------------------
# error measurement
# --------------------------------------------------------------------------


def _states_of(trajectory):
    return list(getattr(trajectory, "states", trajectory))


def approximation_error(model: ModelSpec, direct, reconstructed) -> ErrorReport:
    """Per-time sup (and RMS) norms of the difference of two trajectories."""
    a_states = _states_of(direct)
    b_states = _states_of(reconstructed)
    if len(a_states) != len(b_states):
        raise ValueError(
            f"trajectories have {len(a_states)} and {len(b_states)} records"
        )
    if not a_states:
        raise ValueError("empty trajectories")
    times, sups, l2s = [], [], []
    for sa, sb in zip(a_states, b_states):
        if abs(sa.time - sb.time) > 1e-9 * max(1.0, abs(sa.time)):
            raise ValueError(f"record times differ: {sa.time} vs {sb.time}")
        if sa.grid != sb.grid:
            raise ValueError("trajectories live on different grids")
        sup = 0.0
        sq = 0.0
        for ca, cb in zip(sa.components, sb.components):
            diff = ca - cb
            sup = max(sup, float(np.max(np.abs(diff))))
            sq += float(np.mean(diff * diff))
        times.append(sa.time)
        sups.append(sup)
        l2s.append(math.sqrt(sq))
    return ErrorReport(
        times=tuple(times),
        sup_errors=tuple(sups),
        l2_errors=tuple(l2s),
        runs_metadata={"model": model.model_id, "n_records": len(times)},
    )


def residual(model: ModelSpec, trajectory) -> ErrorReport:
    """PDE residual norms of a uniformly recorded trajectory.

    The time derivative is approximated by the fourth-order central stencil
    (-f2 + 8 f1 - 8 fm1 + fm2)/(12 dt), so four boundary records are lost;
    the space operator is evaluated spectrally by :func:`pde_rhs`.
    """
    states = _states_of(trajectory)
    if len(states) < 5:
        raise ValueError("residual needs at least five uniformly spaced records")
    ts = [s.time for s in states]
    dt = ts[1] - ts[0]
    for t0, t1 in zip(ts, ts[1:]):
        if abs((t1 - t0) - dt) > 1e-9 * max(1.0, abs(dt)):
            raise ValueError("residual needs uniformly spaced records")
    times, norms = [], []
    for j in range(2, len(states) - 2):
        s = states[j]
        rhs = pde_rhs(model, s)
        sup = 0.0
        sq = 0.0
        for c in range(len(s.components)):
            dudt = (
                -states[j + 2].components[c]
                + 8.0 * states[j + 1].components[c]
                - 8.0 * states[j - 1].components[c]
                + states[j - 2].components[c]
            ) / (12.0 * dt)
            res = dudt - rhs[c]
            sup = max(sup, float(np.max(np.abs(res))))
            sq += float(np.mean(res * res))
        times.append(s.time)
        norms.append((math.sqrt(sq), sup))
    return ErrorReport(
        times=tuple(times),
        residual_norms=tuple(norms),
        runs_metadata={"model": model.model_id, "record_dt": dt},
    )


def delay_metric(model: ModelSpec, trajectory, threshold: float) -> tuple[float, float]:
    """First time the sup norm exceeds ``threshold``, and the drifting
    parameter's value there."""
    states = _states_of(trajectory)
    if not states:
        raise ValueError("empty trajectory")
    if not states[0].mu < 0.0:
        raise ValueError(
            f"delay metric needs a trajectory starting at mu < 0, got {states[0].mu}"
        )
    if not states[0].sup_norm() < threshold:
        raise ValueError("initial state is already above the threshold")
    for s in states:
        if s.sup_norm() >= threshold:
            return s.time, s.mu
    raise ValueError(
        f"sup norm never crossed {threshold} within the recorded window"
    )


# --------------------------------------------------------------------------
# scaling fits
# --------------------------------------------------------------------------

#: two-sided 97.5% Student-t quantiles by degrees of freedom
_T95 = {1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447,
        7: 2.365, 8: 2.306, 9: 2.262, 10: 2.228}


def fit_error_slope(deltas, errors) -> tuple[float, tuple[float, float]]:
    """Least-squares slope of log(error) vs log(delta), with the 95%
    confidence interval of the regression."""
    deltas = [float(d) for d in deltas]
    errors = [float(e) for e in errors]
    if len(deltas) != len(errors) or len(deltas) < 3:
        raise ValueError("slope fitting needs at least three (delta, error) pairs")
    if any(d <= 0 for d in deltas) or any(e <= 0 for e in errors):
        raise ValueError("deltas and errors must be positive")
    x = np.log(np.array(deltas))
    y = np.log(np.array(errors))
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    dof = n - 2
    se = math.sqrt(float(np.sum(resid**2)) / dof / sxx) if dof > 0 else 0.0
    t = _T95.get(dof, 1.96 if dof > 30 else 2.042)
    return slope, (slope - t * se, slope + t * se)


def scaling_report(deltas, max_errors, *, metadata: dict | None = None) -> ErrorReport:
    """Bundle max errors across a delta sweep with the fitted exponent."""
    slope, interval = fit_error_slope(deltas, max_errors)
    meta = {"deltas": tuple(float(d) for d in deltas)}
    if metadata:
        meta.update(metadata)
    return ErrorReport(
        times=(),
        sup_errors=tuple(float(e) for e in max_errors),
        fitted_slope=slope,
        slope_interval=interval,
        runs_metadata=meta,
    )


# --------------------------------------------------------------------------
# standard experiment protocols
# --------------------------------------------------------------------------

_ENVELOPE_BOX = 12.8 * math.pi


def _default_envelope(grid: Grid) -> np.ndarray:
    xb = grid.x()
    w = 2 * np.pi / grid.length
    return (0.75 + 0.2 * np.cos(w * xb) + 0.1 * np.sin(2 * w * xb)).astype(complex)


def static_validity_run(model: ModelSpec, delta: float, *, t_end: float | None = None,
                        n_records: int = 20, n_envelope: int = 64,
                        envelope: np.ndarray | None = None,
                        dt: float | None = None) -> ErrorReport:
    """Frozen-parameter comparison of a direct simulation at mu = delta^2
    with the reconstructed envelope approximation.

    The physical box is ``12.8 pi / delta`` so the envelope box is the same
    for every delta; well-prepared initial data (the reconstruction of the
    initial envelope) starts the error at zero and the sup error over
    ``t in [0, delta^-2]`` measures the remainder of the ansatz.
    """
    mid = model.model_id
    if mid not in ("m1", "m2"):
        raise ValueError(
            "the static validity protocol covers the stationary-roll and "
            "oscillatory models"
        )
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    length = _ENVELOPE_BOX / delta
    if mid == "m1":
        waves = length / (2 * math.pi)
        if abs(waves - round(waves)) > 1e-9:
            raise ValueError(
                f"delta = {delta} gives a box of {waves} carrier wavelengths; "
                "use 6.4/delta integer"
            )
        n_phys = _next_pow2(8 * waves)
        dt_cap = 0.25
    else:
        n_phys = 64
        dt_cap = 0.02
    t_end = delta**-2 if t_end is None else t_end
    interval = t_end / n_records
    if dt is None:
        dt = min(interval / 50.0, dt_cap)
    per_record = max(1, int(round(interval / dt)))
    dt = interval / per_record

    mod_grid = Grid(n_points=n_envelope, length=_ENVELOPE_BOX)
    track = CoefficientTrack.frozen(model, mu_bar=1.0)
    a0 = _default_envelope(mod_grid) if envelope is None else np.asarray(envelope, dtype=complex)
    mod_state = ModulationState(track=track, grid=mod_grid, amplitudes=(a0,))

    phys_grid = Grid(n_points=n_phys, length=length)
    mu = delta**2
    init = reconstruct(model, mod_state, r=delta, grid=phys_grid, time=0.0,
                       mu=mu, eps=0.0)
    cfg = SolverConfig(dt=dt, record_stride=per_record)
    direct = simulate(model, init, n_records * interval, cfg)

    # envelope records aligned with the physical records: tbar = delta^2 * t
    substeps = 25
    dtbar = delta**2 * interval / substeps
    recon_states = [init]
    current = mod_state
    for rec in direct.states[1:]:
        current = evolve(current, current.tbar + delta**2 * interval, dtbar)[-1]
        recon_states.append(
            reconstruct(model, current, r=delta, grid=phys_grid, time=rec.time,
                        mu=mu, eps=0.0)
        )
    report = approximation_error(model, direct, recon_states)
    meta = dict(report.runs_metadata)
    meta.update({"delta": delta, "dt": dt, "n_phys": n_phys, "t_end": t_end,
                 "protocol": "static-validity"})
    return ErrorReport(
        times=report.times, sup_errors=report.sup_errors,
        l2_errors=report.l2_errors, runs_metadata=meta,
    )


def residual_scaling_run(model: ModelSpec, delta: float, *, n_records: int = 9,
                         spacing: float = 0.5, n_envelope: int = 64,
                         envelope: np.ndarray | None = None) -> ErrorReport:
    """Residual of the reconstructed leading-order field at frozen mu.

    The envelope solves its equation (so the resonant part of the residual
    cancels); what remains is the first neglected order of the ansatz.
    """
    if model.model_id != "m1":
        raise ValueError("the residual-order protocol is for the stationary model")
    length = _ENVELOPE_BOX / delta
    n_phys = _next_pow2(8 * length / (2 * math.pi))
    phys_grid = Grid(n_points=n_phys, length=length)
    mod_grid = Grid(n_points=n_envelope, length=_ENVELOPE_BOX)
    track = CoefficientTrack.frozen(model, mu_bar=1.0)
    a0 = _default_envelope(mod_grid) if envelope is None else np.asarray(envelope, dtype=complex)
    current = ModulationState(track=track, grid=mod_grid, amplitudes=(a0,))

    substeps = max(1, int(math.ceil(delta**2 * spacing / 0.002)))
    dtbar = delta**2 * spacing / substeps
    states = []
    for j in range(n_records):
        if j > 0:
            current = evolve(current, current.tbar + delta**2 * spacing, dtbar)[-1]
        states.append(
            reconstruct(model, current, r=delta, grid=phys_grid,
                        time=j * spacing, mu=delta**2, eps=0.0)
        )
    report = residual(model, states)
    meta = dict(report.runs_metadata)
    meta.update({"delta": delta, "protocol": "residual-order"})
    return ErrorReport(times=report.times, residual_norms=report.residual_norms,
                       runs_metadata=meta)


_DELAY_THRESHOLDS = {"m1": 1e-3, "m2": 1e-2}


def scalar_delay_prediction(eps: float, mu0: float, threshold: float,
                            amplitude: float, *, rate: float = 1.0) -> float:
    """Take-off parameter value predicted by the scalar growth balance.

    Integrating d|u|/dt = rate * mu(t) |u| from mu0 < 0, the sup norm first
    returns to the threshold when the accumulated exponent vanishes:
    mu* = sqrt(mu0^2 + 2 eps ln(threshold/amplitude) / rate).
    """
    return math.sqrt(mu0 * mu0 + 2.0 * eps * math.log(threshold / amplitude) / rate)


def delay_run(model: ModelSpec, eps: float, *, mu0: float = -0.05,
              amplitude: float = 1e-6, threshold: float | None = None,
              dt: float = 0.01, record_stride: int = 50) -> tuple[float, float]:
    """Drifting-parameter run measuring the delayed take-off.

    Returns (t_takeoff, mu_at_takeoff) from :func:`delay_metric` on a small
    near-critical-mode initial condition.
    """
    mid = model.model_id
    if mid not in _DELAY_THRESHOLDS:
        raise ValueError("delay runs cover the stationary-roll and oscillatory models")
    if threshold is None:
        threshold = _DELAY_THRESHOLDS[mid]
    if not (eps > 0 and mu0 < 0):
        raise ValueError("delay runs need eps > 0 and mu0 < 0")
    if mid == "m1":
        grid = Grid(n_points=32, length=2 * math.pi)
        init = make_state(
            model, grid, (amplitude * np.cos(grid.x()),), mu=mu0, eps=eps
        )
    else:
        grid = Grid(n_points=16, length=2 * math.pi)
        ones = np.ones(grid.shape)
        init = make_state(
            model, grid, (amplitude * ones, -amplitude * ones), mu=mu0, eps=eps
        )
    mu_star = scalar_delay_prediction(eps, mu0, threshold, amplitude)
    t_end = (1.6 * mu_star - mu0) / eps
    cfg = SolverConfig(dt=dt, record_stride=record_stride)
    traj = simulate(model, init, t_end, cfg)
    return delay_metric(model, traj, threshold)
