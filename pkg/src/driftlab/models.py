"""Model registry for the four slow-drift pattern-forming systems.

The laboratory is built around four periodic model PDEs whose control
parameter mu drifts slowly in time (mu' = eps):

* ``m1`` -- Swift-Hohenberg equation,
  du/dt = -(1 + dx^2)^2 u + mu*u - u^3.
* ``m2`` -- Brusselator reaction-diffusion system, written in the shifted
  form around its spatially homogeneous equilibrium, with the drift-induced
  forcing term -eps*(1+a^2)/a in the second component.
* ``m3`` -- coupled Kuramoto-Sivashinsky-type system with counter-propagating
  critical modes, du/dt = -(1+dx^2)^2 u - dx u + mu*u + dx(u^2+uv+v^2) and
  the mirrored equation for v.
* ``m4`` -- two-dimensional incompressible Navier-Stokes flow over a
  sinusoidal (Kolmogorov) base flow U* = (R sin y, 0) with drifting Reynolds
  number R = sqrt(2) + R', written for the deviation from the base flow.

Each entry records the component count, the temporal scaling weight beta of
the blow-up coordinates (2 for m1-m3, 4 for m4), the spatial setup, default
parameters, and the critical data (critical wavenumber xi_c, critical
frequency omega_c, bifurcation kind).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

MODEL_IDS = ("m1", "m2", "m3", "m4")

#: Bifurcation kinds, classified by the (xi_c, omega_c) zero pattern.
KIND_TURING = "Turing"
KIND_HOPF = "Hopf"
KIND_TURING_HOPF = "TuringHopf"
KIND_LONG_WAVE_CONSERVED = "LongWaveConserved"

#: Critical Reynolds number of the sinusoidal base flow (m4).
R_STAR = math.sqrt(2.0)


@dataclass(frozen=True)
class ModelSpec:
    """Immutable description of one model."""

    model_id: str
    name: str
    n_components: int
    beta: int
    #: number of unbounded (slowly modulated) spatial directions
    p_unbounded: int
    #: total spatial dimension (m4 adds the bounded cross-section y)
    n_dims: int
    params: dict = field(default_factory=dict)
    xi_c: float = 0.0
    omega_c: float = 0.0
    kind: str = KIND_TURING

    def with_params(self, **overrides) -> "ModelSpec":
        params = dict(self.params)
        unknown = set(overrides) - set(params)
        if unknown:
            raise ValueError(
                f"unknown parameter(s) {sorted(unknown)} for model {self.model_id}"
            )
        params.update(overrides)
        spec = replace(self, params=params)
        _validate(spec)
        return spec


def _validate(spec: ModelSpec) -> None:
    if spec.model_id == "m2":
        a = spec.params["a"]
        d1 = spec.params["d1"]
        d2 = spec.params["d2"]
        if a <= 0 or d1 <= 0 or d2 <= 0:
            raise ValueError("m2 requires a > 0, d1 > 0, d2 > 0")
        # Rules out the short-wave (finite wavenumber) branch so the onset is
        # the uniform oscillatory one.
        if math.sqrt(d1 / d2) <= (math.sqrt(1.0 + a * a) - 1.0) / a:
            raise ValueError(
                "m2 parameters admit a short-wave instability branch: need "
                "sqrt(d1/d2) > (sqrt(1+a^2)-1)/a"
            )
    if spec.model_id == "m2" and spec.n_dims not in (1, 2):
        raise ValueError("m2 is implemented for 1 or 2 spatial dimensions")


_REGISTRY = {
    "m1": ModelSpec(
        model_id="m1",
        name="Swift-Hohenberg",
        n_components=1,
        beta=2,
        p_unbounded=1,
        n_dims=1,
        params={},
        xi_c=1.0,
        omega_c=0.0,
        kind=KIND_TURING,
    ),
    "m2": ModelSpec(
        model_id="m2",
        name="Brusselator (shifted)",
        n_components=2,
        beta=2,
        p_unbounded=1,
        n_dims=1,
        params={"a": 1.0, "d1": 1.0, "d2": 0.5},
        xi_c=0.0,
        omega_c=1.0,  # omega_c = a; recomputed for non-default a
        kind=KIND_HOPF,
    ),
    "m3": ModelSpec(
        model_id="m3",
        name="coupled Kuramoto-Sivashinsky",
        n_components=2,
        beta=2,
        p_unbounded=1,
        n_dims=1,
        params={},
        xi_c=1.0,
        omega_c=-1.0,  # frequency of the first component's critical mode
        kind=KIND_TURING_HOPF,
    ),
    "m4": ModelSpec(
        model_id="m4",
        name="Kolmogorov flow deviation",
        n_components=2,
        beta=4,
        p_unbounded=1,
        n_dims=2,
        params={},
        xi_c=0.0,
        omega_c=0.0,
        kind=KIND_LONG_WAVE_CONSERVED,
    ),
}


def get_model(model_id: str, **param_overrides) -> ModelSpec:
    """Return the ModelSpec for ``model_id`` with optional parameter overrides.

    >>> get_model("m2", a=2.0).params["a"]
    2.0
    """
    try:
        base = _REGISTRY[model_id]
    except KeyError:
        raise ValueError(
            f"unknown model id {model_id!r}; expected one of {MODEL_IDS}"
        ) from None
    spec = base.with_params(**param_overrides) if param_overrides else base
    if spec.model_id == "m2":
        spec = replace(spec, omega_c=spec.params["a"])
    _validate(spec)
    return spec
