"""Dispersion relations, unstable bands, and bifurcation classification.

For each registered model this module evaluates the linear growth rates
lambda_j(xi, mu) of Fourier modes e^(i xi x) about the trivial state, finds
the endpoints of the unstable wavenumber band at mu = delta^2, and reports
critical data (xi_c, omega_c, kind).

Eigenvalues are always reported sorted by descending real part, with ties
broken by ascending imaginary part, so results are deterministic.

Model-specific routes:

* swift-hohenberg: lambda = -(1 - xi^2)^2 + mu (single real branch);
* brusselator: the two roots of lambda^2 + sigma*lambda + kappa = 0 with
  sigma = (d1+d2)xi^2 - mu(1+a^2) and
  kappa = a^2 + (a^2 d1 + (1-b) d2)xi^2 + d1 d2 xi^4, b = (1+mu)(1+a^2);
* coupled-ks: lambda_{1,2} = -(1 - xi^2)^2 -+ i xi + mu;
* kolmogorov: either the long-wave series
  lambda = -(1 - R^2/2)xi^2 - R^2(1 + R^2/4)xi^4, R = sqrt(2) + mu,
  valid for |xi| <= 0.5, or a numeric route that assembles the y-Fourier
  truncation of the linearized flow about (R sin y, 0) restricted to
  divergence-free fields (incompressibility handled by projecting onto the
  tangential basis t_k = (-k, xi)/|q_k|, q_k = (xi, k)).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .models import (
    KIND_HOPF,
    KIND_LONG_WAVE_CONSERVED,
    KIND_TURING,
    KIND_TURING_HOPF,
    R_STAR,
    ModelSpec,
)

__all__ = [
    "DispersionResult",
    "BifurcationData",
    "dispersion",
    "unstable_band",
    "classify",
    "dispersion_curve",
]


@dataclass(frozen=True)
class DispersionResult:
    """Eigenvalues of the linearization at wavenumber xi and parameter mu.

    ``eigenvalues`` is sorted by descending real part (ties by ascending
    imaginary part); ``leading`` is the first entry.
    """

    xi: float
    mu: float
    eigenvalues: tuple[complex, ...]

    @property
    def leading(self) -> complex:
        return self.eigenvalues[0]


@dataclass(frozen=True)
class BifurcationData:
    """Critical wavenumber, critical frequency, onset parameter, and kind."""

    xi_c: float
    omega_c: float
    mu_c: float
    kind: str

    def __post_init__(self):
        expected = _kind_from_critical(self.xi_c, self.omega_c)
        if self.kind != expected:
            raise ValueError(
                f"kind {self.kind!r} inconsistent with xi_c={self.xi_c}, "
                f"omega_c={self.omega_c} (expected {expected!r})"
            )


def _kind_from_critical(xi_c: float, omega_c: float) -> str:
    if xi_c != 0.0 and omega_c == 0.0:
        return KIND_TURING
    if xi_c != 0.0 and omega_c != 0.0:
        return KIND_TURING_HOPF
    if xi_c == 0.0 and omega_c != 0.0:
        return KIND_HOPF
    return KIND_LONG_WAVE_CONSERVED


def _sort_eigs(lams) -> tuple[complex, ...]:
    arr = np.asarray(lams, dtype=complex)
    order = np.lexsort((arr.imag, -arr.real))
    return tuple(arr[order])


# ---------------------------------------------------------------------------
# dispersion relations
# ---------------------------------------------------------------------------

def dispersion(
    m: ModelSpec,
    xi: float,
    mu: float,
    *,
    method: str = "series",
    n_modes: int = 64,
    nev: int = 2,
) -> DispersionResult:
    """Eigenvalues of the linearization at wavenumber ``xi``, parameter ``mu``.

    ``method`` selects the kolmogorov route: "series" (long-wave expansion,
    requires |xi| <= 0.5) or "numeric" (y-Fourier truncation with ``n_modes``
    modes, of which the ``nev`` leading eigenvalues are reported).  The other
    models have exact closed forms and ignore ``method``.
    """
    if m.model_id == "m1":
        lam = -((1.0 - xi * xi) ** 2) + mu
        return DispersionResult(xi, mu, (complex(lam),))

    if m.model_id == "m2":
        a, d1, d2 = m.params["a"], m.params["d1"], m.params["d2"]
        a2 = a * a
        b = (1.0 + mu) * (1.0 + a2)
        sigma = (d1 + d2) * xi * xi - mu * (1.0 + a2)
        kap = a2 + (a2 * d1 + (1.0 - b) * d2) * xi * xi + d1 * d2 * xi**4
        disc = cmath.sqrt(complex(sigma * sigma - 4.0 * kap))
        roots = (0.5 * (-sigma + disc), 0.5 * (-sigma - disc))
        return DispersionResult(xi, mu, _sort_eigs(roots))

    if m.model_id == "m3":
        base = -((1.0 - xi * xi) ** 2) + mu
        return DispersionResult(xi, mu, _sort_eigs((base - 1j * xi, base + 1j * xi)))

    if m.model_id == "m4":
        if method == "series":
            return DispersionResult(xi, mu, (complex(_kolmogorov_series(xi, mu)),))
        if method == "numeric":
            lams = _kolmogorov_eigs_numeric(xi, mu, n_modes)
            return DispersionResult(xi, mu, _sort_eigs(lams)[:nev])
        raise ValueError(f"unknown kolmogorov dispersion method {method!r}")

    raise ValueError(f"unknown model {m.model_id!r}")


def _kolmogorov_series(xi: float, r_prime: float) -> float:
    """Long-wave growth rate of the base flow (R sin y, 0), R = sqrt(2) + mu,
    through fourth order in xi.  Valid for |xi| <= 0.5."""
    if abs(xi) > 0.5:
        raise ValueError(
            f"long-wave series is only used for |xi| <= 0.5, got xi={xi}; "
            "select the numeric route for larger wavenumbers"
        )
    R2 = (R_STAR + r_prime) ** 2
    return -(1.0 - 0.5 * R2) * xi * xi - R2 * (1.0 + 0.25 * R2) * xi**4


def _kolmogorov_eigs_numeric(xi: float, r_prime: float, n_modes: int) -> np.ndarray:
    """All eigenvalues of the y-Fourier-truncated linearization about
    (R sin y, 0) on divergence-free fields at streamwise wavenumber xi.

    For xi != 0 every divergence-free mode is c_k * t_k * e^(i xi x + i k y)
    with unit tangential vector t_k = (-k, xi)/|q_k|; the matrix entries are
    the t-basis projections of diffusion (-|q_k|^2, diagonal), of the
    advection -R sin y d_x which couples k -> k +- 1, and of the base-shear
    stretching -(R cos y v, 0), likewise coupling k -> k +- 1.

    At xi = 0 incompressibility forces v = 0 and the operator reduces to
    d_y^2 on u(y): eigenvalues -k^2 (the k = 0 value is the conserved mean
    mode, pinned at zero for every r_prime).
    """
    R = R_STAR + r_prime
    ks = np.arange(-n_modes // 2, n_modes // 2)
    if xi == 0.0:
        return -(ks.astype(float) ** 2)
    q2 = xi * xi + ks.astype(float) ** 2
    qn = np.sqrt(q2)
    n = len(ks)
    A = np.zeros((n, n), dtype=complex)
    for i in range(n):
        A[i, i] = -q2[i]
        for j in (i - 1, i + 1):
            if not 0 <= j < n:
                continue
            tdot = (ks[i] * ks[j] + xi * xi) / (qn[i] * qn[j])
            # -R sin y d_x u: row k receives -(R xi/2)(u_{k-1} - u_{k+1})
            adv = -0.5 * R * xi * tdot if j == i - 1 else 0.5 * R * xi * tdot
            # -(R cos y v, 0): row k receives -(R/2)(v_{k-1} + v_{k+1}) in u;
            # v_j = c_j xi/|q_j|, and t_k . (1, 0) = -k/|q_k|
            stretch = 0.5 * R * xi * ks[i] / (qn[i] * qn[j])
            A[i, j] = adv + stretch
    return np.linalg.eigvals(A)


# ---------------------------------------------------------------------------
# unstable band
# ---------------------------------------------------------------------------

def unstable_band(m: ModelSpec, delta: float) -> tuple[float, float]:
    """Endpoints (xi_minus, xi_plus) of the unstable band at mu = delta^2.

    The band is the connected interval around the critical wavenumber on
    which Re lambda_1 > 0.  Endpoints are found by an outward bracket scan
    (step delta/50) followed by bisection.  For models bifurcating at
    xi_c = 0 the band is symmetric and (-xi_plus, xi_plus) is returned; for
    the conserved long-wave model these are the two nonzero neutral roots
    flanking the pinned xi = 0 mode.
    """
    if not 0.0 < delta <= 0.5:
        raise ValueError(f"delta must lie in (0, 0.5], got {delta}")
    mu = delta * delta

    def growth(xi: float) -> float:
        return dispersion(m, xi, mu).leading.real

    xi_c = m.xi_c
    step = delta / 50.0

    if xi_c != 0.0:
        # band straddles xi_c with growth(xi_c) > 0: scan outward both ways
        if growth(xi_c) <= 0.0:
            raise ValueError(
                f"model {m.model_id} is not unstable at mu = {mu} (delta={delta})"
            )
        hi = _scan_root(growth, xi_c, step)
        lo = _scan_root(growth, xi_c, -step)
        return (min(lo, hi), max(lo, hi))

    # xi_c = 0: the band is symmetric about 0.  The first probe sits just
    # inside the band (for the conserved model growth(0) = 0 exactly, so the
    # scan starts one step out).
    if growth(step) <= 0.0:
        raise ValueError(
            f"model {m.model_id} is not unstable at mu = {mu} (delta={delta})"
        )
    hi = _scan_root(growth, step, step)
    return (-hi, hi)


def _scan_root(f, start: float, step: float, max_steps: int = 4000) -> float:
    """March from ``start`` in increments of ``step`` until f changes sign,
    then bisect the bracketing interval down to 1e-12."""
    a = start
    fa = f(a)
    for _ in range(max_steps):
        b = a + step
        fb = f(b)
        if fb == 0.0:
            return b
        if (fa > 0.0) != (fb > 0.0):
            return _bisect(f, a, b)
        a, fa = b, fb
    raise ValueError(
        f"no neutral wavenumber found within {max_steps} steps from {start}"
    )


def _bisect(f, a: float, b: float, tol: float = 1e-12) -> float:
    fa = f(a)
    for _ in range(200):
        mid = 0.5 * (a + b)
        if abs(b - a) < tol or mid == a or mid == b:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fa > 0.0) != (fm > 0.0):
            b = mid
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def classify(m: ModelSpec) -> BifurcationData:
    """Critical data (xi_c, omega_c, mu_c = 0) and bifurcation kind."""
    return BifurcationData(xi_c=m.xi_c, omega_c=m.omega_c, mu_c=0.0, kind=m.kind)


# ---------------------------------------------------------------------------
# tabulated curves (CSV payload)
# ---------------------------------------------------------------------------

def dispersion_curve(m: ModelSpec, xis, mu: float, **kwargs) -> np.ndarray:
    """Rows (xi, Re lambda_1, Im lambda_1, Re lambda_2, Im lambda_2) over a
    wavenumber grid; models with a single branch report NaN for the second."""
    rows = np.full((len(xis), 5), np.nan)
    for i, xi in enumerate(xis):
        res = dispersion(m, float(xi), mu, **kwargs)
        rows[i, 0] = xi
        rows[i, 1] = res.eigenvalues[0].real
        rows[i, 2] = res.eigenvalues[0].imag
        if len(res.eigenvalues) > 1:
            rows[i, 3] = res.eigenvalues[1].real
            rows[i, 4] = res.eigenvalues[1].imag
    return rows
