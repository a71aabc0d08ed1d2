"""Tests for dispersion relations, unstable bands, and classification.

Dual routes: the brusselator closed-form quadratic is compared against a
dense eigensolve of the symbol matrix, and the kolmogorov tangential-basis
velocity assembly is compared against an independently coded
streamfunction/vorticity generalized eigenproblem (tests/oracles.py).
"""

import math

import numpy as np
import pytest

from driftlab.models import (
    KIND_HOPF,
    KIND_LONG_WAVE_CONSERVED,
    KIND_TURING,
    KIND_TURING_HOPF,
    R_STAR,
    get_model,
)
from driftlab.spectra import (
    BifurcationData,
    classify,
    dispersion,
    dispersion_curve,
    unstable_band,
)

from oracles import brusselator_eigs_bruteforce, kolmogorov_eigs_streamfunction


def random_valid_m2_params(rng):
    """Parameters satisfying the no-short-wave-instability inequality
    sqrt(d1/d2) > (sqrt(1+a^2) - 1)/a."""
    a = float(rng.uniform(0.5, 2.0))
    d2 = float(rng.uniform(0.3, 1.5))
    floor = ((math.sqrt(1 + a * a) - 1.0) / a) ** 2
    d1 = d2 * (floor + float(rng.uniform(0.1, 2.0)))
    return a, d1, d2


# ---------------------------------------------------------------------------
# dispersion: closed forms and examples
# ---------------------------------------------------------------------------

def test_dispersion_m1_examples():
    m1 = get_model("m1")
    assert dispersion(m1, 1.0, 0.0).leading == 0.0
    assert dispersion(m1, 0.0, 0.0).leading == -1.0
    lam = dispersion(m1, 0.5, 0.3).leading
    assert math.isclose(lam.real, -((1 - 0.25) ** 2) + 0.3) and lam.imag == 0.0


def test_dispersion_m2_critical_pair():
    m2 = get_model("m2", a=1.0, d1=1.0, d2=1.0)
    res = dispersion(m2, 0.0, 0.0)
    # sigma = 0, kappa = a^2 = 1: purely imaginary pair +-i, sorted with the
    # ascending-imaginary tie-break
    assert res.eigenvalues[0] == pytest.approx(-1j, abs=1e-14)
    assert res.eigenvalues[1] == pytest.approx(+1j, abs=1e-14)
    assert m2.omega_c == 1.0


def test_dispersion_m2_matches_bruteforce():
    rng = np.random.default_rng(101)
    for _ in range(50):
        a, d1, d2 = random_valid_m2_params(rng)
        m2 = get_model("m2", a=a, d1=d1, d2=d2)
        xi = float(rng.uniform(-2.0, 2.0))
        mu = float(rng.uniform(-0.3, 0.3))
        g = dispersion(m2, xi, mu).eigenvalues
        w = brusselator_eigs_bruteforce(xi, mu, a, d1, d2)
        # compare as unordered pairs: the dense eigensolver jitters equal
        # real parts, so its tie-break order is not reproducible
        direct = max(abs(g[0] - w[0]), abs(g[1] - w[1]))
        swapped = max(abs(g[0] - w[1]), abs(g[1] - w[0]))
        assert min(direct, swapped) <= 1e-10


def test_dispersion_m3_examples():
    m3 = get_model("m3")
    res = dispersion(m3, 1.0, 0.0)
    assert res.eigenvalues[0] == pytest.approx(-1j, abs=1e-15)
    assert res.eigenvalues[1] == pytest.approx(+1j, abs=1e-15)

    rng = np.random.default_rng(5)
    for _ in range(50):
        xi = float(rng.uniform(-2, 2))
        mu = float(rng.uniform(-0.3, 0.3))
        res = dispersion(m3, xi, mu)
        base = -((1 - xi * xi) ** 2) + mu
        assert sorted(lam.imag for lam in res.eigenvalues) == pytest.approx(
            sorted((-xi, xi))
        )
        for lam in res.eigenvalues:
            assert math.isclose(lam.real, base, rel_tol=0, abs_tol=1e-14)


def test_eigenvalue_ordering_and_conjugate_symmetry():
    rng = np.random.default_rng(23)
    for key in ("m1", "m2", "m3"):
        m = get_model(key)
        for _ in range(40):
            xi = float(rng.uniform(-2, 2))
            mu = float(rng.uniform(-0.3, 0.3))
            eigs = dispersion(m, xi, mu).eigenvalues
            reals = [lam.real for lam in eigs]
            assert reals == sorted(reals, reverse=True)
            # reflection xi -> -xi conjugates the spectrum
            mirror = dispersion(m, -xi, mu).eigenvalues
            conj = sorted(np.conj(eigs), key=lambda z: (-z.real, z.imag))
            assert np.allclose(np.array(mirror), np.array(conj), atol=1e-12)
            assert math.isclose(
                mirror[0].real, eigs[0].real, rel_tol=0, abs_tol=1e-12
            )


# ---------------------------------------------------------------------------
# kolmogorov routes
# ---------------------------------------------------------------------------

def test_m4_series_range_and_values():
    m4 = get_model("m4")
    # quadratic coefficient vanishes at onset, leaving -3 xi^4
    lam = dispersion(m4, 0.1, 0.0).leading
    assert math.isclose(lam.real, -3e-4, rel_tol=1e-12)
    with pytest.raises(ValueError):
        dispersion(m4, 0.6, 0.0)
    # numeric route has no such window
    dispersion(m4, 0.6, 0.0, method="numeric")
    with pytest.raises(ValueError):
        dispersion(m4, 0.1, 0.0, method="nope")


def test_m4_velocity_assembly_matches_streamfunction_oracle():
    m4 = get_model("m4")
    for rp in (-0.2, 0.0, 0.2):
        for xi in np.linspace(0.03, 0.5, 10):
            got = np.array(
                dispersion(m4, float(xi), rp, method="numeric", nev=8).eigenvalues
            )
            want = kolmogorov_eigs_streamfunction(float(xi), rp)[:8]
            assert np.allclose(got, want, atol=1e-8)


def test_m4_series_remainder_is_sixth_order():
    # the quartic truncation must differ from the numeric eigenvalue by
    # O(xi^6): the scaled remainder is stable under xi -> xi/2, which would
    # fail by a factor of 4 if the xi^4 coefficient were wrong
    m4 = get_model("m4")
    for rp in (-0.1, 0.0, 0.1):
        scaled = []
        for xi in (0.1, 0.05):
            ser = dispersion(m4, xi, rp).leading.real
            num = dispersion(m4, xi, rp, method="numeric").leading.real
            scaled.append((ser - num) / xi**6)
        assert abs(scaled[0]) < 20.0
        assert 0.7 < scaled[1] / scaled[0] < 1.45
        assert abs(scaled[0] * 0.1**6) < 2e-5


def test_m4_conserved_mode_pinned_at_zero():
    m4 = get_model("m4")
    for rp in np.linspace(-0.5, 0.5, 11):
        assert dispersion(m4, 0.0, float(rp)).leading == 0.0
        num = dispersion(m4, 0.0, float(rp), method="numeric")
        assert abs(num.leading) <= 1e-8
        # next mode is strictly damped
        assert num.eigenvalues[1].real <= -1.0 + 1e-12


# ---------------------------------------------------------------------------
# unstable band
# ---------------------------------------------------------------------------

def test_unstable_band_m1_closed_form():
    m1 = get_model("m1")
    for delta in (0.05, 0.1, 0.2):
        lo, hi = unstable_band(m1, delta)
        # exact neutral roots of (1 - xi^2)^2 = delta^2
        assert math.isclose(lo, math.sqrt(1 - delta), rel_tol=0, abs_tol=1e-10)
        assert math.isclose(hi, math.sqrt(1 + delta), rel_tol=0, abs_tol=1e-10)
    lo, hi = unstable_band(m1, 0.1)
    assert math.isclose(lo, 0.94868, abs_tol=1e-5)
    assert math.isclose(hi, 1.04881, abs_tol=1e-5)


def test_unstable_band_m1_shrinks_to_critical():
    lo, hi = unstable_band(get_model("m1"), 1e-3)
    assert abs(lo - 1.0) < 1e-3 and abs(hi - 1.0) < 1e-3


def test_unstable_band_m2_closed_form():
    rng = np.random.default_rng(31)
    for _ in range(10):
        a, d1, d2 = random_valid_m2_params(rng)
        m2 = get_model("m2", a=a, d1=d1, d2=d2)
        delta = float(rng.uniform(0.02, 0.3))
        lo, hi = unstable_band(m2, delta)
        want = delta * math.sqrt((1 + a * a) / (d1 + d2))
        assert math.isclose(hi, want, rel_tol=0, abs_tol=1e-9)
        assert lo == -hi


def test_unstable_band_m4_quartic_roots():
    m4 = get_model("m4")
    frozen = {0.05: 0.0342638, 0.1: 0.0681363, 0.2: 0.1332140}
    for delta, value in frozen.items():
        lo, hi = unstable_band(m4, delta)
        assert lo == -hi
        assert math.isclose(hi, value, rel_tol=0, abs_tol=1e-5)
        # closed-form root of the quartic truncation
        R2 = (R_STAR + delta * delta) ** 2
        want = math.sqrt((0.5 * R2 - 1.0) / (R2 * (1.0 + 0.25 * R2)))
        assert math.isclose(hi, want, rel_tol=0, abs_tol=1e-9)


def test_unstable_band_endpoints_are_neutral():
    for key in ("m1", "m2", "m3", "m4"):
        m = get_model(key)
        for delta in (0.05, 0.1, 0.2):
            lo, hi = unstable_band(m, delta)
            for xi in (lo, hi):
                assert abs(dispersion(m, xi, delta * delta).leading.real) <= 1e-9


def test_unstable_band_rejects_bad_delta():
    m1 = get_model("m1")
    with pytest.raises(ValueError):
        unstable_band(m1, 0.0)
    with pytest.raises(ValueError):
        unstable_band(m1, -0.1)
    with pytest.raises(ValueError):
        unstable_band(m1, 0.6)


def test_monotone_onset():
    # Re lambda_1 at the critical wavenumber changes sign with mu for the
    # models with a genuine critical mode; the conserved long-wave model has
    # lambda(0, mu) = 0 pinned, so its onset is expressed through the band:
    # some long wave grows iff mu > 0
    for key in ("m1", "m2", "m3"):
        m = get_model(key)
        for mu in np.linspace(-0.25, 0.25, 101):
            if mu == 0.0:
                continue
            growth = dispersion(m, m.xi_c, float(mu)).leading.real
            assert (growth > 0) == (mu > 0) and growth != 0.0

    m4 = get_model("m4")
    for mu in np.linspace(-0.25, 0.25, 101):
        if mu == 0.0:
            continue
        R2 = (R_STAR + mu) ** 2
        if mu > 0:
            # evaluate at the maximizer of the quartic truncation
            xi_star = math.sqrt((0.5 * R2 - 1.0) / (2.0 * R2 * (1.0 + 0.25 * R2)))
            assert dispersion(m4, xi_star, float(mu)).leading.real > 0.0
        else:
            for xi in np.linspace(0.05, 0.5, 10):
                assert dispersion(m4, float(xi), float(mu)).leading.real < 0.0


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def test_classify_all_models():
    want = {
        "m1": (1.0, 0.0, KIND_TURING),
        "m2": (0.0, 1.0, KIND_HOPF),
        "m3": (1.0, -1.0, KIND_TURING_HOPF),
        "m4": (0.0, 0.0, KIND_LONG_WAVE_CONSERVED),
    }
    for key, (xi_c, omega_c, kind) in want.items():
        data = classify(get_model(key))
        assert data.xi_c == xi_c
        assert data.omega_c == omega_c
        assert data.mu_c == 0.0
        assert data.kind == kind


def test_classify_tracks_parameters():
    data = classify(get_model("m2", a=2.0))
    assert data.kind == KIND_HOPF and data.omega_c == 2.0


def test_bifurcation_data_consistency_enforced():
    with pytest.raises(ValueError):
        BifurcationData(xi_c=1.0, omega_c=0.0, mu_c=0.0, kind=KIND_HOPF)
    with pytest.raises(ValueError):
        BifurcationData(xi_c=0.0, omega_c=0.0, mu_c=0.0, kind=KIND_TURING)


# ---------------------------------------------------------------------------
# tabulated curves
# ---------------------------------------------------------------------------

def test_dispersion_curve_shape_and_nan_fill():
    xis = np.linspace(0.0, 2.0, 5)
    rows = dispersion_curve(get_model("m1"), xis, 0.1)
    assert rows.shape == (5, 5)
    assert np.allclose(rows[:, 0], xis)
    assert np.all(np.isnan(rows[:, 3])) and np.all(np.isnan(rows[:, 4]))
    want = -((1 - xis**2) ** 2) + 0.1
    assert np.allclose(rows[:, 1], want)

    rows = dispersion_curve(get_model("m3"), xis, 0.0)
    assert not np.any(np.isnan(rows))
    assert np.all(rows[:, 1] >= rows[:, 3] - 1e-15)
