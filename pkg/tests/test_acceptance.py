"""End-to-end acceptance suite.

Each test asserts one numbered numerical contract of the package at its
stated tolerance, so the verbose report shows exactly one pass/fail line per
contract.  Every check runs dual-route: the implementation result against an
oracle that never shares code with it (dense eigensolves, reference RK4
flows, hand-derived closed forms, frozen word tables), either from
``oracles.py`` or written out in place here.

Contract 2 carries two extra lines: the stated long-wave band constant of
the conserved model is internally inconsistent with the quartic growth law
the band edges are rooted from, so the two small-``delta`` cases are marked
as strict expected failures (with the analysis in the test docstring) and a
supplementary line verifies the series-derived constant instead.
"""

import math
import random
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from oracles import (
    brusselator_eigs_bruteforce,
    kolmogorov_eigs_streamfunction,
    rk4_chart_flow,
    sort_eigs,
)
from test_opexpand import laplacian2d, sh_operator, shear_tagged

from driftlab import cli
from driftlab.config import ExperimentConfig
from driftlab.derivation import run_derivation
from driftlab.geometry import (
    Chart,
    ChartPoint,
    blowup_time,
    kappa12,
    kappa23,
    slow_flow_eval,
)
from driftlab.models import get_model
from driftlab.modulation import (
    CoefficientTrack,
    ModulationState,
    current_chart_point,
    evolve,
    hand_off,
    homogeneous_state,
    mass,
    step_ch,
    step_gl_real,
)
from driftlab.modulation import default_grid as envelope_grid
from driftlab.opexpand import (
    DerivativeWord,
    expand_operator,
    fast_symbols,
    pretty,
    slow_symbols,
    substitution_check,
)
from driftlab.physical import (
    SolverConfig,
    default_dt,
    default_grid,
    divergence_free,
    divergence_sup,
    linear_growth_probe,
    make_state,
    simulate,
)
from driftlab.spectra import dispersion, unstable_band
from driftlab.validate import (
    delay_run,
    fit_error_slope,
    residual_scaling_run,
    scalar_delay_prediction,
    static_validity_run,
)


def chart_params(q: ChartPoint) -> tuple[float, float]:
    """(mu, eps) reconstructed from chart coordinates, independent of the
    geometry module's own maps: K1 (-r^2, r^w e1), K2 (r^2 mu2, r^w),
    K3 (r^2, r^w e3)."""
    w = 2 + q.beta
    if q.chart == Chart.K1:
        return -q.r**2, q.r**w * q.slow
    if q.chart == Chart.K2:
        return q.r**2 * q.slow, q.r**w
    return q.r**2, q.r**w * q.slow


# ---------------------------------------------------------------------------
# 1. dispersion fidelity
# ---------------------------------------------------------------------------

def test_criterion_01_dispersion_matches_brute_force_eigensolves():
    # 50 (xi, mu) samples per model; <= 1e-10 absolute against symbol
    # eigensolves assembled independently of the spectra module
    rng = np.random.default_rng(101)
    worst = 0.0

    m1 = get_model("m1")
    for _ in range(50):
        xi = float(rng.uniform(0.0, 2.0))
        mu = float(rng.uniform(-0.5, 0.5))
        got = dispersion(m1, xi, mu).leading
        want = -((1.0 - xi * xi) ** 2) + mu
        worst = max(worst, abs(got - want))

    m2 = get_model("m2")
    a, d1, d2 = (m2.params[k] for k in ("a", "d1", "d2"))
    for _ in range(50):
        xi = float(rng.uniform(0.0, 2.0))
        mu = float(rng.uniform(-0.3, 0.3))
        got = np.array(dispersion(m2, xi, mu).eigenvalues)
        want = brusselator_eigs_bruteforce(xi, mu, a, d1, d2)
        worst = max(worst, float(np.max(np.abs(got - want))))

    m3 = get_model("m3")
    for _ in range(50):
        xi = float(rng.uniform(0.0, 2.0))
        mu = float(rng.uniform(-0.5, 0.5))
        got = np.array(dispersion(m3, xi, mu).eigenvalues)
        base = -((1.0 - xi * xi) ** 2) + mu
        want = sort_eigs([base - 1j * xi, base + 1j * xi])
        worst = max(worst, float(np.max(np.abs(got - want))))

    m4 = get_model("m4")
    for _ in range(50):
        xi = float(rng.uniform(0.03, 1.2))
        rp = float(rng.uniform(-0.3, 0.3))
        got = np.array(dispersion(m4, xi, rp, method="numeric").eigenvalues)
        want = kolmogorov_eigs_streamfunction(xi, rp)[:2]
        worst = max(worst, float(np.max(np.abs(got - want))))

    assert worst <= 1e-10


# ---------------------------------------------------------------------------
# 2. band-edge asymptotics
# ---------------------------------------------------------------------------

def test_criterion_02_unstable_band_asymptotics():
    # stationary-roll model: xi_pm = sqrt(1 +/- delta) vs 1 +/- delta/2
    m1 = get_model("m1")
    for delta in (0.05, 0.1, 0.2):
        lo, hi = unstable_band(m1, delta)
        assert abs(lo - (1.0 - delta / 2.0)) <= 0.6 * delta**2
        assert abs(hi - (1.0 + delta / 2.0)) <= 0.6 * delta**2
    # conserved model, stated constant sqrt(2/3): holds within the delta^2
    # envelope only at the largest delta; the smaller ones fail honestly in
    # the companion test below
    m4 = get_model("m4")
    lo, hi = unstable_band(m4, 0.2)
    assert abs(hi - math.sqrt(2.0 / 3.0) * 0.2) <= 1.0 * 0.2**2
    assert abs(lo + math.sqrt(2.0 / 3.0) * 0.2) <= 1.0 * 0.2**2


@pytest.mark.parametrize("delta", [0.05, 0.1])
@pytest.mark.xfail(
    strict=True,
    reason="stated band constant sqrt(2/3) is inconsistent with the quartic "
    "growth law the edges are rooted from; see docstring",
)
def test_criterion_02_conserved_band_stated_constant_small_delta(delta):
    """The stated leading band constant sqrt(2/3) ~ 0.8165 cannot hold.

    The band edges are the neutral roots of the long-wave growth law
    lambda = -(1 - R^2/2) xi^2 - R^2 (1 + R^2/4) xi^4 at R = sqrt(2) +
    delta^2, whose positive root expands as xi_+ = 2^(1/4)/sqrt(3) * delta +
    O(delta^3) ~ 0.6866 delta.  The gap |sqrt(2/3) - 2^(1/4)/sqrt(3)| *
    delta ~ 0.13 delta therefore exceeds the 1.0 delta^2 envelope whenever
    delta < ~0.13: at delta = 0.05 the difference is 6.56e-3 > 2.5e-3 and at
    delta = 0.1 it is 1.35e-2 > 1e-2 (exact roots 0.0342638 and 0.0681363).
    The check is kept as stated and expected to fail.
    """
    m4 = get_model("m4")
    _, hi = unstable_band(m4, delta)
    assert abs(hi - math.sqrt(2.0 / 3.0) * delta) <= 1.0 * delta**2


def test_criterion_02_conserved_band_series_constant():
    # supplementary: the constant 2^(1/4)/sqrt(3) derived from the quartic
    # growth law passes the same delta^2 envelope at every delta
    m4 = get_model("m4")
    c = 2.0**0.25 / math.sqrt(3.0)
    for delta in (0.05, 0.1, 0.2):
        lo, hi = unstable_band(m4, delta)
        assert abs(hi - c * delta) <= 1.0 * delta**2
        assert abs(lo + c * delta) <= 1.0 * delta**2


# ---------------------------------------------------------------------------
# 3. graded operator expansion
# ---------------------------------------------------------------------------

def test_criterion_03_operator_expansion_substitution_and_words():
    # two-route substitution check (restrict-then-differentiate vs
    # expand-then-restrict) <= 1e-11 for the three operator families over
    # r in {0.1, 0.25, 0.5} and six oracle fields
    radii = (0.1, 0.25, 0.5)
    (x,) = fast_symbols(1, 1)
    (xb,) = slow_symbols(1)
    sh_fields = [
        sp.exp(sp.I * x) * sp.exp(2 * sp.I * xb),
        xb**2 * sp.exp(sp.I * x),
        sp.cos(x) * sp.sin(xb),
        (1 + xb + xb**3) * sp.exp(-sp.I * x),
    ]
    for f in sh_fields:
        for r in radii:
            assert substitution_check(sh_operator(), f, r) <= 1e-11
    xb1, xb2 = slow_symbols(2)
    for r in radii:
        assert substitution_check(laplacian2d(), xb1 * xb2, r) <= 1e-11
    xx, yy = fast_symbols(2, 1)
    (xbs,) = slow_symbols(1)
    pair = (
        sp.exp(sp.I * xx) * sp.cos(yy) * sp.exp(2 * sp.I * xbs),
        sp.sin(yy) * sp.exp(sp.I * (xx + xbs)),
    )
    for r in radii:
        assert substitution_check(shear_tagged(), pair, r) <= 1e-11

    # grades 1 and 2 of the fourth-order operator: -4 dxbar dx (1 + dx^2)
    # and -2 dxbar^2 (1 + 3 dx^2) as normalized word tables, and the same
    # as printed lines
    exp = expand_operator(sh_operator())
    assert exp.grade(1)[0] == (
        DerivativeWord((1,), (1,), Fraction(-4)),
        DerivativeWord((3,), (1,), Fraction(-4)),
    )
    assert exp.grade(2)[0] == (
        DerivativeWord((0,), (2,), Fraction(-2)),
        DerivativeWord((2,), (2,), Fraction(-6)),
    )
    lines = pretty(exp).splitlines()
    assert "r^1: [1] -4 dx dxbar - 4 dx^3 dxbar" in lines
    assert "r^2: [1] -2 dxbar^2 - 6 dx^2 dxbar^2" in lines


# ---------------------------------------------------------------------------
# 4. closed-form slow flows
# ---------------------------------------------------------------------------

def test_criterion_04_slow_flow_closed_forms_match_reference_rk4():
    # 20 random initial conditions per weight, spread over the three charts,
    # each against a 4000-step reference RK4 of the chart ODEs; <= 1e-8.
    # The physical drift rate eps = r^w * slow (K1/K3) respectively r^w (K2)
    # must be invariant to 1e-10.
    rng = np.random.default_rng(404)
    worst = 0.0
    for beta in (2, 4):
        w = 2 + beta
        for k in range(20):
            chart = (Chart.K1, Chart.K2, Chart.K3)[k % 3]
            r0 = float(rng.uniform(0.05, 1.0))
            if chart == Chart.K2:
                s0 = float(rng.uniform(-2.0, 1.0))
                t = float(rng.uniform(0.0, 3.0))
            else:
                s0 = float(rng.uniform(0.05, 1.0))
                if chart == Chart.K1:
                    horizon = blowup_time(ChartPoint(chart, r0, s0, beta))
                    t = float(rng.uniform(0.0, 0.8)) * horizon
                else:
                    t = float(rng.uniform(0.0, 3.0))
            start = ChartPoint(chart, r0, s0, beta)
            end = slow_flow_eval(start, t)
            rr, ss = rk4_chart_flow(chart.name, r0, s0, beta, t)
            worst = max(worst, abs(end.r - rr), abs(end.slow - ss))
            if chart == Chart.K2:
                assert end.r == r0
            else:
                inv0 = r0**w * s0
                inv1 = end.r**w * end.slow
                assert abs(inv1 - inv0) <= 1e-10 * max(1.0, abs(inv0))
    assert worst <= 1e-8


# ---------------------------------------------------------------------------
# 5. chart transitions
# ---------------------------------------------------------------------------

def test_criterion_05_chart_transition_consistency_and_handoff():
    # the inbound transition maps must preserve the physical parameters:
    # 100 random points (50 through each map), both charts reconstructed
    # to (mu, eps) independently, agreement to 1e-12
    rng = np.random.default_rng(505)
    for _ in range(50):
        beta = int(rng.choice((2, 4)))
        q2 = ChartPoint(
            Chart.K2, float(rng.uniform(0.3, 1.2)), -float(rng.uniform(0.1, 4.0)), beta
        )
        q1, _ = kappa12(q2)
        for got, want in zip(chart_params(q1), chart_params(q2)):
            assert math.isclose(got, want, rel_tol=1e-12, abs_tol=1e-12)
        q3 = ChartPoint(
            Chart.K3, float(rng.uniform(0.3, 1.2)), float(rng.uniform(0.1, 4.0)), beta
        )
        q2b, _ = kappa23(q3)
        for got, want in zip(chart_params(q2b), chart_params(q3)):
            assert math.isclose(got, want, rel_tol=1e-12, abs_tol=1e-12)

    # envelope hand-off coherence across the transition -> departure chart
    # boundary: continuing on the old chart must agree with the new chart
    # after the exact rescaling A2 = A3 * sqrt(1 + s) at matched times
    # t3(s) = ((1 + s)^2 - 1)/2, sup-normed over one overlap time unit
    model = get_model("m1")
    track = CoefficientTrack.from_chart(model, ChartPoint(Chart.K2, 0.05, 0.3, 2))
    state = homogeneous_state(track, envelope_grid(), 0.4)
    boundary = evolve(state, 0.7, 0.002)[-1]
    assert current_chart_point(boundary).slow == pytest.approx(1.0, abs=1e-12)
    departed = hand_off(boundary)
    assert departed.track.chart == Chart.K3

    continued = boundary
    worst = 0.0
    t3_prev = 0.0
    for j in range(1, 11):
        s = 0.1 * j
        for _ in range(50):
            continued = step_gl_real(continued, 0.002)
        t3_next = 0.5 * ((1.0 + s) ** 2 - 1.0)
        n_sub = 50
        dt3 = (t3_next - t3_prev) / n_sub
        for _ in range(n_sub):
            departed = step_gl_real(departed, dt3)
        t3_prev = t3_next
        predicted = np.asarray(departed.amplitudes[0]) * math.sqrt(1.0 + s)
        diff = float(np.max(np.abs(predicted - np.asarray(continued.amplitudes[0]))))
        worst = max(worst, diff / float(np.max(np.abs(continued.amplitudes[0]))))
    assert worst <= 1e-6


# ---------------------------------------------------------------------------
# 6. derived modulation coefficients
# ---------------------------------------------------------------------------

def test_criterion_06_derived_modulation_coefficients():
    # stationary-roll model: (4, 1, -3) exactly (the normal form subtracts
    # the stored cubic coefficient, so cubic_self = 3 enters as -3 A|A|^2)
    res = run_derivation("m1")
    assert res.symbolic["linear_diffusion"] == sp.Integer(4)
    assert res.symbolic["mu_coefficient"] == sp.Integer(1)
    assert res.symbolic["cubic_self"] == sp.Integer(3)

    # oscillatory two-species model: the closed-form coefficient functions
    # of (a, d1, d2), checked at the default parameters and four random
    # valid sets, to 1e-12
    def cgl_closed_form(ar, d1r, d2r):
        c1 = (d1r + d2r - sp.I * ar * (d1r - d2r)) / 2
        c2 = (1 + ar**2) / 2
        c3 = ((2 + ar**2) / ar**2 + sp.I * (4 - 7 * ar**2 + 4 * ar**4) / (3 * ar**3)) / 2
        return c1, c2, c3

    prng = random.Random(606)
    sets = [(1.0, 1.0, 0.5)]
    while len(sets) < 5:
        cand = (prng.uniform(0.4, 3.0), prng.uniform(0.2, 4.0), prng.uniform(0.2, 4.0))
        try:
            get_model("m2", a=cand[0], d1=cand[1], d2=cand[2])
        except ValueError:
            continue
        sets.append(cand)
    for a, d1, d2 in sets:
        res = run_derivation(get_model("m2", a=a, d1=d1, d2=d2))
        ar, d1r, d2r = (sp.Rational(Fraction(v)) for v in (a, d1, d2))
        for got, want in zip(
            (
                res.symbolic["linear_diffusion"],
                res.symbolic["mu_coefficient"],
                res.symbolic["cubic_self"],
            ),
            cgl_closed_form(ar, d1r, d2r),
        ):
            assert abs(complex(sp.N(got - want, 20))) <= 1e-12
    # frozen values at the default set
    res = run_derivation("m2")
    assert sp.expand(res.symbolic["linear_diffusion"] - (sp.Rational(3, 4) - sp.I / 4)) == 0
    assert res.symbolic["mu_coefficient"] == 1
    assert sp.expand(res.symbolic["cubic_self"] - (sp.Rational(3, 2) + sp.I / 6)) == 0

    # counter-propagating pair: unit group velocity, exactly
    res = run_derivation("m3")
    assert res.symbolic["advection"] == sp.Integer(1)
    assert res.coefficients.advection == 1.0

    # conserved sheared-flow model: exact rationals/radicals
    res = run_derivation("m4")
    assert res.symbolic["ch_fourth"] == sp.Integer(-3)
    assert sp.expand(res.symbolic["ch_second"] + sp.sqrt(2)) == 0
    assert res.symbolic["ch_cubic"] == sp.Rational(2, 3)


# ---------------------------------------------------------------------------
# 7. static envelope validity
# ---------------------------------------------------------------------------

def test_criterion_07_static_envelope_error_is_second_order():
    # sup-norm error between the direct simulation and the reconstructed
    # leading-order approximation over t in [0, delta^-2] scales like
    # delta^2: fitted slope in [1.7, 2.3] for both 1-D models
    deltas = (0.2, 0.1, 0.05)
    for mid in ("m1", "m2"):
        model = get_model(mid)
        errors = [static_validity_run(model, d).max_error for d in deltas]
        slope, _ = fit_error_slope(deltas, errors)
        assert 1.7 <= slope <= 2.3, (mid, slope, errors)


# ---------------------------------------------------------------------------
# 8. residual order of the reconstruction
# ---------------------------------------------------------------------------

def test_criterion_08_reconstruction_residual_is_third_order():
    # the reconstructed leading-order field solves the equation up to the
    # first neglected order r^3: residual slope in [2.6, 3.4]
    deltas = (0.2, 0.1, 0.05)
    model = get_model("m1")
    sups = [
        max(s for (_, s) in residual_scaling_run(model, d).residual_norms)
        for d in deltas
    ]
    slope, _ = fit_error_slope(deltas, sups)
    assert 2.6 <= slope <= 3.4, (slope, sups)


# ---------------------------------------------------------------------------
# 9. delayed stability loss
# ---------------------------------------------------------------------------

def test_criterion_09_delayed_takeoff_tracks_scalar_prediction():
    # drifting-parameter runs from mu(0) = -0.05 must take off past the
    # static threshold (mu* > 0) and track the scalar growth-balance
    # prediction within 30%, closer at the smaller drift rate.  For the
    # two-species model the drift forcing pins the state at a moving
    # equilibrium of size ~2*eps (at a = 1), which replaces the seed
    # amplitude as the effective take-off floor in the prediction.
    eps_list = (1e-3, 1e-4)
    for mid in ("m1", "m2"):
        model = get_model(mid)
        devs = []
        stars = []
        for eps in eps_list:
            if mid == "m1":
                oracle = scalar_delay_prediction(eps, -0.05, 1e-3, 1e-6)
            else:
                oracle = scalar_delay_prediction(eps, -0.05, 1e-2, 2.0 * eps)
            _, mu_star = delay_run(model, eps, mu0=-0.05, amplitude=1e-6)
            assert mu_star > 0.0, (mid, eps, mu_star)
            dev = abs(mu_star / oracle - 1.0)
            assert dev <= 0.30, (mid, eps, mu_star, oracle)
            devs.append(dev)
            stars.append(mu_star)
        # agreement with the prediction does not degrade as eps shrinks,
        # and mu* falls with eps exactly as the prediction says
        assert devs[1] <= devs[0] + 0.05, (mid, devs)
        assert stars[1] < stars[0], (mid, stars)


# ---------------------------------------------------------------------------
# 10. conserved-model linear rates and flow invariants
# ---------------------------------------------------------------------------

def test_criterion_10_conserved_linear_rates_and_flow_invariants():
    # long-wave decay rates at onset vs the quartic law -3 xi^4, within 10%
    m4 = get_model("m4")
    for xi in (0.02, 0.05, 0.1):
        want = -3.0 * xi**4
        got = linear_growth_probe(m4, xi, 0.0).rate
        assert abs(got - want) <= 0.1 * abs(want), (xi, got, want)

    # incompressibility and zero streamwise mean flow at every step of a
    # nonlinear drifting run (every step recorded)
    grid = default_grid(m4)
    x, y = grid.x(), grid.y()
    X, Y = np.meshgrid(x, y, indexing="ij")
    psi = 0.01 * np.sin(2 * np.pi * X / grid.length) * np.cos(Y) + 0.005 * np.cos(
        4 * np.pi * X / grid.length + 1.0
    ) * np.sin(2 * Y)
    u, v = divergence_free(grid, np.gradient(psi, axis=1), -np.gradient(psi, axis=0))
    init = make_state(m4, grid, (u, v), mu=0.0, eps=1e-3)
    traj = simulate(m4, init, 0.05, SolverConfig(dt=default_dt(m4), record_stride=1))
    assert len(traj.states) == 26
    for s in traj.states:
        uu, vv = s.components
        assert divergence_sup(grid, uu, vv) <= 1e-12
        assert abs(float(np.mean(uu))) <= 1e-12
        assert abs(float(np.mean(vv))) <= 1e-12


# ---------------------------------------------------------------------------
# 11. conserved-model mass transport law
# ---------------------------------------------------------------------------

def test_criterion_11_conserved_mass_transport_on_ramp_chart():
    # on the ramp chart the envelope mean obeys M(t) = M(0) * r(0)/r(t);
    # with eps1(0) = 0.1 and weight 6 the exact ratio at t = 2 is 2.5^(1/6)
    m4 = get_model("m4")
    track = CoefficientTrack.from_chart(m4, ChartPoint(Chart.K1, 0.3, 0.1, 4))
    grid = envelope_grid()
    xs = grid.x()
    a0 = (
        0.2
        + 0.03 * np.cos(2 * np.pi * xs / grid.length)
        + 0.02 * np.sin(4 * np.pi * xs / grid.length)
    ).astype(complex)
    state = ModulationState(track=track, grid=grid, amplitudes=(a0,))
    m0 = mass(state)[0].real
    for _ in range(1000):
        state = step_ch(state, 0.002)
    ratio = mass(state)[0].real / m0
    want = 2.5 ** (1.0 / 6.0)
    assert abs(ratio - want) / want <= 1e-8


# ---------------------------------------------------------------------------
# 12. determinism
# ---------------------------------------------------------------------------

def test_criterion_12_same_seed_reruns_are_byte_identical(tmp_path):
    # rerunning any experiment config with the same seed must reproduce
    # every CSV byte for byte, including across the worker pool
    configs = {
        "spectra": ExperimentConfig(
            experiment="spectra", model="m2", samples=41, xi_max=1.5, seed=11
        ),
        "physical": ExperimentConfig(
            experiment="simulate",
            model="m1",
            level="physical",
            grid_n_points=64,
            grid_length=float(8 * math.pi),
            t_end=0.5,
            record_stride=10,
            seed=11,
        ),
        "envelope": ExperimentConfig(
            experiment="simulate",
            model="m3",
            level="modulation",
            t_end=0.2,
            dt=0.01,
            record_stride=5,
            seed=11,
        ),
        "sweep": ExperimentConfig(
            experiment="sweep", model="m1", deltas=(0.2,), workers=2, seed=11
        ),
    }
    for name, config in configs.items():
        outs = []
        for run_id in ("a", "b"):
            out = tmp_path / name / run_id
            assert cli.run(config, out=str(out)) == 0
            outs.append(out)
        first, second = outs
        csvs = sorted(p.name for p in first.glob("*.csv"))
        assert csvs, name
        for fname in csvs:
            assert (first / fname).read_bytes() == (second / fname).read_bytes(), (
                name,
                fname,
            )
