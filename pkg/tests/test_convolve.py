import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from shockratio.convolve import (
    GridFunction,
    Window,
    delta_integral,
    equivalence_integral,
    grid_from_density,
    incomplete_beta_closed_form,
    kappa_exponent,
    kappa_verify,
    monotone_threshold,
    propagation_check,
    ratio_bounds_check,
    scaling_criterion_check,
    self_convolve,
    survival_mixed,
    survival_numeric,
)
from shockratio.dist import (
    ConstantNearZero,
    DiscreteSpec,
    GammaLike,
    PowerLawOnInterval,
    ShockDistribution,
    Tabulated,
)
from shockratio.errors import (
    EpsNotValid,
    PreconditionError,
    ResolutionTooCoarse,
    WindowInvalid,
)

UNIFORM = ConstantNearZero(1.0, 1.0)
SQRT = PowerLawOnInterval(0.5, 1.0)


def simplex(x, n):
    return x**n / math.factorial(n)


def power_closed(alpha, x, n):
    return math.gamma(alpha + 1) ** n * x ** (n * alpha) / math.gamma(n * alpha + 1)


def triangle_grid(h=1e-3):
    t = h * np.arange(int(round(2 / h)) + 1)
    return GridFunction(h, np.minimum(t, 2 - t))


# --- self_convolve ---------------------------------------------------------


def test_uniform_square_is_triangle():
    g = grid_from_density(UNIFORM, 1e-3, 1.0)
    levels = self_convolve(g, 2)
    f2 = levels[1]
    inner = slice(1, 900)
    np.testing.assert_allclose(f2.values[inner], f2.nodes[inner], atol=1e-10)


def test_sqrt_law_square_is_flat():
    # (1/4) B(1/2, 1/2) = pi/4 on (0, 1]
    assert special.beta(0.5, 0.5) / 4 == pytest.approx(math.pi / 4)
    g = grid_from_density(SQRT, 1e-3, 1.0)
    f2 = self_convolve(g, 2)[1]
    idx = [100, 300, 500, 700, 900]
    np.testing.assert_allclose(f2.values[idx], math.pi / 4, rtol=1e-3)


def test_self_convolve_identity_and_guard():
    g = grid_from_density(UNIFORM, 1e-2, 1.0)
    (only,) = self_convolve(g, 1)
    assert only is g
    with pytest.raises(PreconditionError):
        self_convolve(g, 0)


def test_grid_mass_is_bounded():
    with pytest.raises(PreconditionError):
        GridFunction(0.1, np.full(20, 1.0))
    with pytest.raises(PreconditionError):
        GridFunction(0.1, np.array([0.1, -0.1, 0.1]))


# --- survival_numeric ------------------------------------------------------


def test_uniform_survival_example():
    tab = survival_numeric(UNIFORM, 0.8, 3)
    assert tab.method == "grid"
    assert tab.values[0] == 1.0
    assert tab.values[3] == pytest.approx(0.8**3 / 6, rel=1e-9)


def test_sqrt_law_survival_example():
    expected = 0.81 * math.pi**2 / 32
    assert power_closed(0.5, 0.9, 4) == pytest.approx(expected, rel=1e-14)
    tab = survival_numeric(SQRT, 0.9, 4)
    assert tab.values[4] == pytest.approx(expected, rel=1e-6)
    assert tab.truncation_error_bound[4] >= 0


@pytest.mark.parametrize(
    "fam, closed, x",
    [
        (UNIFORM, simplex, 0.8),
        (SQRT, lambda x, n: power_closed(0.5, x, n), 0.9),
        (PowerLawOnInterval(2.0, 1.0), lambda x, n: power_closed(2.0, x, n), 0.7),
    ],
)
def test_survival_matches_closed_forms(fam, closed, x):
    tab = survival_numeric(fam, x, 15)
    ref = np.array([closed(x, n) for n in range(16)])
    np.testing.assert_allclose(tab.values, ref, rtol=1e-3)


def test_refinement_order():
    errs = []
    for h in (1e-3, 5e-4, 2.5e-4):
        tab = survival_numeric(SQRT, 0.9, 15, step=h)
        ref = np.array([power_closed(0.5, 0.9, n) for n in range(16)])
        errs.append(np.max(np.abs(tab.values / ref - 1)))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.5


def test_uniform_grid_is_exact_to_roundoff():
    tab = survival_numeric(UNIFORM, 0.8, 15, step=1e-3)
    ref = np.array([simplex(0.8, n) for n in range(16)])
    np.testing.assert_allclose(tab.values, ref, rtol=1e-10)


def test_richardson_tightens_power_law():
    ref = power_closed(0.5, 0.9, 10)
    plain = survival_numeric(SQRT, 0.9, 10, step=1e-3)
    rich = survival_numeric(SQRT, 0.9, 10, step=1e-3, richardson=True)
    assert abs(rich.values[10] / ref - 1) < abs(plain.values[10] / ref - 1)


def test_survival_guards():
    with pytest.raises(ResolutionTooCoarse):
        survival_numeric(UNIFORM, 1.0, 50, step=0.01)
    with pytest.raises(PreconditionError):
        survival_numeric(UNIFORM, 0.0, 3)


# --- monotone_threshold ----------------------------------------------------


@pytest.mark.parametrize("fam, x, expected", [(UNIFORM, 0.9, 1), (SQRT, 0.9, 2)])
def test_monotone_threshold_examples(fam, x, expected):
    rep = monotone_threshold(fam, x, 6)
    assert rep.threshold_n == expected
    assert all(n < expected for n in rep.violations)


def test_gamma_threshold_refines():
    fam = GammaLike(0.3)
    coarse = monotone_threshold(fam, 1.0, 9)
    fine = monotone_threshold(fam, 1.0, 9, step=coarse.step / 2)
    assert coarse.found and fine.found
    assert coarse.threshold_n == fine.threshold_n
    # upward closed: every violation precedes the threshold
    assert max(fine.violations) < fine.threshold_n


# --- scaling and propagation ----------------------------------------------


@pytest.mark.parametrize(
    "fam, beta, expected",
    [
        # f(ct) / f(t) = c^-0.5 for the square-root law
        (SQRT, -0.75, True),
        (SQRT, -0.5, True),
        (SQRT, -0.4, False),
        (SQRT, 0.75, False),
        (PowerLawOnInterval(2.0), 0.0, True),
        (UNIFORM, -0.5, True),
    ],
)
def test_scaling_criterion(fam, beta, expected):
    cs = np.linspace(0.05, 0.95, 19)
    assert scaling_criterion_check(fam, beta, 0.5, cs) is expected


def test_scaling_criterion_guards():
    with pytest.raises(PreconditionError):
        scaling_criterion_check(UNIFORM, -1.0, 0.5, [0.5])
    with pytest.raises(PreconditionError):
        scaling_criterion_check(UNIFORM, 0.0, 0.5, [1.0])


def test_propagation_triangle():
    g = triangle_grid()
    assert propagation_check(g, 0, 1.0)
    assert propagation_check(g, 1, 1.0)


def test_propagation_constant():
    h = 1e-3
    g = GridFunction(h, np.full(int(round(0.3 / h)) + 1, 1.0))
    assert propagation_check(g, 2, 0.1)


def test_propagation_rejects_decreasing_input():
    h = 1e-2
    t = h * np.arange(101)
    with pytest.raises(PreconditionError):
        propagation_check(GridFunction(h, 2 * (1 - t)), 1, 0.5)


# --- ratio bounds ----------------------------------------------------------


@pytest.mark.parametrize("n", [1, 5, 10, 40])
def test_ratio_bounds_uniform(n):
    x = 0.8
    rec = ratio_bounds_check(UNIFORM, x, n, 1)
    assert rec.ratio == pytest.approx(x / (n + 1), rel=1e-12)
    assert rec.p_small == pytest.approx(1 / n)
    assert rec.implied_upper_const == pytest.approx(x * n / (n + 1), rel=1e-12)
    assert 0.4 - 1e-12 <= rec.implied_lower_const <= 0.8
    assert rec.exp_bound_ok


def test_ratio_bounds_sqrt_law():
    rec = ratio_bounds_check(SQRT, 0.9, 100, 2)
    ref = math.gamma(1.5) * 0.9**0.5 * math.gamma(51) / math.gamma(51.5)
    assert rec.ratio == pytest.approx(ref, rel=1e-10)
    assert 0.05 <= rec.implied_upper_const <= 20
    assert rec.exp_bound_ok


def test_ratio_bounds_guard():
    with pytest.raises(PreconditionError):
        ratio_bounds_check(UNIFORM, 0.8, 2, 3)


# --- equivalence integral -------------------------------------------------


def test_equivalence_uniform_example():
    # direct evaluation of (1/11)(1 - (1 - log 10 / 10)^11)
    ref = (1 - (1 - math.log(10) / 10) ** 11) / 11
    assert equivalence_integral(UNIFORM, 1.0, 1.0, 10) == pytest.approx(ref, rel=1e-12)
    assert ref == pytest.approx(0.0857993, abs=1e-7)


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_equivalence_constant_head_vs_quad(n):
    fam = ConstantNearZero(2.0, 0.5)
    x = 0.8
    L = math.log(n) / n
    ref = integrate.quad(lambda t: 2.0 * (1 - t / x) ** n, 0, L, epsabs=0, epsrel=1e-13)[0]
    assert equivalence_integral(fam, 1.0, x, n) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("n", [10, 50, 200])
def test_equivalence_power_head_matches_beta(n):
    x = 0.9
    L = math.log(n) / n
    ref = integrate.quad(lambda t: 0.5 * t**-0.5 * (1 - t / x) ** (0.5 * n), 0, L, epsabs=0, epsrel=1e-13)[0]
    assert equivalence_integral(SQRT, 0.5, x, n) == pytest.approx(ref, rel=1e-10)
    assert 0.5 * incomplete_beta_closed_form(0.5, x, n, L) == pytest.approx(ref, rel=1e-10)


def test_equivalence_gamma_uses_quadrature():
    fam = GammaLike(0.5)
    x, n = 1.0, 50
    L = math.log(n) / n
    pdf = lambda t: t**-0.5 * math.exp(-t) / math.gamma(0.5)
    ref = integrate.quad(lambda t: pdf(t) * (1 - t / x) ** (0.5 * n), 0, L, epsabs=0, epsrel=1e-12)[0]
    assert equivalence_integral(fam, 0.5, x, n) == pytest.approx(ref, rel=1e-8)


def test_windows():
    assert Window("c-log", 2.0)(math.e) == pytest.approx(2.0)
    assert Window("sqrt-log")(math.e**4) == pytest.approx(2.0)
    with pytest.raises(WindowInvalid):
        equivalence_integral(UNIFORM, 1.0, 0.4, 10, "log")
    with pytest.raises(WindowInvalid):
        Window("c-log", 3.0).validate(1.0)
    with pytest.raises(WindowInvalid):
        Window("linear").validate(1.0)


# --- mixed laws ------------------------------------------------------------


def test_mixed_far_atom():
    d = ShockDistribution.mixed(0.5, UNIFORM, DiscreteSpec(0, ((10, 1),)))
    tab = survival_mixed(d, 0.8, 5)
    ref = [0.5**n * simplex(0.8, n) for n in range(6)]
    np.testing.assert_allclose(tab.values, ref, rtol=1e-9)


def test_mixed_near_atom_enumeration():
    d = ShockDistribution.mixed(0.5, UNIFORM, DiscreteSpec(0, ((Fraction(3, 5), 1),)))
    tab = survival_mixed(d, 0.8, 2)
    # both continuous: 0.25 * 0.32; one atom: 2 * 0.25 * P[U <= 0.2]; two atoms exceed x
    assert tab.values[0] == 1.0
    assert tab.values[2] == pytest.approx(0.25 * 0.32 + 2 * 0.25 * 0.2, rel=1e-9)


def test_mixed_small_atom_weight_is_continuous():
    d = ShockDistribution.mixed(1 - 1e-12, UNIFORM, DiscreteSpec(0, ((Fraction(1, 4), 1),)))
    tab = survival_mixed(d, 0.8, 8)
    ref = survival_numeric(UNIFORM, 0.8, 8)
    np.testing.assert_allclose(tab.values, ref.values, rtol=1e-6)


def test_mixed_guard():
    with pytest.raises(PreconditionError):
        survival_mixed(ShockDistribution.of(UNIFORM), 0.8, 2)


# --- proof-level constants -------------------------------------------------


@pytest.mark.parametrize(
    "fam, beta, expected",
    [(SQRT, 0.6, 2.0), (UNIFORM, 1.1, 3.0)],
)
def test_kappa_examples(fam, beta, expected):
    assert kappa_exponent(fam, 1.0, beta, 0.5) == pytest.approx(expected, rel=1e-12)


def test_kappa_verifier():
    kappa = kappa_exponent(SQRT, 1.0, 0.6, 0.5)
    assert kappa_verify(SQRT, 1.0, kappa)
    assert kappa_verify(SQRT, 1.0, 0.5)
    assert not kappa_verify(SQRT, 1.0, 0.3)


def test_kappa_guards():
    with pytest.raises(PreconditionError):
        kappa_exponent(SQRT, 1.0, 0.4, 0.5)
    # the density jumps from 0.2 to about 2 near 0.45, so F is locally steeper than t^1.5
    fam = Tabulated(np.array([0.0, 0.4, 0.5, 1.0]), np.array([0.2, 0.2, 2.0, 2.0]))
    fam = Tabulated(fam.t, fam.f / float(fam.cdf(1.0)))
    with pytest.raises(EpsNotValid):
        kappa_exponent(fam, 1.0, 1.5, 0.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.0, 3.0))
def test_kappa_verifier_power_law(alpha, extra):
    assert kappa_verify(PowerLawOnInterval(alpha), 1.0, alpha + extra, samples=500)


def test_delta_integral_example():
    # int_{1/100}^1 y (1-y)^99 dy, incomplete Beta oracle
    ref = special.beta(2, 100) * special.betaincc(2, 100, 0.01)
    assert delta_integral(1.0, 1.0, 100, 1) == pytest.approx(ref, rel=1e-10)
    assert ref < 1 / (100 * 101)


def test_delta_integral_scaling():
    vals = [n**1.5 * delta_integral(1.0, 0.5, n, 2) for n in (100, 1000, 10000)]
    assert max(vals) / min(vals) < 2


def test_delta_integral_guard():
    with pytest.raises(PreconditionError):
        delta_integral(0.5, 1.0, 2, 1)
