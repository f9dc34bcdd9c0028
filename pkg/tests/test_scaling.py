import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from crsos.mean_field import MeanFieldParams, mf_rhs
from crsos.scaling import (BumpProfile, SelfSimilarParams, SupportError, barenblatt_f, continuum_coefficient_A,
                           continuum_drift, epsilon_refinement, exponent_report, fit_exponent,
                           normalizing_C1, pde_convergence, pde_residual, pk_t, pk_t_printed,
                           profile_moments, self_similar_P, self_similar_P_printed,
                           similarity_ode_residual)


def support_mass(g, w):
    """Integral of g over (-w, w) after x = w sin(theta), which tames the edge singularity."""
    value, _ = quad(lambda th: g(w * math.sin(th)) * w * math.cos(th), -math.pi / 2, math.pi / 2,
                    epsabs=1e-13, epsrel=1e-13, limit=200)
    return value


def test_A_vanishes_when_rates_balance():
    assert continuum_coefficient_A(MeanFieldParams((0.3, 1, 2, 0.5), (0.3, 1, 2, 0.5))) == 0.0
    assert continuum_coefficient_A(MeanFieldParams((1, 1, 1, 1), (0, 0, 0, 0))) == 8.0


def test_A_is_linear_in_rate_differences():
    rng = np.random.default_rng(0)
    d = rng.uniform(0, 1, 4)
    diff = rng.uniform(0, 1, 4)
    a1 = continuum_coefficient_A(MeanFieldParams(d + diff, d))
    a2 = continuum_coefficient_A(MeanFieldParams(d + 2 * diff, d))
    assert a2 == pytest.approx(2 * a1, rel=1e-14)


def test_A_from_a_direct_taylor_fit():
    """Fit the bulk closure on p(eps k) against eps**2 d2/dl2 p**5 at one point."""
    rng = np.random.default_rng(1)
    params = MeanFieldParams(rng.uniform(0, 2, 4), rng.uniform(0, 2, 4))
    bump = BumpProfile()
    eps = 1e-3
    k = np.arange(int(3.0 / eps) + 1)
    p, *_ = bump.derivatives(eps * k)
    mf = MeanFieldParams(params.c, params.d, k_max=len(k) - 1)
    centre = int(round(bump.mu / eps))
    ratio = mf_rhs(p, mf, boundary="none")[centre] / (eps ** 2 * bump.d2_p5(bump.mu))
    assert ratio == pytest.approx(continuum_coefficient_A(params), rel=1e-4)


def test_drift_coefficient():
    params = MeanFieldParams((0, 2, 1, 0), (0, 0.5, 1, 0))
    assert continuum_drift(params) == pytest.approx((2 - 1) - (0.5 - 1))
    symmetric = MeanFieldParams((1, 1, 1, 1), (0.5, 0.7, 0.7, 0.5))
    assert continuum_drift(symmetric) == 0.0


def test_refinement_is_second_order_without_drift():
    res = epsilon_refinement(MeanFieldParams((1, 1, 1, 1), (0, 0, 0, 0)))
    assert res.min_order >= 1.8
    gap = np.abs(res.center_ratio - 1.0)
    np.testing.assert_allclose(gap[:-1] / gap[1:], 4.0, rtol=0.1)


def test_refinement_with_drift_term():
    rng = np.random.default_rng(2)
    params = MeanFieldParams(rng.uniform(0, 2, 4), rng.uniform(0, 2, 4))
    assert continuum_drift(params) != 0
    lead = epsilon_refinement(params)
    full = epsilon_refinement(params, include_drift=True)
    centre = epsilon_refinement(params, where="center")
    # the odd first-order term caps the leading-order window error at O(eps)
    assert 0.8 < lead.min_order < 1.2
    assert full.min_order >= 1.8 and centre.min_order >= 1.8


def test_profile_values():
    p = SelfSimilarParams(1.0, 1.0)
    assert barenblatt_f(0.0, p) == 1.0
    assert barenblatt_f(math.sqrt(15), p) == 0.0
    assert barenblatt_f(5.0, p) == 0.0
    q = SelfSimilarParams(1.0, 16.0)
    assert barenblatt_f(math.sqrt(15), q) == pytest.approx(15 ** 0.25, rel=1e-14)
    assert barenblatt_f(math.sqrt(15), q) == pytest.approx((16 - 1) ** 0.25, rel=1e-14)


def test_profile_shape():
    p = SelfSimilarParams(2.0, 0.7)
    right = np.linspace(0, p.half_width * 1.2, 201)
    x = np.concatenate([-right[:0:-1], right])
    f = barenblatt_f(x, p)
    np.testing.assert_array_equal(f, f[::-1])
    assert f.argmax() == 200
    # continuity at the edge: values shrink to zero approaching it
    near = barenblatt_f(p.half_width * (1 - np.geomspace(1e-2, 1e-10, 5)), p)
    assert np.all(np.diff(near) < 0) and near[-1] < 1e-2


def test_normalizing_constant():
    analytic = math.sqrt(math.pi) * gamma_fn(1.25) / gamma_fn(1.75)
    for A in (0.1, 1.0, 10.0):
        p = SelfSimilarParams(A)
        assert p.C1 == pytest.approx((1 / (math.sqrt(15 * A) * analytic)) ** (4 / 3), rel=1e-12)
        assert support_mass(lambda x: barenblatt_f(x, p), p.half_width) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        normalizing_C1(0.0)


@pytest.mark.parametrize("A", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("C1", [0.5, 1.0, 4.0])
def test_similarity_ode_holds(A, C1):
    p = SelfSimilarParams(A, C1)
    xs = np.linspace(-0.99, 0.99, 100) * p.half_width
    assert similarity_ode_residual(p, xs) <= 1e-10
    assert similarity_ode_residual(p, [0.0]) == 0.0
    assert similarity_ode_residual(p, xs * 0.95, method="fd", h=1e-4) <= 1e-6


def test_ode_check_has_power():
    p = SelfSimilarParams(1.0, 1.0, gamma=1 / 5)
    xs = np.linspace(-0.99, 0.99, 100) * p.half_width
    assert similarity_ode_residual(p, xs) > 1e-3


def test_ode_rejects_points_outside_support():
    p = SelfSimilarParams(1.0, 1.0)
    with pytest.raises(SupportError):
        similarity_ode_residual(p, [p.half_width])


def test_self_similar_centre_and_collapse():
    p = SelfSimilarParams(1.0, 2.0)
    for s in (0.5, 1.0, 7.0):
        assert self_similar_P(0.0, s, p) == pytest.approx(s ** (-1 / 6) * 2.0 ** 0.25, rel=1e-15)
    x = np.linspace(-p.half_width, p.half_width, 51)
    for s in (0.1, 1.0, 30.0):
        collapsed = s ** p.gamma * self_similar_P(x * s ** p.gamma, s, p)
        assert np.abs(collapsed - barenblatt_f(x, p)).max() <= 1e-12


def test_mass_is_conserved_in_time():
    p = SelfSimilarParams(1.3)
    masses = []
    for s in (1.0, 4.0):
        masses.append(support_mass(lambda l: self_similar_P(l, s, p), p.half_width * s ** p.gamma))
    assert masses[0] == pytest.approx(masses[1], abs=1e-8)


def test_lattice_form_matches_continuum_form():
    p = SelfSimilarParams(1.0, epsilon=1e-2)
    k = np.arange(-50, 50)
    t = np.geomspace(1, 1e4, 10)
    K, T = np.meshgrid(k, t, indexing="ij")
    assert np.abs(pk_t(K, T, p) - self_similar_P(p.epsilon * K, p.epsilon ** 2 * T, p)).max() <= 1e-13


def test_printed_forms_differ_from_similarity_form():
    p = SelfSimilarParams(1.0, 1.0)
    # the printed continuum form equals s**(-1/12) f(l s**(-1/6))
    l, s = 0.7, 3.0
    assert self_similar_P_printed(l, s, p) == pytest.approx(s ** (-1 / 12) * barenblatt_f(l / s ** (1 / 6), p),
                                                            rel=1e-14)
    assert self_similar_P_printed(0.0, s, p) != pytest.approx(self_similar_P(0.0, s, p))
    assert pk_t_printed(0, 1.0, p) == pytest.approx((p.C1 / math.sqrt(p.epsilon)) ** 0.25)


def test_pde_residual_converges_at_second_order():
    p = SelfSimilarParams(1.0)
    ls = np.linspace(-0.5, 0.5, 11) * p.half_width
    conv = pde_convergence(p, ls, np.linspace(1.0, 3.0, 5))
    assert conv["min_order"] >= 1.8
    ratios = np.array(conv["residuals"][:-1]) / np.array(conv["residuals"][1:])
    np.testing.assert_allclose(ratios, 4.0, rtol=0.1)


def test_pde_residual_degenerate_cases():
    zero_A = SelfSimilarParams(0.0, 1.0)
    assert pde_residual(zero_A, [0.0, 0.5], [1.0, 2.0], 1e-3, profile=lambda l, s: np.ones_like(l)) == 0.0
    # flat in l: diffusion vanishes, the residual is the time derivative alone
    p = SelfSimilarParams(1.0, 1.0)
    flat = lambda l, s: s ** (-1 / 6) * np.ones_like(l)
    res = pde_residual(p, [0.0], [1.0, 2.0], 1e-4, profile=flat)
    assert res == pytest.approx(1 / 6, rel=1e-6)
    with pytest.raises(SupportError):
        pde_residual(p, [p.half_width], [1.0], 1e-3)


@pytest.mark.parametrize("exponent, scale", [(1 / 12, 1.0), (1 / 6, 1.0), (1 / 4, 3.0), (1 / 3, 0.2)])
def test_fit_exponent_recovers_planted_power_laws(exponent, scale):
    t = 2.0 ** np.arange(11)
    fit = fit_exponent(np.column_stack([t, scale * t ** exponent]))
    assert fit.slope == pytest.approx(exponent, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(scale), abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_exponent_input_checks():
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, 2)])
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, -2), (3, 1), (4, 1), (5, 1)])


def test_exponent_report_fits_are_clean():
    p = SelfSimilarParams(1.0)
    for form in ("printed", "consistent"):
        report = exponent_report(p, form=form)
        assert report["fits"]["mean"]["r_squared"] >= 0.999
        assert report["fits"]["variance"]["r_squared"] >= 0.999
        assert report["claimed"] == {"mean": 1 / 12, "width_sq": 1 / 4}


def test_moment_supports():
    p = SelfSimilarParams(1.0)
    half = profile_moments(10.0, p, form="consistent")
    full = profile_moments(10.0, p, form="consistent", support="symmetric")
    assert abs(full["mean"]) < 1e-9 and half["mean"] > 0
    with pytest.raises(ValueError):
        profile_moments(10.0, p, support="positive")
