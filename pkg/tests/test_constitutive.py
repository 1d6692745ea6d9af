import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnflow import constitutive as cl
from nnflow.constitutive import Newtonian, PowerLawA, PowerLawB, UserDefinedLaw, reciprocal_law
from nnflow.errors import DomainError, UnsupportedOrderError

BUILTINS = [
    Newtonian(1.0),
    Newtonian(2.0),
    PowerLawA(2.5),
    PowerLawA(3.0),
    PowerLawA(4.0),
    PowerLawA(3.0, m0=0.3),
    PowerLawB(1.5),
    PowerLawB(3.0),
    PowerLawB(1.5, m0=2.0, sigma_reg=0.1),
]


def test_eval_examples():
    assert cl.eval(PowerLawA(4, m0=1), 0.0) == 1.0
    assert cl.eval(PowerLawA(4, m0=1), 2.0) == pytest.approx(3.0, rel=1e-15)
    assert cl.eval(PowerLawB(3, m0=1, sigma_reg=1), 0.0) == 2.0


def test_eval_deriv_examples():
    assert cl.eval_deriv(PowerLawA(4, m0=1), 5.0, 1) == pytest.approx(1.0, rel=1e-15)
    assert cl.eval_deriv(Newtonian(2.0), 7.0, 1) == 0.0
    assert cl.eval_deriv(PowerLawB(3, m0=1, sigma_reg=1), 0.0, 1) == pytest.approx(0.5, rel=1e-15)


def test_eval_antideriv_examples():
    assert cl.eval_antideriv(Newtonian(2.0), 3.0) == 6.0
    assert cl.eval_antideriv(PowerLawA(4, m0=1), 2.0) == pytest.approx(4.0, rel=1e-14)
    for law in BUILTINS + [reciprocal_law()]:
        assert cl.eval_antideriv(law, 0.0) == 0.0


def test_power_a_floor_is_m0():
    # the base m0**(2/(q-2)) raised to (q-2)/2 gives back m0
    for q, m0 in [(2.5, 0.7), (3.0, 2.0), (7.0, 1.3)]:
        assert PowerLawA(q, m0)(0.0) == pytest.approx(m0, rel=1e-14)


@pytest.mark.parametrize("law", BUILTINS, ids=lambda l: repr(l))
def test_negative_argument_is_domain_error(law):
    with pytest.raises(DomainError):
        law(-1e-3)
    with pytest.raises(DomainError):
        law.deriv(np.array([1.0, -2.0]), 1)
    with pytest.raises(DomainError):
        law.antideriv(-1.0)


@pytest.mark.parametrize("k", [0, 4, -1])
def test_unsupported_derivative_order(k):
    with pytest.raises(UnsupportedOrderError):
        PowerLawA(3.0).deriv(1.0, k)


@pytest.mark.parametrize(
    "factory",
    [
        lambda: PowerLawA(2.0),
        lambda: PowerLawA(1.5),
        lambda: PowerLawB(1.0),
        lambda: PowerLawB(2.0, sigma_reg=0.0),
        lambda: Newtonian(0.0),
        lambda: Newtonian(-1.0),
    ],
)
def test_invalid_parameters_rejected(factory):
    with pytest.raises(DomainError):
        factory()


def test_vectorised_evaluation_matches_scalar():
    law = PowerLawB(1.5, sigma_reg=0.5)
    s = np.array([0.0, 0.1, 3.0, 1e4])
    for k in (1, 2, 3):
        vec = law.deriv(s, k)
        assert vec.shape == s.shape
        for si, vi in zip(s, vec):
            assert law.deriv(float(si), k) == vi


@pytest.mark.parametrize("law", BUILTINS, ids=lambda l: repr(l))
def test_floor_holds_on_samples(law):
    s = np.concatenate(([0.0], np.logspace(-10, 6, 2000)))
    assert np.all(law(s) >= law.m0 - 1e-12 * law.m0)


@pytest.mark.parametrize("law", BUILTINS, ids=lambda l: repr(l))
def test_excess_matches_difference(law):
    s = np.logspace(-3, 5, 50)
    np.testing.assert_allclose(law.excess(s), law(s) - law.m0, rtol=1e-9, atol=1e-14 * law.m0)


# finite-difference oracles for the analytic derivatives

def _fd1(f, s):
    h = s * 1e-5
    return (f(s + h) - f(s - h)) / (2 * h)


def _fd2(f, s, h):
    return (f(s + h) - 2 * f(s) + f(s - h)) / h**2


def _fd3(f, s, h):
    return (f(s + 2 * h) - 2 * f(s + h) + 2 * f(s - h) - f(s - 2 * h)) / (2 * h**3)


def _richardson(stencil, f, s, h):
    return (4 * stencil(f, s, h / 2) - stencil(f, s, h)) / 3


@pytest.mark.parametrize("law", BUILTINS, ids=lambda l: repr(l))
@pytest.mark.parametrize("s", [0.1, 1.0, 10.0, 100.0])
def test_derivatives_match_finite_differences(law, s):
    g = lambda x: law(x)  # noqa: E731
    approx = {
        1: _fd1(g, s),
        2: _richardson(_fd2, g, s, s * 1e-3),
        3: _richardson(_fd3, g, s, s * 2e-2),
    }
    for k, fd in approx.items():
        exact = law.deriv(s, k)
        # zero derivatives are compared on the natural scale G/s^k
        scale = abs(exact) if exact != 0 else law(s) / s**k
        assert abs(fd - exact) <= 1e-6 * scale, (k, fd, exact)


@pytest.mark.parametrize("law", BUILTINS + [reciprocal_law()], ids=lambda l: repr(l))
@settings(max_examples=25, deadline=None)
@given(s=st.floats(0.1, 1e3))
def test_antiderivative_differentiates_to_g(law, s):
    h = s * 1e-5
    fd = (law.antideriv(s + h) - law.antideriv(s - h)) / (2 * h)
    assert fd == pytest.approx(law(s), rel=1e-6)


def test_antiderivative_is_monotone():
    s = np.linspace(0, 50, 500)
    for law in BUILTINS:
        assert np.all(np.diff(law.antideriv(s)) > 0)


def test_user_law_quadrature_antiderivative():
    base = reciprocal_law()
    quad_law = UserDefinedLaw(1.0, *base._callbacks, label="reciprocal-quad")
    s = np.array([0.0, 0.5, 3.0, 1e3])
    np.testing.assert_allclose(quad_law.antideriv(s), np.log1p(s), rtol=1e-10)


def test_verify_structural_newtonian():
    rep = cl.verify_structural(Newtonian(1.0), 10_000, 1e6)
    assert rep.passed
    assert rep.min_g == 1.0 and rep.min_coercive == 1.0


def test_verify_structural_power_a_minimum_at_zero():
    law = PowerLawA(4.0, m0=1.0)
    rep = cl.verify_structural(law, 10_000, 1e6)
    # oracle: G + 2G's = 1 + 3s, minimised at s = 0
    s = np.linspace(0, 1e6, 100_001)
    oracle = 1 + 3 * s
    assert oracle.min() == 1.0 and s[oracle.argmin()] == 0.0
    assert rep.passed
    assert rep.min_coercive == 1.0
    assert rep.argmin_coercive == 0.0


def test_verify_structural_flags_reciprocal_law():
    rep = cl.verify_structural(reciprocal_law(1.0), 10_000, 1e6)
    # oracle scan of (1 - s)/(1 + s)^2: sign change at s = 1
    s = np.linspace(0, 10, 100_001)
    oracle = (1 - s) / (1 + s) ** 2
    assert np.all(oracle[s < 1] > 0) and np.all(oracle[s > 1] < 0)
    assert not rep.passed
    assert rep.min_coercive < 0
    assert rep.argmin_coercive > 1
    assert rep.min_coercive == pytest.approx(oracle.min(), rel=1e-3)


@pytest.mark.parametrize("law", BUILTINS, ids=lambda l: repr(l))
def test_builtins_pass_audit(law):
    rep = law.audit()
    assert rep.passed, rep
    assert all(math.isfinite(v) for v in rep.ratio_bounds.values())


def test_ratio_bounds_do_not_grow_with_s_max():
    law = PowerLawA(4.0)
    small = cl.verify_structural(law, 10_000, 1e3).ratio_bounds
    large = cl.verify_structural(law, 10_000, 1e6).ratio_bounds
    assert set(small) == {(k, a) for k in (1, 2, 3) for a in (0, 1)}
    for key in small:
        assert math.isfinite(large[key])
        # s/(1+s) creeps towards its supremum 1; anything beyond 1% is growth
        assert large[key] <= 1.01 * small[key] + 1e-12


def test_verify_structural_rejects_tiny_sample_count():
    with pytest.raises(DomainError):
        cl.verify_structural(Newtonian(), 10, 1.0)


def test_law_from_config_labels():
    assert isinstance(cl.law_from_config({"kind": "newtonian", "m0": 2}), Newtonian)
    a = cl.law_from_config({"kind": "power_a", "m0": 1, "q": 3})
    assert isinstance(a, PowerLawA) and a.q == 3.0
    b = cl.law_from_config({"kind": "power_b", "m0": 1, "q": 1.5, "sigma_reg": 0.2})
    assert isinstance(b, PowerLawB) and b.sigma_reg == 0.2
    with pytest.raises(DomainError):
        cl.law_from_config({"kind": "bingham"})
    with pytest.raises(DomainError):
        cl.law_from_config({"kind": "power_a"})
