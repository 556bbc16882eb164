import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cradesign import fresnel
from cradesign.fresnel import InterfaceContext, TE, TM

from oracles import mp_coefficients, mp_value_and_derivative, shorted_slab_reflection

D = 8.13e-3


def random_contexts(n, seed=0):
    rng = np.random.default_rng(seed)
    return InterfaceContext(
        eps_b=1.0,
        eps_p=rng.uniform(1.0, 30.0, n),
        theta_i=np.deg2rad(rng.uniform(0.0, 80.0, n)),
        frequency=rng.uniform(70.5e9, 77e9, n),
        thickness=D,
    )


def coefficient_functions():
    """(name, value(ctx), derivative(ctx)) for every differentiated quantity."""
    tm, te = fresnel.half_plane_tm, fresnel.half_plane_te
    return [
        ("tm_gamma", lambda c: tm(c).gamma, lambda c: tm(c).d_gamma),
        ("tm_t", lambda c: tm(c).t, lambda c: tm(c).d_t),
        ("te_gamma", lambda c: te(c).gamma_bp, lambda c: te(c).d_gamma_bp),
        ("te_t_bp", lambda c: te(c).t_bp, lambda c: te(c).d_t_bp),
        ("te_t_pb", lambda c: te(c).t_pb, lambda c: te(c).d_t_pb),
        ("cos_t", lambda c: fresnel.snell(c)[0], lambda c: fresnel.snell(c)[1]),
        ("phase", lambda c: fresnel.phase_delay(c)[0], lambda c: fresnel.phase_delay(c)[1]),
        ("layer_te", lambda c: fresnel.layer_response(c, TE).gamma,
         lambda c: fresnel.layer_response(c, TE).d_gamma),
        ("layer_tm", lambda c: fresnel.layer_response(c, TM).gamma,
         lambda c: fresnel.layer_response(c, TM).d_gamma),
    ]


def fd_errors(ctx, value, deriv):
    eps = np.asarray(ctx.eps_p, dtype=float)
    h = 1e-6 * eps
    fd = (value(ctx.with_eps(eps + h)) - value(ctx.with_eps(eps - h))) / (2 * h)
    an = deriv(ctx)
    scale = np.maximum(np.abs(fd), np.abs(an))
    # derivatives that vanish identically (normal incidence) are compared absolutely
    return np.where(scale > 1e-12, np.abs(fd - an) / np.maximum(scale, 1e-300), np.abs(fd - an))


def _ids(v):
    return v if isinstance(v, str) else ""


@pytest.mark.parametrize("name,value,deriv", coefficient_functions(), ids=_ids)
def test_derivatives_match_central_differences(name, value, deriv):
    ctx = random_contexts(200, seed=1)
    if name == "cos_t":
        # near normal incidence d cos_t is ~1e-8 against a value of ~1, below
        # what a float64 difference can resolve; covered by the mpmath test
        ctx = InterfaceContext(1.0, ctx.eps_p, np.deg2rad(np.linspace(10, 80, 200)),
                               ctx.frequency, D)
    assert fd_errors(ctx, value, deriv).max() < 1e-6


def test_derivatives_match_high_precision_oracle():
    ctx = random_contexts(40, seed=6)
    funcs = coefficient_functions()
    for k in range(40):
        one = InterfaceContext(1.0, ctx.eps_p[k], ctx.theta_i[k], ctx.frequency[k], D)
        ref = mp_coefficients(1.0, ctx.theta_i[k], ctx.frequency[k], D)
        for name, value, deriv in funcs:
            v, dv = mp_value_and_derivative(ref[name], ctx.eps_p[k])
            assert abs(value(one) - v) <= 1e-10 * max(abs(v), 1.0), name
            assert abs(deriv(one) - dv) <= 1e-7 * abs(dv) + 1e-14, name


@settings(max_examples=60, deadline=None)
@given(eps=st.floats(1.0, 30.0), theta=st.floats(0.0, 1.39), f=st.floats(70.5e9, 77e9),
       eps_b=st.floats(1.0, 1.5))
def test_derivatives_property(eps, theta, f, eps_b):
    # keep away from the total-reflection edge where the derivative blows up
    if eps / eps_b - np.sin(theta) ** 2 < 0.05:
        return
    ctx = InterfaceContext(eps_b, eps, theta, f, D)
    for _, value, deriv in coefficient_functions():
        assert fd_errors(ctx, value, deriv).max() < 1e-5


def test_layer_is_unimodular():
    ctx = random_contexts(500, seed=2)
    for mode in (TE, TM):
        g = fresnel.layer_response(ctx, mode).gamma
        assert np.max(np.abs(np.abs(g) - 1.0)) < 1e-12


@pytest.mark.parametrize("mode,pol", [(TM, "s"), (TE, "p")])
@pytest.mark.parametrize("eps_b", [1.0, 2.25])
def test_layer_matches_shorted_line_oracle(mode, pol, eps_b):
    rng = np.random.default_rng(3)
    eps = rng.uniform(eps_b, 30.0, 100)
    theta = np.deg2rad(rng.uniform(0, 80, 100))
    f = rng.uniform(70.5e9, 77e9, 100)
    got = fresnel.layer_response(InterfaceContext(eps_b, eps, theta, f, D), mode).gamma
    want = shorted_slab_reflection(eps_b, eps, theta, f, D, pol)
    assert np.max(np.abs(got - want)) < 1e-9


def test_normal_incidence_modes_agree():
    eps = np.linspace(1.0, 30.0, 50)
    ctx = InterfaceContext(1.0, eps, 0.0, 73e9, D)
    want = (1 - np.sqrt(eps)) / (1 + np.sqrt(eps))
    assert np.allclose(fresnel.half_plane_tm(ctx).gamma, want, atol=1e-14)
    assert np.allclose(fresnel.half_plane_te(ctx).gamma_bp, want, atol=1e-14)
    assert np.allclose(fresnel.snell(ctx)[1], 0.0)


def test_matched_layer_is_a_displaced_short():
    # eps_p == eps_b: no interface, the metal sits a distance d behind the surface
    theta = np.deg2rad([0.0, 20.0, 45.0])
    ctx = InterfaceContext(1.0, 1.0, theta, 75e9, D)
    for mode in (TE, TM):
        r = fresnel.layer_response(ctx, mode)
        assert np.allclose(r.gamma, -np.exp(-2j * r.phase), atol=1e-14)
    tm = fresnel.half_plane_tm(ctx)
    te = fresnel.half_plane_te(ctx)
    assert np.allclose(tm.gamma, 0) and np.allclose(te.gamma_bp, 0)
    assert np.allclose(te.t_bp, 1) and np.allclose(te.t_pb, 1)


def test_te_brewster_angle():
    eps = 9.0
    theta_b = np.arctan(np.sqrt(eps))
    ctx = InterfaceContext(1.0, eps, theta_b, 75e9, D)
    assert abs(fresnel.half_plane_te(ctx).gamma_bp) < 1e-14


def test_half_plane_power_balance():
    ctx = random_contexts(100, seed=4)
    c = np.cos(ctx.theta_i)
    s = np.sqrt(ctx.eps_p - np.sin(ctx.theta_i) ** 2)
    tm = fresnel.half_plane_tm(ctx)
    assert np.allclose(1 - tm.gamma**2, tm.t**2 * s / c)
    te = fresnel.half_plane_te(ctx)
    # reciprocal pair: T_bp T_pb = 1 - Gamma^2
    assert np.allclose(te.t_bp * te.t_pb, 1 - te.gamma_bp**2)


def test_bundle_reverse_coefficients():
    ctx = random_contexts(20, seed=5)
    b = fresnel.coefficient_bundle(ctx)
    assert np.allclose(b.gamma_pb_te, -b.gamma_bp_te)
    assert np.allclose(b.gamma_pb_tm, -b.gamma_bp_tm)
    assert np.allclose(b.t_pb_tm, 1 - b.gamma_bp_tm)
    assert np.allclose(b.d_t_pb_tm, -b.d_gamma_bp_tm)


def test_evanescent_configuration_rejected():
    ctx = InterfaceContext(4.0, 1.0, np.deg2rad(60.0), 75e9, D)
    with pytest.raises(fresnel.EvanescentError):
        fresnel.layer_response(ctx, TE)


@pytest.mark.parametrize("kw", [dict(eps_b=0.5), dict(eps_p=0.0), dict(theta_i=np.pi / 2),
                                dict(theta_i=-0.1)])
def test_invalid_inputs(kw):
    base = dict(eps_b=1.0, eps_p=4.0, theta_i=0.3, frequency=75e9, thickness=D)
    base.update(kw)
    with pytest.raises(fresnel.FresnelError):
        fresnel.layer_response(InterfaceContext(**base), TM)


def test_unknown_mode():
    with pytest.raises(ValueError):
        fresnel.layer_response(InterfaceContext(1.0, 4.0, 0.3, 75e9, D), "XX")


def test_derivative_continuous_at_normal_incidence():
    ths = np.array([0.0, 1e-8, 1e-6, 1e-4])
    ctx = InterfaceContext(1.0, 7.0, ths, 75e9, D)
    for mode in (TE, TM):
        d = fresnel.layer_response(ctx, mode).d_gamma
        assert np.max(np.abs(d - d[0])) < 1e-6 * np.abs(d[0])


def test_broadcasting_shapes():
    ctx = InterfaceContext(1.0, np.full((4, 1), 5.0), np.linspace(0, 1, 3)[None, :], 75e9, D)
    r = fresnel.layer_response(ctx, TE)
    assert r.gamma.shape == (4, 3) and r.d_gamma.shape == (4, 3)
