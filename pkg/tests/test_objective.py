import numpy as np
import pytest

from cradesign import cli, config, sensing
from cradesign import forward as fw
from cradesign import geometry as geo
from cradesign import objective as ob
from cradesign.objective import ObjectiveConfig, ObjectiveError
from cradesign.optimizer import BoxFeasibleSet

from oracles import fd_gradient


def grad_error(g, fd):
    # component error relative to the component, floored at 1e-3 of the largest one
    return np.max(np.abs(fd - g) / np.maximum(np.abs(g), 1e-3 * np.abs(g).max()))


@pytest.fixture(scope="module")
def small():
    """P=8 facets, M=4 measurements, N=9 voxels."""
    mesh = geo.build_paraboloid_mesh(0.1, 0.12, 8, 8.13e-3, apex_position=(-0.5, 0, 0), axis=(1, 0, 0))
    grid = geo.build_imaging_grid((0.9, 0, 0), 0.1, 0.1, (3, 3))
    tx = [geo.Port((-0.4, y, 0), (0, 0, 1), (-1, 0, 0)) for y in (-0.005, 0.005)]
    rx = [geo.Port((-0.4, 0, 0.0075), (0, 0, 1), (-1, 0, 0))]
    plan = geo.build_measurement_plan(tx, rx, [71e9, 76e9])
    model = fw.ForwardModel(mesh, grid, tx, rx, plan, amplitude=0.05)
    assert model.shape == (4, 9) and model.num_facets == 8
    return model


@pytest.fixture(scope="module")
def desk():
    return cli.build_setup(config.load(None, "desk"))


def random_config(M, N, seed=0):
    rng = np.random.default_rng(seed)
    return ObjectiveConfig(alpha_A=0.7, alpha_t=rng.uniform(0, 1, 3), alpha_r=rng.uniform(0, 1, 3),
                           beta_A=1e-4, beta_t=1e-3, beta_r=1e-3,
                           lambda_A=rng.normal(size=(M, N)), lambda_t=rng.normal(size=(3, M, N)),
                           lambda_r=rng.normal(size=(3, M, N)))


def test_empty_objective(small):
    x = np.full(8, 5.0)
    ev = ob.evaluate_with_gradient(x, small, ObjectiveConfig())
    assert ev.value == 0 and np.all(ev.gradient == 0)


def test_zero_matrix_logdet():
    G = np.zeros((3, 12, 5), dtype=complex)
    fm = fw.FieldMatrix(G, np.zeros(12, dtype=int), (), np.zeros((1, 2)), np.zeros((1, 2)),
                        np.zeros((1, 2)), np.zeros((1, 2)))
    ev = ob._evaluate_fields(fm, fm, ObjectiveConfig(alpha_A=1.0, beta_A=1e-6), need_grad=False)
    assert np.isclose(ev.value, 12 * np.log(1e-6), rtol=1e-14)


def test_capacity_column_is_regularized_logdet(small):
    M, N = small.shape
    x = np.linspace(2, 20, 8)
    A = sensing.assemble(*small.fields(x)).A
    ev = ob.evaluate(x, small, ob.table_config("capacity", M, N))
    assert ev.value == pytest.approx(sensing.regularized_logdet(A, 1e-6), rel=1e-12)
    assert ev.terms["energy_A"] == 0 and ev.terms["logdet_t"] == 0


def test_terms_sum_to_value(small):
    M, N = small.shape
    ev = ob.evaluate(np.linspace(2, 20, 8), small, random_config(M, N))
    assert abs(sum(ev.terms.values()) - ev.value) <= 1e-10 * abs(ev.value)
    assert set(ev.terms) == set(ob.TERM_NAMES)


def test_gradient_small_random_config(small):
    M, N = small.shape
    cfg = random_config(M, N)
    x = np.random.default_rng(1).uniform(1, 30, 8)
    g = ob.gradient(x, small, cfg)
    fd = fd_gradient(lambda y: ob.evaluate(y, small, cfg).value, x, rel_step=1e-5)
    assert grad_error(g, fd) < 1e-5


def test_gradient_efficiency_term_alone(small):
    M, N = small.shape
    cfg = ObjectiveConfig(lambda_A=np.ones((M, N)))
    x = np.random.default_rng(2).uniform(1, 30, 8)
    g = ob.gradient(x, small, cfg)
    fd = fd_gradient(lambda y: ob.evaluate(y, small, cfg).value, x, rel_step=1e-4, order=4)
    assert grad_error(g, fd) < 1e-6


def test_gradient_term_additivity(small):
    M, N = small.shape
    full = random_config(M, N, seed=3)
    zero3 = np.zeros(3)
    parts = [
        ObjectiveConfig(alpha_A=full.alpha_A, beta_A=full.beta_A),
        ObjectiveConfig(alpha_t=full.alpha_t, beta_t=full.beta_t),
        ObjectiveConfig(alpha_r=full.alpha_r, beta_r=full.beta_r),
        ObjectiveConfig(alpha_t=zero3, lambda_A=full.lambda_A),
        ObjectiveConfig(lambda_t=full.lambda_t),
        ObjectiveConfig(lambda_r=full.lambda_r),
    ]
    x = np.random.default_rng(4).uniform(1, 30, 8)
    total = ob.gradient(x, small, full)
    summed = sum(ob.gradient(x, small, c) for c in parts)
    assert np.max(np.abs(total - summed)) <= 1e-10 * np.abs(total).max()


def test_depends_on_fields_only_through_A(small):
    M, N = small.shape
    fm_t, fm_r = small.fields(np.linspace(3, 9, 8))
    cfg = ObjectiveConfig(alpha_A=1.0, lambda_A=np.ones((M, N)))
    base = ob._evaluate_fields(fm_t, fm_r, cfg, need_grad=False).value
    c = 2.5 - 1.5j
    scaled_t = fw.FieldMatrix(c * fm_t.G, *[getattr(fm_t, k) for k in
                              ("index", "decomps", "gamma_te", "gamma_tm", "d_gamma_te", "d_gamma_tm")])
    scaled_r = fw.FieldMatrix(fm_r.G / c, *[getattr(fm_r, k) for k in
                              ("index", "decomps", "gamma_te", "gamma_tm", "d_gamma_te", "d_gamma_tm")])
    other = ob._evaluate_fields(scaled_t, scaled_r, cfg, need_grad=False).value
    assert other == pytest.approx(base, rel=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize("column", list(ob.TABLE_COLUMNS) + [ob.NULL_STEERING])
def test_gradient_desk_scale_columns(desk, column):
    M, N = desk.model.shape
    cfg = ob.table_config(column, M, N, null=desk.null)
    for k in range(10):
        x = desk.box.random_point(1000 + k)
        g = ob.gradient(x, desk.model, cfg)
        fd = fd_gradient(lambda y: ob.evaluate(y, desk.model, cfg).value, x, rel_step=1e-4, order=4)
        assert grad_error(g, fd) < 1e-4, (column, k)


def test_table_columns():
    M, N = 4, 9
    cap = ob.table_config("capacity", M, N)
    assert cap.alpha_A == 1 and cap.lambda_A is None and cap.beta_A == 1e-6
    eff = ob.table_config("efficiency", M, N)
    assert eff.alpha_A == 0 and np.all(eff.lambda_A == 1)
    ce = ob.table_config("capacity_efficiency", M, N)
    assert ce.alpha_A == 1 and np.all(ce.lambda_A == 10)
    at = ob.table_config("all_terms", M, N)
    assert np.all(at.alpha_t == 0.25) and np.all(at.lambda_r == 2.5)
    mask = np.zeros(N, dtype=bool)
    mask[4] = True
    ns = ob.table_config(ob.NULL_STEERING, M, N, null=mask)
    assert np.all(ns.alpha_r == 1) and ns.alpha_A == 0
    assert np.all(ns.lambda_r[:, :, 4] == -30) and np.all(ns.lambda_r[:, :, :4] == 0)
    with pytest.raises(ObjectiveError):
        ob.table_config(ob.NULL_STEERING, M, N)
    with pytest.raises(ObjectiveError):
        ob.table_config("nope", M, N)


def test_config_from_dict_overrides():
    cfg = ob.config_from_dict({"column": "capacity", "alpha_A": 2.0, "lambda_A": 3.0,
                               "alpha_r": [0, 1, 0], "name": "mine"}, 4, 9)
    assert cfg.alpha_A == 2 and np.all(cfg.lambda_A == 3) and cfg.name == "mine"
    assert np.array_equal(cfg.alpha_r, [0, 1, 0])
    explicit = ob.config_from_dict({"lambda_t": [1, 2, 3]}, 4, 9)
    assert np.all(explicit.lambda_t[2] == 3) and explicit.alpha_A == 0


@pytest.mark.parametrize("kw", [dict(alpha_A=-1.0), dict(alpha_A=1.0, beta_A=0.0),
                                dict(alpha_t=[0, 1, 0], beta_t=[1, 0, 1]), dict(zeta=0.0)])
def test_invalid_configs(kw):
    with pytest.raises(ObjectiveError):
        ObjectiveConfig(**kw)


def test_shape_check(small):
    with pytest.raises(ObjectiveError):
        ob.DesignProblem(small, ObjectiveConfig(lambda_A=np.ones((3, 9))))


def test_null_mask():
    grid = geo.build_imaging_grid((0.9, 0, 0), 0.1, 0.1, (7, 7))
    mask = ob.null_mask(grid, (0.9, 0, 0), 0.02)
    assert mask.sum() == 5 and mask[24]


def test_design_problem_caches_terms(small):
    M, N = small.shape
    prob = ob.DesignProblem(small, random_config(M, N))
    x = np.full(8, 4.0)
    v, g = prob.value_and_gradient(x)
    assert sum(prob.terms(x).values()) == pytest.approx(v)
    assert np.array_equal(prob.gradient(x), g)
    y = np.full(8, 6.0)
    assert sum(prob.terms(y).values()) == pytest.approx(prob.value(y))
