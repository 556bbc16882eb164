import numpy as np
import pytest
from scipy.stats import unitary_group

from cradesign import sensing
from cradesign.sensing import SensingError


def crandn(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_assemble_all_ones():
    g = np.ones((3, 4, 5), dtype=complex)
    assert np.array_equal(sensing.assemble(g, g).A, np.full((4, 5), 3.0))


def test_assemble_annihilation():
    rng = np.random.default_rng(0)
    A = sensing.assemble(crandn(rng, 3, 4, 6), np.zeros((3, 4, 6))).A
    assert np.all(A == 0)


def test_assemble_entrywise():
    rng = np.random.default_rng(1)
    gt, gr = crandn(rng, 3, 2, 2), crandn(rng, 3, 2, 2)
    A = sensing.assemble(gt, gr, zeta=0.5)
    for m in range(2):
        for n in range(2):
            want = 0.5 * sum(gt[i, m, n] * gr[i, m, n] for i in range(3))
            assert abs(A.A[m, n] - want) < 1e-15
    assert A.zeta == 0.5 and np.array_equal(A.row(1), A.A[1])


def test_assemble_bilinear():
    rng = np.random.default_rng(2)
    a, b, r = crandn(rng, 3, 4, 5), crandn(rng, 3, 4, 5), crandn(rng, 3, 4, 5)
    lhs = sensing.assemble(2 * a - 1j * b, r).A
    rhs = 2 * sensing.assemble(a, r).A - 1j * sensing.assemble(b, r).A
    assert np.allclose(lhs, rhs, rtol=1e-13)


@pytest.mark.parametrize("gt,gr,zeta", [
    (np.ones((3, 2, 2)), np.ones((3, 2, 3)), 1.0),
    (np.ones((2, 2)), np.ones((2, 2)), 1.0),
    (np.ones((3, 2, 2)), np.ones((3, 2, 2)), 0.0),
])
def test_assemble_errors(gt, gr, zeta):
    with pytest.raises(SensingError):
        sensing.assemble(gt, gr, zeta)


def test_capacity_identity_cases():
    r = sensing.capacity(np.eye(3))
    assert r.capacity == 0 and r.ric_lower_bound == 0
    r = sensing.capacity(2 * np.eye(2))
    assert abs(r.capacity - 2.0) < 1e-14


def test_capacity_matches_determinant():
    rng = np.random.default_rng(3)
    for eps in (1.0, 0.3):
        A = crandn(rng, 4, 8)
        det = np.linalg.det(A @ A.conj().T).real
        want = 0.5 * np.log2(det / eps ** 8)
        got = sensing.capacity(A, eps)
        assert abs(got.capacity - want) <= 1e-9 * abs(want)
        assert abs(got.ric_lower_bound - (1 - det)) <= 1e-9 * abs(1 - det)


def test_capacity_singular_values_sorted_and_rank_deficiency():
    rng = np.random.default_rng(4)
    A = crandn(rng, 3, 6)
    s = sensing.capacity(A).singular_values
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    A[2] = A[0] + A[1]
    assert sensing.capacity(A).capacity == -np.inf
    assert sensing.capacity(np.zeros((2, 3))).capacity == -np.inf


def test_capacity_tall_matrix():
    rng = np.random.default_rng(5)
    A = crandn(rng, 6, 3)
    r = sensing.capacity(A)
    assert r.singular_values.size == 3
    assert np.isclose(r.capacity, 0.5 * np.log2(np.linalg.det(A.conj().T @ A).real))


def test_capacity_invariant_to_row_mixing():
    rng = np.random.default_rng(6)
    A = crandn(rng, 5, 9)
    U = unitary_group.rvs(5, random_state=7)
    s0, s1 = sensing.singular_values(A), sensing.singular_values(U @ A)
    assert np.max(np.abs(s0 - s1)) < 1e-10 * s0[0]
    assert np.isclose(sensing.capacity(A).capacity, sensing.capacity(U @ A).capacity, rtol=1e-10)


def test_capacity_rejects_bad_epsilon():
    with pytest.raises(SensingError):
        sensing.capacity(np.eye(2), 0.0)


def test_regularized_logdet_cases():
    assert np.isclose(sensing.regularized_logdet(np.zeros((3, 4)), 1e-6), 3 * np.log(1e-6))
    vals = [sensing.regularized_logdet(np.eye(2), b) for b in (1e-3, 1e-6, 1e-9)]
    assert abs(vals[-1]) < 1e-8 and abs(vals[0]) > abs(vals[1]) > abs(vals[2])


@pytest.mark.parametrize("shape", [(3, 5), (5, 3)])
def test_regularized_logdet_eigen_oracle(shape):
    rng = np.random.default_rng(8)
    A = crandn(rng, *shape)
    beta = 0.01
    ev = np.linalg.eigvalsh(A @ A.conj().T)
    assert abs(sensing.regularized_logdet(A, beta) - np.sum(np.log(ev + beta))) < 1e-10


def test_regularized_logdet_accepts_sensing_matrix():
    rng = np.random.default_rng(9)
    S = sensing.assemble(crandn(rng, 3, 2, 4), crandn(rng, 3, 2, 4))
    assert sensing.regularized_logdet(S, 1e-3) == sensing.regularized_logdet(S.A, 1e-3)
    with pytest.raises(SensingError):
        sensing.regularized_logdet(S, 0.0)


def test_efficiency_cases():
    assert sensing.efficiency(np.ones((1, 7)), np.ones(7)).value == 7
    rng = np.random.default_rng(10)
    r = crandn(rng, 4, 6)
    assert sensing.efficiency(r, np.zeros((4, 6))).value == 0
    rep = sensing.efficiency(r, rng.uniform(size=(4, 6)))
    assert np.isclose(rep.value, rep.per_measurement.sum(), rtol=1e-15)
    with pytest.raises(SensingError):
        sensing.efficiency(r, np.ones((3, 6)))


def test_efficiency_matches_quadratic_form():
    rng = np.random.default_rng(11)
    r = crandn(rng, 3, 5)
    lam = rng.normal(size=(3, 5))
    want = sum((r[m] @ np.diag(lam[m]) @ r[m].conj()).real for m in range(3))
    assert np.isclose(sensing.efficiency(r, lam).value, want, rtol=1e-13)


def test_efficiency_permutation_invariance():
    rng = np.random.default_rng(12)
    r, lam = crandn(rng, 6, 4), rng.normal(size=(6, 4))
    p = rng.permutation(6)
    assert np.isclose(sensing.efficiency(r, lam).value, sensing.efficiency(r[p], lam[p]).value,
                      rtol=1e-14)


def test_null_weight_penalizes_energy_in_nulled_voxels():
    lam = np.ones(6)
    lam[:2] = -30.0
    outside = np.array([0, 0, 1, 1, 1, 1], dtype=complex)
    values = []
    for t in np.linspace(0, 1, 5):
        row = np.sqrt(1 - t) * outside + np.sqrt(t) * np.array([1, 1, 0, 0, 0, 0]) * np.sqrt(2)
        values.append(sensing.efficiency(row[None], lam).value)
    assert np.all(np.diff(values) < 0)


def test_csv_and_json_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    rep = sensing.capacity(crandn(rng, 3, 5))
    sensing.write_singular_values_csv(tmp_path / "sv.csv", rep.singular_values)
    assert np.array_equal(sensing.read_singular_values_csv(tmp_path / "sv.csv"), rep.singular_values)
    sensing.write_report_json(tmp_path / "cap.json", rep)
    import json
    doc = json.loads((tmp_path / "cap.json").read_text())
    assert doc["capacity"] == rep.capacity and doc["epsilon"] == 1.0
