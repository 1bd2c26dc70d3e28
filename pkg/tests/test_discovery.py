import numpy as np
import pytest

from e3fi.codegen import lambdify_numpy
from e3fi.discovery import (
    DiscoveryError,
    assemble_system,
    discover,
    dictionary_exponents,
    echelon_basis,
    fit_G,
    nullspace,
    projection_residual,
)
from e3fi.expr import parse
from e3fi.geometry import KtParams, fit_kt_params, general_kt, is_killing_tensor
from e3fi.poisson import total_time_derivative
from e3fi.qfi import extract_parts
from e3fi.sampling import sample_points

# Dimensions of the autonomous quadratic integral space, frozen from
# tests/oracles/kt_dimension_oracle.py (exact sympy coefficient matching).
ORACLE_DIMS = {
    "0": 20,
    "1/2*r^2": 12,
    "x^3+y^3+z^3": 3,
    "2/x^2+3/y^2+5/z^2": 6,
    "7*r^2+2/x^2+3/y^2+5/z^2": 6,
    "x^3*y": 2,
    "1/x^2+1/2/y^2+3/10/z^2": 6,
    "1/2*r^2+1/x^2+1/2/y^2+3/10/z^2": 6,
}


@pytest.fixture(scope="module")
def results():
    return {v: discover(parse(v)) for v in ORACLE_DIMS}


class TestNullspace:
    def test_zero_matrix(self):
        assert nullspace(np.zeros((30, 20))).shape == (20, 20)

    def test_full_rank(self, rng):
        assert nullspace(rng.normal(size=(40, 20))).shape == (20, 0)

    def test_constructed_kernel(self, rng):
        K = rng.normal(size=(20, 3))
        P = np.eye(20) - K @ np.linalg.pinv(K)
        M = rng.normal(size=(60, 20)) @ P
        B = nullspace(M)
        assert B.shape == (20, 3)
        assert np.max(np.abs(M @ B)) <= 1e-10
        for j in range(3):
            assert projection_residual(B, K[:, j]) <= 1e-10

    def test_echelon_keeps_span(self, rng):
        B = nullspace(rng.normal(size=(15, 20)))
        E = echelon_basis(B)
        for j in range(E.shape[1]):
            assert projection_residual(B, E[:, j]) <= 1e-10
        assert np.linalg.matrix_rank(E) == B.shape[1]


class TestSystem:
    def test_shape_and_row_scaling(self, samples):
        M = assemble_system(parse("x^3*y"), samples)
        assert M.shape == (3 * len(samples), 20)
        norms = np.linalg.norm(M, axis=1)
        assert np.allclose(norms[norms > 0], 1)

    @pytest.mark.parametrize("k", [1, 6, 7])
    def test_constant_directions_of_the_free_particle(self, samples, k):
        B = nullspace(assemble_system(parse("0"), samples))
        assert projection_residual(B, KtParams.basis(k)) <= 1e-8

    def test_oscillator_excludes_some_directions(self, samples):
        B = nullspace(assemble_system(parse("1/2*r^2"), samples))
        assert max(projection_residual(B, KtParams.basis(k)) for k in range(1, 21)) > 0.1

    def test_too_few_samples(self):
        with pytest.raises(DiscoveryError):
            assemble_system(parse("1/x"), sample_points(10, 1))


class TestDiscover:
    @pytest.mark.parametrize("potential", list(ORACLE_DIMS))
    def test_dimension_matches_oracle(self, results, potential):
        assert results[potential].dimension == ORACLE_DIMS[potential]

    @pytest.mark.parametrize("potential", list(ORACLE_DIMS))
    def test_dimension_stable_under_more_samples(self, results, potential):
        assert discover(parse(potential), n_samples=160, seed=11).dimension == results[potential].dimension

    @pytest.mark.parametrize("potential", list(ORACLE_DIMS))
    def test_candidates_are_sound_on_fresh_points(self, results, potential):
        V = parse(potential)
        fresh = sample_points(150, 999, guard=[V])
        for c in results[potential].candidates:
            vals = lambdify_numpy([total_time_derivative(c.integral, V)])(*fresh.args())
            assert np.max(np.abs(vals)) <= 1e-9

    def test_every_basis_direction_is_verified(self, results):
        for potential, r in results.items():
            assert len(r.candidates) == r.dimension, potential

    def test_free_particle(self, results):
        r = results["0"]
        assert all(c.path_disagreement <= 1e-8 for c in r.candidates)
        assert np.linalg.matrix_rank(r.basis) == 20

    def test_result_document(self, results):
        d = results["x^3*y"].to_dict()
        assert d["schema"] == 1 and d["nullspace_dimension"] == 2
        assert all(c["verified"] for c in d["candidates"])

    def test_parameters_are_substituted(self):
        r = discover(parse("k*(x^2 + y^2 + z^2)", ["k"]), {"k": 0.5})
        assert r.dimension == ORACLE_DIMS["1/2*r^2"]


@pytest.mark.parametrize("entry_id", ["e23.1.2", "e23.2.1", "e23.3.3", "e3.1.4", "e3.2.5", "e3.3.7", "e3.9.1"])
def test_catalog_integrals_are_recovered(by_id, entry_id):
    e = by_id[entry_id]
    fis = [f for f in e.fis if f.family == "I10"]
    assert fis
    B = discover(e.bound_V).basis
    s = sample_points(50, 3)
    for f in fis:
        kp, misfit = fit_kt_params(extract_parts(e.bind(f.expr), "I10").C, s)
        assert misfit <= 1e-10
        assert projection_residual(B, kp) <= 1e-8, f.name


class TestFitG:
    def test_recovers_sparse_polynomial(self, rng):
        pts = rng.uniform(0.3, 1.7, size=(120, 3))
        x, y, z = pts.T
        vals = (2 * x**2 * y - 0.5 / z**2 + 3).astype(complex)
        fit = fit_G(pts, vals)
        assert fit.expr is not None and fit.max_misfit <= 1e-8
        assert len(fit.coefficients) == 3

    def test_rejects_what_the_dictionary_cannot_express(self, rng):
        pts = rng.uniform(0.3, 1.7, size=(120, 3))
        fit = fit_G(pts, np.exp(pts[:, 0]).astype(complex))
        assert fit.expr is None

    def test_dictionary_has_no_duplicates(self):
        ex = dictionary_exponents()
        assert len(ex) == len(set(ex))
        assert (0, 0, 0) in ex and (-2, 0, 0) in ex and (0, 0, 4) in ex


def test_general_kt_of_a_basis_vector_is_a_killing_tensor(samples):
    for k in range(1, 21):
        assert is_killing_tensor(general_kt(KtParams.basis(k)), samples)[0]
