import math

import pytest
from hypothesis import given, settings, strategies as st

from e3fi.classify import INVOLUTION_TOL, VERDICTS, bracket_residual, classify, jacobian_rank, verify_relation
from e3fi.expr import parse
from e3fi.poisson import hamiltonian
from e3fi.sampling import sample_points

B, C = 2.0, 0.3
SKEW_V = parse(f"{C}*x + (y - {B}*x)^2/2 + z^2/2")
SKEW = {
    "I1": parse(f"vx + {B}*vy + {C}*t"),
    "I2": parse(f"t*(vx + {B}*vy) - (x + {B}*y) + {C}/2*t^2"),
    "I3": parse(f"(vx + {B}*vy)^2 + 2*{C}*(x + {B}*y)"),
    "I4": parse("1/2*vz^2 + z^2/2"),
}


def linear_integrals(k):
    s = math.sqrt(2 * k)
    return [parse(f"exp({sign}{s}*t)*(v{q} {'-' if sign == '' else '+'} {s}*{q})")
            for q in "xyz" for sign in ("", "-")]


@pytest.fixture(scope="module")
def pts():
    return sample_points(200, 13)


class TestRank:
    def test_dependent_skew_integrals(self, pts):
        fis = [hamiltonian(SKEW_V)] + list(SKEW.values())
        assert jacobian_rank(fis, pts) == 4

    def test_six_linear_integrals_of_repulsive_oscillator(self, pts):
        assert jacobian_rank(linear_integrals(0.5), pts) == 6

    def test_duplicate(self, pts):
        H = hamiltonian(SKEW_V)
        assert jacobian_rank([H, H], pts) == 1

    def test_scaled_copy_is_dependent(self, pts):
        assert jacobian_rank([parse("M3"), parse("1e6*M3")], pts) == 1

    def test_empty(self, pts):
        assert jacobian_rank([], pts) == 0

    def test_never_exceeds_extended_dimension(self, pts):
        fis = linear_integrals(0.5) + [parse("t"), parse("x*y"), parse("vz^3")]
        assert jacobian_rank(fis, pts) == 7

    @given(st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3))
    @settings(max_examples=15, deadline=None)
    def test_invariant_under_recombination(self, c):
        s = sample_points(50, 2)
        fis = [hamiltonian(SKEW_V), SKEW["I1"], SKEW["I3"], SKEW["I4"]]
        mixed = [fis[0], fis[1], fis[2] + parse(str(c)) * fis[1], fis[3]]
        assert jacobian_rank(mixed, s) == jacobian_rank(fis, s)


class TestRelation:
    def test_square_of_linear_integral(self, pts):
        lhs = SKEW["I1"] ** 2
        rhs = SKEW["I3"] + parse(str(2 * C)) * SKEW["I2"]
        ok, res = verify_relation(lhs, rhs, pts)
        assert ok and res <= 1e-10

    def test_planar_oscillator_identity(self, pts):
        k = 0.7
        I2 = parse(f"1/2*vx^2 - 1/2*{k}^2*x^2")
        I3 = parse(f"1/2*vy^2 - 1/2*{k}^2*y^2")
        I4 = parse(f"vx*vy - {k}^2*x*y")
        ok, res = verify_relation(parse("4") * I2 * I3, I4 ** 2 - parse(f"{k}^2*M3^2"), pts)
        assert ok, res

    def test_shifted_energy(self, pts):
        H = hamiltonian(SKEW_V)
        ok, res = verify_relation(H, H + parse("1"), pts)
        assert not ok and res == pytest.approx(1)


class TestClassify:
    def test_only_energy(self, pts):
        r = classify([], parse("x^2 + y^3"), pts)
        assert r.verdict == "not-established" and r.independent_count == 1

    def test_separable_is_integrable(self, pts):
        V = parse("x^2 + y^4 + z^2")
        r = classify([("Ix", parse("vx^2/2 + x^2")), ("Iz", parse("vz^2/2 + z^2"))], V, pts)
        assert r.verdict == "integrable"
        assert sorted(r.involutive_triple) == ["H", "Ix", "Iz"]

    def test_oscillator_entry_is_maximal(self, by_id, pts):
        e = by_id["e23.3-oscillator"]
        r = classify(e.bound_fis(), e.bound_V, sample_points(200, 3, guard=[e.bound_V]))
        assert r.verdict == "maximally-superintegrable"
        assert r.independent_count >= 5

    def test_inverse_square_angular_integrals_are_not_enough(self, by_id):
        e = by_id["e3pot.13d"]
        fis = [(n, x) for n, x in e.bound_fis() if n in ("I1", "I2", "I3")]
        r = classify(fis, e.bound_V, sample_points(200, 3, guard=[e.bound_V]))
        assert r.verdict == "not-established"
        assert r.involutive_triple is None
        assert r.independent_count == 4

    def test_time_dependent_integral_upgrades_verdict(self, by_id):
        e = by_id["e3p2.10"]
        s = sample_points(200, 3, guard=[e.bound_V])
        auto = [(n, x) for n, x in e.bound_fis() if n != "J4"]
        assert classify(auto, e.bound_V, s).verdict == "minimally-superintegrable"
        assert classify(e.bound_fis(), e.bound_V, s).verdict == "maximally-superintegrable"

    def test_result_serialises(self, pts):
        d = classify([("Ix", parse("vx^2/2 + x^2"))], parse("x^2"), pts).to_dict()
        assert d["verdict"] in VERDICTS and d["names"] == ["H", "Ix"]

    def test_involution_measure_is_scale_free(self, pts):
        a, b = parse("M1^2"), parse("M2")
        assert bracket_residual(a, b, pts) == pytest.approx(bracket_residual(parse("1e5") * a, b, pts))


def test_integrable_verdicts_carry_involutive_witness(catalog, reports):
    for e in catalog:
        r = reports[e.id].classification
        if r is None or r.verdict == "not-established":
            continue
        assert r.involutive_triple and len(r.involutive_triple) == 3, e.id
        exprs = dict([("H", e.bind(hamiltonian(e.V)))] + e.bound_fis())
        s = sample_points(60, 17, guard=[e.bound_V] + list(exprs.values()))
        a, b, c = (exprs[n] for n in r.involutive_triple)
        for p, q in ((a, b), (a, c), (b, c)):
            assert bracket_residual(p, q, s) <= 10 * INVOLUTION_TOL, e.id
        assert jacobian_rank([a, b, c], s) == 3, e.id
