import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnurbs.core import KnotVector, basis_function_derivatives, basis_functions, basis_table, find_span
from dnurbs.errors import ContractError, DomainError

from conftest import cox_de_boor

BEZIER3 = KnotVector([0, 0, 0, 0, 1, 1, 1, 1], 3)
QUAD = KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)
LINEAR = KnotVector([0, 0, 1, 1], 1)


def linear_scan_span(u, U, p):
    """Last index i with U[i] <= u < U[i+1]; u = 1 maps to the last nonempty span."""
    n = len(U) - p - 1
    if u == U[-1]:
        return n - 1
    return max(i for i in range(len(U) - 1) if U[i] <= u < U[i + 1])


@st.composite
def knot_vectors(draw):
    p = draw(st.integers(0, 4))
    k = draw(st.integers(0, 6))
    interior = sorted(draw(st.lists(st.floats(0.01, 0.99), min_size=k, max_size=k)))
    # cap multiplicities at the degree
    kept = []
    for x in interior:
        if kept.count(x) < max(p, 1):
            kept.append(x)
    return KnotVector.from_interior(kept, p)


class TestKnotVector:
    def test_uniform(self):
        K = KnotVector.uniform(6, 3)
        np.testing.assert_allclose(K.knots, [0, 0, 0, 0, 1 / 3, 2 / 3, 1, 1, 1, 1])
        assert K.n_ctrl == 6 and K.is_uniform

    def test_from_interior(self):
        K = KnotVector.from_interior([0.3], 2)
        assert list(K.knots) == [0, 0, 0, 0.3, 1, 1, 1]
        assert not K.is_uniform

    @pytest.mark.parametrize(
        "knots, degree",
        [
            ([0, 0, 0.6, 0.4, 1, 1], 1),  # decreasing
            ([0, 0, 1, 2], 1),  # domain
            ([0, 0, 0.5, 1, 1, 1], 2),  # not clamped at the start
            ([0, 0, 0, 1, 1], 2),  # too short
            ([0, 0, 0.5, 0.5, 1, 1], 1),  # interior multiplicity > degree
            ([0, 0, float("nan"), 1, 1], 1),
        ],
    )
    def test_rejects_invalid(self, knots, degree):
        with pytest.raises(ContractError):
            KnotVector(knots, degree)

    def test_immutable(self):
        with pytest.raises(ValueError):
            BEZIER3.knots[0] = 0.5


class TestFindSpan:
    def test_bezier_mid(self):
        assert find_span(0.5, BEZIER3, 4) == 3

    def test_end_clamp(self):
        assert find_span(1.0, BEZIER3, 4) == 3

    def test_against_linear_scan(self):
        assert find_span(0.25, QUAD, 4) == linear_scan_span(0.25, list(QUAD.knots), 2) == 2

    @pytest.mark.parametrize("u", [-1e-12, 1.0 + 1e-12, 2.0, float("nan")])
    def test_out_of_domain_names_value(self, u):
        with pytest.raises(DomainError, match="outside"):
            find_span(u, QUAD)

    @settings(max_examples=200, deadline=None)
    @given(knot_vectors(), st.floats(0.0, 1.0))
    def test_property_matches_scan(self, K, u):
        assert find_span(u, K) == linear_scan_span(u, list(K.knots), K.degree)

    def test_vectorised_matches_scalar(self):
        K = KnotVector.from_interior([0.2, 0.2, 0.7], 3)
        us = np.linspace(0, 1, 101)
        from dnurbs.core.basis import find_spans

        assert list(find_spans(us, K)) == [find_span(u, K) for u in us]


class TestBasisFunctions:
    def test_linear(self):
        assert basis_functions(1, 0.25, LINEAR) == pytest.approx([0.75, 0.25], abs=1e-15)

    def test_quadratic_against_recursion(self):
        N = basis_functions(2, 0.25, QUAD)
        oracle = [cox_de_boor(i, 2, 0.25, list(QUAD.knots)) for i in range(3)]
        np.testing.assert_allclose(N, oracle, rtol=0, atol=1e-15)
        np.testing.assert_allclose(N, [0.25, 0.625, 0.125], rtol=0, atol=1e-15)

    def test_inconsistent_span(self):
        with pytest.raises(ContractError):
            basis_functions(3, 0.25, QUAD)

    @settings(max_examples=200, deadline=None)
    @given(knot_vectors(), st.floats(0.0, 1.0))
    def test_property_partition_and_recursion(self, K, u):
        s = find_span(u, K)
        N = basis_functions(s, u, K)
        assert len(N) == K.degree + 1
        assert sum(N) == pytest.approx(1.0, abs=1e-12)
        assert min(N) >= -1e-15
        U = list(K.knots)
        oracle = [cox_de_boor(s - K.degree + r, K.degree, u, U) for r in range(K.degree + 1)]
        np.testing.assert_allclose(N, oracle, atol=1e-12)

    def test_table_matches_scalar(self):
        us = np.linspace(0, 1, 17)
        spans, N = basis_table(us, QUAD)
        for k, u in enumerate(us):
            assert spans[k] == find_span(u, QUAD)
            np.testing.assert_array_equal(N[k], basis_functions(spans[k], u, QUAD))

    def test_degree_zero(self):
        K = KnotVector.from_interior([0.5], 0)
        assert basis_functions(find_span(0.75, K), 0.75, K) == [1.0]


class TestBasisDerivatives:
    @pytest.mark.parametrize("u", [0.1, 0.5, 0.9])
    def test_linear_slopes(self, u):
        assert basis_function_derivatives(1, u, LINEAR) == pytest.approx([-1.0, 1.0], abs=1e-14)

    def test_quadratic_against_fd(self):
        h = 1e-7
        u = 0.25
        fd = (np.array(basis_functions(2, u + h, QUAD)) - np.array(basis_functions(2, u - h, QUAD))) / (2 * h)
        dN = basis_function_derivatives(2, u, QUAD)
        np.testing.assert_allclose(fd, [-2, 1, 1], atol=1e-7)
        np.testing.assert_allclose(dN, [-2, 1, 1], atol=1e-13)

    @settings(max_examples=200, deadline=None)
    @given(knot_vectors(), st.floats(0.0, 1.0))
    def test_property_sum_zero(self, K, u):
        s = find_span(u, K)
        dN = basis_function_derivatives(s, u, K)
        scale = max(1.0, max(abs(x) for x in dN))
        assert abs(sum(dN)) <= 1e-10 * scale

    @settings(max_examples=100, deadline=None)
    @given(knot_vectors(), st.floats(0.02, 0.98))
    def test_property_fd(self, K, u):
        s = find_span(u, K)
        h = 1e-6
        lo, hi = K.knots[s], K.knots[s + 1]
        if not (lo + 2 * h < u < hi - 2 * h):
            return  # FD would straddle a knot
        up = np.array(basis_functions(s, u + h, K))
        dn = np.array(basis_functions(s, u - h, K))
        np.testing.assert_allclose(basis_function_derivatives(s, u, K), (up - dn) / (2 * h), atol=1e-4 * max(1, 1 / (hi - lo)))
