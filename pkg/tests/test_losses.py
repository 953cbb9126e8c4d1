import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnurbs.core import kernels
from dnurbs.errors import ContractError
from dnurbs.losses import (
    PointCloud,
    chamfer_mean,
    chamfer_normalized,
    curve_length_reg,
    loss_chamfer,
    loss_l1,
    loss_l2,
    loss_mse,
    nearest_neighbors,
)


def fd_grad(f, X, h=1e-6):
    G = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        a, b = X.copy(), X.copy()
        a[idx] += h
        b[idx] -= h
        G[idx] = (f(a) - f(b)) / (2 * h)
    return G


def chamfer_enumeration(P, Q):
    """Exhaustive oracle: minimise over every assignment, each direction separately."""
    fwd = min(
        sum(np.linalg.norm(P[i] - Q[j]) for i, j in enumerate(assign)) for assign in itertools.product(range(len(Q)), repeat=len(P))
    )
    bwd = min(
        sum(np.linalg.norm(Q[j] - P[i]) for j, i in enumerate(assign)) for assign in itertools.product(range(len(P)), repeat=len(Q))
    )
    return fwd + bwd


def brute_nearest(q, r):
    d2 = ((q[:, None, :] - r[None, :, :]) ** 2).sum(-1)
    idx = np.argmin(d2, axis=1)  # first minimum: lowest index on ties
    return idx, np.sqrt(d2[np.arange(len(q)), idx])


class TestPointCloud:
    def test_bbox(self):
        c = PointCloud(np.array([[0.0, 0, 0], [1, 1, 1]]))
        assert len(c) == 2 and c.dim == 3
        np.testing.assert_array_equal(c.bbox[0], [0, 0, 0])
        np.testing.assert_array_equal(c.bbox[1], [1, 1, 1])
        assert c.diagonal == pytest.approx(np.sqrt(3))

    @pytest.mark.parametrize("pts", [np.zeros((0, 3)), np.zeros((3, 4)), np.array([[0.0, np.nan]])])
    def test_rejects(self, pts):
        with pytest.raises(ContractError):
            PointCloud(pts)


class TestPaired:
    def test_l1(self):
        assert loss_l1([[0.0, 0.0]], [[3.0, 4.0]]).value == 7.0

    def test_l2(self):
        assert loss_l2([[0.0, 0.0]], [[3.0, 4.0]]).value == 5.0

    def test_mse(self):
        assert loss_mse([[0.0, 0.0]], [[3.0, 4.0]]).value == 25.0

    @pytest.mark.parametrize("loss", [loss_l1, loss_l2, loss_mse])
    def test_identical_zero(self, loss, rng):
        X = rng.normal(size=(10, 3))
        r = loss(X, X)
        assert r.value == 0.0 and np.all(r.grad == 0.0)

    @pytest.mark.parametrize("loss", [loss_l1, loss_l2, loss_mse])
    def test_fd(self, loss, rng):
        P, Q = rng.normal(size=(12, 3)), rng.normal(size=(12, 3))
        np.testing.assert_allclose(loss(P, Q).grad, fd_grad(lambda X: loss(X, Q).value, P), atol=1e-6)

    @pytest.mark.parametrize("loss", [loss_l1, loss_l2, loss_mse])
    def test_count_mismatch(self, loss):
        with pytest.raises(ContractError):
            loss(np.zeros((3, 2)), np.zeros((4, 2)))

    def test_grid_shape_preserved(self, rng):
        P, Q = rng.normal(size=(4, 5, 3)), rng.normal(size=(4, 5, 3))
        assert loss_l2(P, Q).grad.shape == (4, 5, 3)
        assert loss_l2(P, PointCloud(Q.reshape(-1, 3))).value == pytest.approx(loss_l2(P, Q).value)


class TestChamfer:
    def test_identical(self, rng):
        X = rng.normal(size=(20, 2))
        assert loss_chamfer(X, X).value == 0.0

    def test_single_pair(self):
        assert loss_chamfer([[0.0, 0.0]], [[3.0, 4.0]]).value == 10.0

    def test_two_vs_three_enumeration(self, rng):
        for _ in range(5):
            P, Q = rng.normal(size=(2, 3)), rng.normal(size=(3, 3))
            assert loss_chamfer(P, Q).value == pytest.approx(chamfer_enumeration(P, Q), rel=1e-15)

    def test_mean_reduction(self, rng):
        P, Q = rng.normal(size=(7, 2)), rng.normal(size=(11, 2))
        _, dp = brute_nearest(P, Q)
        _, dq = brute_nearest(Q, P)
        assert chamfer_mean(P, Q) == pytest.approx(dp.mean() + dq.mean(), rel=1e-14)
        assert loss_chamfer(P, Q).value == pytest.approx(dp.sum() + dq.sum(), rel=1e-14)

    @pytest.mark.parametrize("reduction", ["sum", "mean"])
    def test_fd(self, reduction, rng):
        P, Q = rng.normal(size=(9, 3)), rng.normal(size=(13, 3))
        g = loss_chamfer(P, Q, reduction=reduction).grad
        np.testing.assert_allclose(g, fd_grad(lambda X: loss_chamfer(X, Q, reduction=reduction).value, P), atol=1e-6)

    def test_empty(self):
        with pytest.raises(ContractError):
            loss_chamfer(np.zeros((0, 2)), np.zeros((3, 2)))

    def test_dim_mismatch(self):
        with pytest.raises(ContractError):
            loss_chamfer(np.zeros((2, 2)), np.zeros((3, 3)))

    def test_unknown_reduction(self):
        with pytest.raises(ContractError):
            loss_chamfer(np.zeros((2, 2)), np.zeros((3, 2)), reduction="max")

    def test_normalized(self, rng):
        P, Q = rng.normal(size=(5, 3)), rng.normal(size=(6, 3))
        assert chamfer_normalized(P, Q, 2.0) == pytest.approx(loss_chamfer(P, Q).value / 2.0)
        assert chamfer_normalized(P, P, 11.54) == 0.0
        with pytest.raises(ContractError):
            chamfer_normalized(P, Q, 0.0)

    def test_normalized_arithmetic(self):
        # two points 0.25 apart: Chamfer 0.5, extent 2
        assert chamfer_normalized([[0.0, 0.0]], [[0.25, 0.0]], 2.0) == 0.25


class TestNearest:
    @pytest.mark.parametrize("backend", kernels.available_backends())
    def test_matches_brute_force(self, backend, rng):
        kernels.set_backend(backend)
        q, r = rng.normal(size=(300, 3)), rng.normal(size=(200, 3))
        idx, d = nearest_neighbors(q, r)
        bi, bd = brute_nearest(q, r)
        np.testing.assert_array_equal(idx, bi)
        np.testing.assert_allclose(d, bd, rtol=1e-15)

    @pytest.mark.parametrize("backend", kernels.available_backends())
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 40), st.integers(1, 40), st.sampled_from([2, 3]))
    def test_property_integer_ties(self, backend, seed, nq, nr, dim):
        # integer lattice points produce many exact ties; lowest index must win
        kernels.set_backend(backend)
        r_ = np.random.default_rng(seed)
        q = r_.integers(-3, 4, size=(nq, dim)).astype(float)
        r = r_.integers(-3, 4, size=(nr, dim)).astype(float)
        idx, d = nearest_neighbors(q, r)
        bi, bd = brute_nearest(q, r)
        np.testing.assert_array_equal(idx, bi)
        np.testing.assert_array_equal(d, bd)

    @pytest.mark.skipif("cython" not in kernels.available_backends(), reason="compiled kernels not built")
    def test_backends_bitwise(self, rng):
        q, r = rng.normal(size=(2000, 3)), rng.normal(size=(1500, 3))
        a = kernels.get("cython").nearest(q, r, 4)
        b = kernels.get("python").nearest(q, r, 1)
        assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()

    def test_threads_bitwise(self, rng):
        q, r = rng.normal(size=(1000, 2)), rng.normal(size=(800, 2))
        ref = nearest_neighbors(q, r, threads=1)
        for t in (2, 8):
            out = nearest_neighbors(q, r, threads=t)
            assert out[0].tobytes() == ref[0].tobytes() and out[1].tobytes() == ref[1].tobytes()


class TestLengthReg:
    def test_collinear(self):
        P = np.stack([np.linspace(0, 1, 11), np.zeros(11)], axis=1)
        assert curve_length_reg(P).value == pytest.approx(1.0, abs=1e-15)

    def test_single_segment(self):
        r = curve_length_reg([[0.0, 0.0], [3.0, 4.0]])
        assert r.value == 5.0
        np.testing.assert_allclose(r.grad, [[-0.6, -0.8], [0.6, 0.8]])

    def test_fd(self, rng):
        P = rng.normal(size=(15, 3))
        np.testing.assert_allclose(curve_length_reg(P).grad, fd_grad(lambda X: curve_length_reg(X).value, P), atol=1e-6)

    def test_too_short(self):
        with pytest.raises(ContractError):
            curve_length_reg([[0.0, 0.0]])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.floats(-5, 5), st.floats(0.1, 10))
    def test_property_invariance(self, seed, shift, scale):
        P = np.random.default_rng(seed).normal(size=(8, 2))
        base = curve_length_reg(P).value
        assert curve_length_reg(P + shift).value == pytest.approx(base, rel=1e-12)
        assert curve_length_reg(scale * P).value == pytest.approx(scale * base, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 30), st.integers(1, 30))
def test_property_chamfer_symmetric_nonnegative(seed, n, m):
    r = np.random.default_rng(seed)
    P, Q = r.normal(size=(n, 3)), r.normal(size=(m, 3))
    a, b = loss_chamfer(P, Q).value, loss_chamfer(Q, P).value
    assert a >= 0 and a == pytest.approx(b, rel=1e-12)
    assert chamfer_mean(P, Q) <= a + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_property_l2_triangle(seed):
    r = np.random.default_rng(seed)
    A, B, C = (r.normal(size=(6, 3)) for _ in range(3))
    assert loss_l2(A, C).value <= loss_l2(A, B).value + loss_l2(B, C).value + 1e-12
