import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnurbs.errors import ContractError, PoisonedGradientError
from dnurbs.optim import DEFAULT_LR, OptimizerState, apply_shared_edge_constraint, clamp_weights, step


def one(x):
    return {"points": np.array([float(x)])}


class TestStep:
    def test_sgd_arithmetic(self):
        p = one(1.0)
        step(p, one(0.5), OptimizerState("sgd", 0.1))
        assert p["points"][0] == pytest.approx(0.95, abs=1e-16)

    def test_momentum_first_step_equals_sgd(self, rng):
        g = {"points": rng.normal(size=(4, 3))}
        a, b = {"points": np.ones((4, 3))}, {"points": np.ones((4, 3))}
        step(a, g, OptimizerState("sgd", 0.07))
        step(b, g, OptimizerState("momentum", 0.07))
        assert a["points"].tobytes() == b["points"].tobytes()

    def test_momentum_accumulates(self):
        p, st_ = one(0.0), OptimizerState("momentum", 0.1, momentum=0.5)
        step(p, one(1.0), st_)
        step(p, one(1.0), st_)
        assert p["points"][0] == pytest.approx(-0.1 - 0.1 * 1.5)

    @pytest.mark.parametrize("g", [0.1, 1.0, 10.0, -10.0])
    def test_adam_first_step_magnitude(self, g):
        alpha = 0.01
        p = one(2.0)
        step(p, one(g), OptimizerState("adam", alpha))
        delta = abs(p["points"][0] - 2.0)
        # closed form: m_hat = g, v_hat = g^2, so delta = alpha |g| / (|g| + eps)
        assert 0.99 * alpha <= delta <= alpha
        assert delta == pytest.approx(alpha * abs(g) / (abs(g) + 1e-8), rel=1e-12)

    def test_adagrad_first_step(self):
        p = one(0.0)
        step(p, one(4.0), OptimizerState("adagrad", 0.05))
        assert p["points"][0] == pytest.approx(-0.05 * 4 / (4 + 1e-10))

    def test_defaults(self):
        for kind, lr in DEFAULT_LR.items():
            assert OptimizerState(kind).learning_rate == lr
        with pytest.raises(ContractError):
            OptimizerState("rmsprop")
        with pytest.raises(ContractError):
            OptimizerState("sgd", -1.0)

    @pytest.mark.parametrize("kind", list(DEFAULT_LR))
    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_poisoned_gradient_leaves_params(self, kind, bad):
        p = {"points": np.arange(4.0), "weights": np.ones(2)}
        before = {k: v.copy() for k, v in p.items()}
        st_ = OptimizerState(kind)
        with pytest.raises(PoisonedGradientError):
            step(p, {"points": np.array([0.0, bad, 0.0, 0.0]), "weights": np.zeros(2)}, st_)
        for k in p:
            assert p[k].tobytes() == before[k].tobytes()
        assert st_.step_count == 0 and not st_.buffers

    def test_missing_or_misshapen_gradient(self):
        with pytest.raises(ContractError):
            step({"points": np.zeros(3)}, {}, OptimizerState("sgd"))
        with pytest.raises(ContractError):
            step({"points": np.zeros(3)}, {"points": np.zeros(4)}, OptimizerState("sgd"))

    def test_lr_scales(self):
        p = {"points": np.zeros(1), "weights": np.zeros(1)}
        g = {"points": np.ones(1), "weights": np.ones(1)}
        step(p, g, OptimizerState("sgd", 0.1, lr_scales={"weights": 0.01}))
        assert p["points"][0] == pytest.approx(-0.1) and p["weights"][0] == pytest.approx(-0.001)

    @pytest.mark.parametrize("kind", list(DEFAULT_LR))
    def test_quadratic_descent(self, kind):
        # minimise |x - c|^2; every optimizer should approach c
        c = np.array([1.0, -2.0, 0.5])
        p = {"points": np.zeros(3)}
        st_ = OptimizerState(kind, learning_rate={"sgd": 0.1, "momentum": 0.05, "adam": 0.05, "adagrad": 0.5}[kind])
        for _ in range(2000):
            step(p, {"points": 2 * (p["points"] - c)}, st_)
        np.testing.assert_allclose(p["points"], c, atol=1e-3)


class TestClamp:
    def test_floor(self):
        w = np.array([0.5, -0.2, 1.0])
        clamp_weights(w, 1e-4)
        np.testing.assert_array_equal(w, [0.5, 1e-4, 1.0])

    def test_identity_above_floor(self, rng):
        w = rng.uniform(0.5, 2, 10)
        before = w.copy()
        clamp_weights(w, 1e-4)
        assert w.tobytes() == before.tobytes()

    def test_descent_arrested_at_floor(self):
        # gradient of 1 keeps pushing the weight down; projection holds it at the floor
        p = {"points": np.zeros(1), "weights": np.array([0.3])}
        st_ = OptimizerState("sgd", 0.05)
        lows = []
        for _ in range(100):
            step(p, {"points": np.zeros(1), "weights": np.ones(1)}, st_)
            clamp_weights(p, 1e-4)
            lows.append(p["weights"][0])
        assert min(lows) == 1e-4 and p["weights"][0] == 1e-4

    def test_bad_floor(self):
        with pytest.raises(ContractError):
            clamp_weights(np.ones(2), 0.0)


class TestSharedEdge:
    def patches(self):
        a = {"points": np.zeros((2, 2, 3)), "weights": np.ones((2, 2))}
        b = {"points": np.zeros((2, 2, 3)), "weights": np.ones((2, 2))}
        return [a, b]

    def test_agreeing_edge_unchanged(self, rng):
        ps = self.patches()
        ps[0]["points"][1, :] = rng.normal(size=(2, 3))
        ps[1]["points"][0, :] = ps[0]["points"][1, :]
        before = [p["points"].copy() for p in ps]
        apply_shared_edge_constraint(ps, [[(0, 1, 0), (1, 0, 0)], [(0, 1, 1), (1, 0, 1)]])
        for p, b in zip(ps, before):
            assert p["points"].tobytes() == b.tobytes()

    def test_mean(self):
        ps = self.patches()
        ps[1]["points"][0, 0] = [0, 0, 2]
        apply_shared_edge_constraint(ps, [[(0, 1, 0), (1, 0, 0)]])
        np.testing.assert_array_equal(ps[0]["points"][1, 0], [0, 0, 1])
        np.testing.assert_array_equal(ps[1]["points"][0, 0], [0, 0, 1])

    def test_weights_averaged(self):
        ps = self.patches()
        ps[0]["weights"][1, 0] = 3.0
        apply_shared_edge_constraint(ps, [[(0, 1, 0), (1, 0, 0)]])
        assert ps[0]["weights"][1, 0] == ps[1]["weights"][0, 0] == 2.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31))
    def test_property_idempotent_bitwise(self, seed):
        r = np.random.default_rng(seed)
        ps = [{"points": r.normal(size=(3, 3, 3)), "weights": r.uniform(0.5, 2, (3, 3))} for _ in range(3)]
        groups = [[(0, 2, j), (1, 0, j), (2, 0, 2 - j)] for j in range(3)]
        apply_shared_edge_constraint(ps, groups)
        once = [(p["points"].tobytes(), p["weights"].tobytes()) for p in ps]
        apply_shared_edge_constraint(ps, groups)
        assert [(p["points"].tobytes(), p["weights"].tobytes()) for p in ps] == once
        for g in groups:
            vals = [ps[k]["points"][i, j].tobytes() for k, i, j in g]
            assert len(set(vals)) == 1

    @pytest.mark.parametrize("bad", [(2, 0, 0), (0, 2, 0), (0, 0, -1)])
    def test_invalid_index(self, bad):
        with pytest.raises(ContractError):
            apply_shared_edge_constraint(self.patches(), [[(0, 0, 0), bad]])
