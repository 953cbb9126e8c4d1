import numpy as np
import pytest

from dnurbs.errors import ContractError
from dnurbs.gradcheck import TOLERANCE, corrupted_backward, gradcheck, random_surface


def test_random_surface_ranges():
    for k in range(50):
        s = random_surface(np.random.default_rng([0, k]))
        assert 1 <= s.degree_u <= 3 and 1 <= s.degree_v <= 3
        assert all(4 <= c <= 10 for c in s.shape) and s.dim in (2, 3)
        assert s.weights.min() >= 0.5 and s.weights.max() <= 2.0


def test_passes_small():
    res = gradcheck(trials=4, seed=3)
    assert res.passed and res.max_rel_error < TOLERANCE
    assert len(res.errors) == 4 and res.max_rel_error == max(res.errors)


def test_reproducible_per_trial():
    full = gradcheck(trials=3, seed=11)
    assert gradcheck(trials=3, seed=11).errors == full.errors


def test_negative_control_detects_fault():
    res = gradcheck(trials=2, seed=0, backward=corrupted_backward)
    assert not res.passed and res.worst_param.startswith("weights")


def test_rejects_zero_trials():
    with pytest.raises(ContractError):
        gradcheck(trials=0)
