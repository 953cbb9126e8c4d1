import numpy as np
import pytest

from dnurbs import shapes
from dnurbs.core import ParamGrid, forward_grid, surface_partials
from dnurbs.offset import detect_shared_edges


def test_analytical_curve():
    c = shapes.analytical_curve(5)
    x = c.points[:, 0]
    np.testing.assert_allclose(c.points[:, 1], np.sin(x) + 2 * np.sin(2 * x) + np.sin(4 * x))
    assert x[0] == 0.0 and x[-1] == pytest.approx(2 * np.pi)


def test_helix_radius_and_rise():
    h = shapes.helix(100, radius=2.0, pitch=0.5, turns=3)
    np.testing.assert_allclose(np.hypot(h.points[:, 0], h.points[:, 1]), 2.0)
    assert h.points[-1, 2] == pytest.approx(1.5)


@pytest.mark.parametrize(
    "build, shape, degrees",
    [
        (shapes.double_curve_surface, (6, 6), (3, 3)),
        (shapes.synthetic_ducky, (14, 13), (3, 3)),
    ],
)
def test_single_patch_sizes(build, shape, degrees):
    s = build()
    assert s.shape == shape and (s.degree_u, s.degree_v) == degrees


def test_ducky_is_rational_and_non_uniform():
    s = shapes.synthetic_ducky()
    assert not s.knots_u.is_uniform and not s.knots_v.is_uniform
    assert np.ptp(s.weights) > 0.1


def test_assembly_sizes():
    assert [p.shape for p in shapes.c0_assembly()] == [(4, 4)] * 2
    assert [p.shape for p in shapes.c1_assembly()] == [(6, 6)] * 2
    assert [p.shape for p in shapes.aerofoil_assembly()] == [(50, 24)] * 2


def test_c0_has_a_crease():
    a, b = shapes.c0_assembly()
    Su_a, _ = surface_partials(a, 1.0, 0.5)
    Su_b, _ = surface_partials(b, 0.0, 0.5)
    cos = Su_a @ Su_b / np.linalg.norm(Su_a) / np.linalg.norm(Su_b)
    assert cos < 0.9


def test_c1_join_is_c1():
    a, b = shapes.c1_assembly()
    asm = detect_shared_edges([a, b])
    e = asm.shared_edges[0]
    for v in np.linspace(0, 1, 7):
        Su_a, Sv_a = surface_partials(a, 1.0, v)
        # b starts at the shared edge with u pointing away from it
        vb = 1.0 - v if e.reversed else v
        Su_b, _ = surface_partials(b, 0.0, vb)
        np.testing.assert_allclose(Su_a, Su_b, atol=1e-12)


def test_aerofoil_leading_edge_shared():
    up, lo = shapes.aerofoil_assembly()
    S_up, _ = forward_grid(up, ParamGrid(5, 5))
    S_lo, _ = forward_grid(lo, ParamGrid(5, 5))
    np.testing.assert_allclose(S_up[:, 0], S_lo[:, -1], atol=1e-15)


def test_cylinder_radius():
    S, _ = forward_grid(shapes.cylinder_patch(radius=3.0), ParamGrid(20, 3))
    np.testing.assert_allclose(np.hypot(S[..., 0], S[..., 2]), 3.0, atol=1e-14)


def test_flower_unit_square_closed():
    f = shapes.flower_cloud()
    lo, hi = f.bbox
    assert lo.min() > 0 and hi.max() < 1
    assert len(np.unique(f.points, axis=0)) == len(f)
    # neighbouring pixels of a closed outline are at most one pixel diagonal apart
    d = np.linalg.norm(f.points[:, None] - f.points[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    assert d.min(axis=1).max() <= np.sqrt(2) / 64 + 1e-12
