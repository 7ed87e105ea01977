import logging

import numpy as np
import pytest

from fracshape.mesh import Tag, min_scaled_jacobian
from fracshape.specimen import (
    Level,
    SpecimenSpec,
    Tip,
    boundary_polygon,
    generate,
    tip_points,
)


def test_medium_round_counts(medium_mesh):
    assert abs(medium_mesh.n_nodes - 717) <= 0.15 * 717
    assert abs(medium_mesh.n_triangles - 1333) <= 0.15 * 1333
    assert min_scaled_jacobian(medium_mesh) >= 0.30


@pytest.mark.parametrize("tip", list(Tip))
def test_boundary_polygon_is_mirror_symmetric(tip):
    p = boundary_polygon(SpecimenSpec(tip, 0.02))
    mirrored = {(round(x, 12), round(1 - y, 12)) for x, y in p}
    assert mirrored == {(round(x, 12), round(y, 12)) for x, y in p}


@pytest.mark.parametrize("tip", list(Tip))
def test_area_with_thin_slit(tip):
    d = 1e-3
    m = generate(SpecimenSpec(tip, d, "coarse"))
    # tip polygon closed along the chord x1 = 0.5
    p = tip_points(tip, d)
    x, y = p[:, 0], p[:, 1]
    tip_area = abs(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    assert m.area == pytest.approx(1.0 - 0.5 * 2 * d - tip_area, rel=1e-6)
    if tip is Tip.POINTY:
        assert tip_area == pytest.approx(d * d)
    m.validate()


def test_flat_tip_has_vertical_chain():
    m = generate(SpecimenSpec("flat", 1e-2, "coarse"))
    tip = m.edges[m.edges_with(Tag.CRACK)]
    x = m.nodes[tip]
    assert np.allclose(x[:, :, 0], 0.5)
    assert x[:, :, 1].min() == pytest.approx(0.49) and x[:, :, 1].max() == pytest.approx(0.51)


def test_round_tip_segments_and_apex():
    p = tip_points(Tip.ROUND, 0.01)
    assert len(p) - 1 >= 8
    np.testing.assert_allclose(np.hypot(p[:, 0] - 0.5, p[:, 1] - 0.5), 0.01, atol=1e-15)
    assert p[:, 0].min() == pytest.approx(0.49)


def test_pointy_apex():
    p = tip_points(Tip.POINTY, 0.02)
    np.testing.assert_allclose(p[1], [0.48, 0.5])


def test_delta_bounds():
    with pytest.raises(ValueError):
        SpecimenSpec("round", 0.0)
    with pytest.raises(ValueError):
        SpecimenSpec("round", 0.06)
    with pytest.raises(ValueError):
        SpecimenSpec("oval", 0.01)


def test_under_resolved_tip_warns(caplog):
    caplog.set_level(logging.WARNING, logger="fracshape.specimen")
    generate(SpecimenSpec("flat", 1e-2, "very-coarse"))
    assert any("under-resolved" in r.message for r in caplog.records)


def test_levels_get_finer():
    hs = [lv.target_h for lv in Level]
    assert hs == sorted(hs, reverse=True)
