import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from taperqed.geometry import (
    CrossSectionSpec, GeometryError, GridSpec, disc, rasterize, rasterize_shapes, rectangle, validate,
)

GRID = GridSpec()


def test_default_spec_is_accepted():
    spec = CrossSectionSpec()
    assert validate(spec, GRID) == (spec, GRID)
    assert (spec.channel_thickness, spec.channel_index, spec.fiber_radius) == (256.0, 3.406, 500.0)
    assert (spec.fiber_index, spec.background_index, spec.wavelength) == (1.45, 1.0, 1.3)


def test_zero_width_rejected():
    with pytest.raises(GeometryError, match="channel_width must be positive"):
        validate(CrossSectionSpec(channel_width=0), GRID)


def test_window_smaller_than_fiber_rejected():
    with pytest.raises(GeometryError, match="window must enclose geometry"):
        validate(CrossSectionSpec(), GridSpec(window_x=0.8, window_y=0.8))


@pytest.mark.parametrize("change, fragment", [
    ({"gap": -1.0}, "gap"),
    ({"fiber_index": 0.9}, "fiber_index"),
    ({"wavelength": 0.0}, "wavelength"),
])
def test_first_violation_is_named(change, fragment):
    with pytest.raises(GeometryError, match=fragment):
        validate(CrossSectionSpec(**change), GRID)


def test_margin_enforced():
    with pytest.raises(GeometryError, match="margin"):
        validate(CrossSectionSpec(), GridSpec(window_x=2.0, window_y=3.0))


def test_odd_cell_count_rejected():
    with pytest.raises(GeometryError, match="even number"):
        validate(CrossSectionSpec(), GridSpec(window_x=3.01))


def test_uniform_map_is_constant():
    spec = CrossSectionSpec(channel_index=1.45, fiber_index=1.45, background_index=1.45)
    pm = rasterize(spec, GridSpec(dx=20, dy=20))
    for e in (pm.eps_x, pm.eps_y, pm.eps_z):
        assert np.allclose(e, 2.1025, rtol=0, atol=1e-12)


def _index(nodes, value):
    return int(np.argmin(np.abs(nodes - value)))


def test_interior_values():
    spec = CrossSectionSpec()
    pm = rasterize(spec, GRID)
    xs, ys = GRID.x_nodes(), GRID.y_nodes()
    _, yc = spec.channel_center()
    assert pm.eps_z[_index(xs, 0), _index(ys, yc)] == pytest.approx(11.600836, abs=1e-9)
    fy = spec.placement()["fiber_center"][1]
    assert pm.eps_z[_index(xs, 0), _index(ys, fy)] == pytest.approx(2.1025, abs=1e-12)
    assert pm.eps_z[0, 0] == 1.0


def test_values_bounded():
    pm = rasterize(CrossSectionSpec(channel_width=237), GRID)
    for e in (pm.eps_x, pm.eps_y, pm.eps_z):
        assert e.min() >= 1.0 - 1e-12
        assert e.max() <= 3.406**2 + 1e-12


def test_fiber_area_converges_to_disc():
    exact = np.pi * 500.0**2
    areas = []
    for d in (10.0, 5.0):
        pm = rasterize(CrossSectionSpec(), GridSpec(dx=d, dy=d), channel=False)
        areas.append(pm.material_area(1.45**2))
    assert abs(areas[1] - areas[0]) / exact < 5e-3
    assert abs(areas[1] - exact) / exact < 5e-3


def test_channel_area_converges():
    spec = CrossSectionSpec(channel_width=233, channel_thickness=251)
    exact = 233 * 251
    errs = []
    for d in (20.0, 10.0, 5.0):
        pm = rasterize(spec, GridSpec(dx=d, dy=d), fiber=False)
        errs.append(abs(pm.material_area(spec.channel_index**2) - exact))
    perimeter = 2 * (233 + 251)
    for d, e in zip((20.0, 10.0, 5.0), errs):
        assert e <= perimeter * d


def test_mirror_symmetry_is_exact():
    pm = rasterize(CrossSectionSpec(channel_width=227), GRID)
    assert pm.mirror_error() == 0.0


def test_tangential_and_normal_averaging():
    # vertical interface through a cell: Ey (tangential) arithmetic, Ex (normal) harmonic
    grid = GridSpec(dx=10, dy=10, window_x=0.2, window_y=0.2, min_margin=0.0)
    pm = rasterize_shapes([(rectangle(-1e4, 3.0, -1e4, 1e4), 4.0)], 1.0, grid, symmetric=False)
    xs = grid.x_nodes()
    i = _index(xs, 0.0)  # Ey node at x = 0 owns [-5, 5]: fill 0.8
    assert pm.eps_y[i, 5] == pytest.approx(0.8 * 4 + 0.2, rel=1e-12)
    xh = 0.5 * (xs[1:] + xs[:-1])
    k = _index(xh, 5.0)  # Ex point at x = 5 owns [0, 10]: fill 0.3
    assert pm.eps_x[k, 5] == pytest.approx(1 / (0.3 / 4 + 0.7), rel=1e-12)


def test_shapes_signed_distance():
    r = rectangle(-1, 1, -2, 2)
    assert r(np.array(0.0), np.array(0.0)) == -1.0
    assert r(np.array(4.0), np.array(6.0)) == pytest.approx(5.0)
    assert disc(0, 0, 2)(np.array(3.0), np.array(4.0)) == pytest.approx(3.0)


def test_write_csv(tmp_path):
    grid = GridSpec(dx=20, dy=20)
    pm = rasterize(CrossSectionSpec(), grid)
    path = tmp_path / "eps.csv"
    pm.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x_nm,y_nm,eps_Ex,eps_Ey,eps_Ez"
    assert len(lines) == 1 + grid.nx * grid.ny


def test_spec_is_immutable():
    spec = CrossSectionSpec()
    with pytest.raises(dataclasses.FrozenInstanceError):
        spec.channel_width = 1.0


@settings(max_examples=8, deadline=None)
@given(w=st.floats(150, 400), t=st.floats(150, 400), gap=st.floats(0, 100))
def test_random_geometries_symmetric_and_bounded(w, t, gap):
    spec = CrossSectionSpec(channel_width=w, channel_thickness=t, gap=gap)
    grid = GridSpec(dx=20, dy=20, window_y=4.4)
    pm = rasterize(spec, grid)
    assert pm.mirror_error() == 0.0
    lo, hi = 1.0, spec.channel_index**2
    for e in (pm.eps_x, pm.eps_y, pm.eps_z):
        assert lo - 1e-12 <= e.min() and e.max() <= hi + 1e-12
