import math

import numpy as np
import pytest

from envelope_pde.problem import (BoundaryDatum, BoundaryProblem, ConfigError, Domain, DomainError,
                                  build_grid, eval_g, random_trig_datum, read_samples_csv,
                                  sample_boundary, write_samples_csv)


def test_domain_validation():
    with pytest.raises(ConfigError):
        Domain.disk(0.0)
    with pytest.raises(ConfigError):
        Domain.square(-1.0)


def test_membership_is_a_partition():
    d = Domain.disk(1.0)
    pts = np.array([[0, 0], [1, 0], [2, 0], [math.sqrt(0.5), math.sqrt(0.5)]])
    inside = d.is_interior(pts)
    on = d.on_boundary(pts, tol=1e-12)
    assert list(inside) == [True, False, False, False]
    assert list(on) == [False, True, False, True]


def test_grid_square_spacing():
    g = build_grid(Domain.square(1.0), 5)
    assert g.h == 0.5
    assert g.x[0] == -1.0 and g.x[-1] == 1.0
    assert g.n_interior == 9


def test_grid_disk_membership():
    g = build_grid(Domain.disk(1.0), 5)
    assert g.interior[2, 2]
    assert not g.interior[4, 4]


def test_grid_disk_count():
    g = build_grid(Domain.disk(1.0), 129)
    assert abs(g.n_interior - math.pi / 4 * 129**2) <= 0.02 * math.pi / 4 * 129**2


def test_grid_mask_matches_analytic_test():
    d = Domain.disk(1.0, center=(0.3, -0.2))
    g = build_grid(d, 33)
    assert np.array_equal(g.interior, d.is_interior(g.coords()))


def test_grid_too_small():
    with pytest.raises(ConfigError):
        build_grid(Domain.square(), 4)


def test_eval_g_examples():
    d = Domain.disk(1.0)
    assert eval_g(BoundaryDatum.saddle(), (1.0, 0.0), d) == 1.0
    assert eval_g(BoundaryDatum.powercone(0.1), (-1.0, 0.0), d) == 0.0
    s = 1 / math.sqrt(2)
    assert abs(eval_g(BoundaryDatum.saddle(), (s, s), d)) < 1e-15
    with pytest.raises(DomainError):
        eval_g(BoundaryDatum.saddle(), (0.5, 0.0), d)


def test_powercone_range():
    with pytest.raises(ConfigError):
        BoundaryDatum.powercone(0.5)
    with pytest.raises(ConfigError):
        BoundaryDatum.powercone(0.0)


def test_affine_exact_on_boundary():
    d = Domain.square(1.0)
    g = BoundaryDatum.affine((0.3, -1.7), 0.25)
    tr = sample_boundary(d, g, 40)
    expect = tr.points @ np.array([0.3, -1.7]) + 0.25
    assert np.array_equal(tr.values, expect)


def test_sample_boundary_examples():
    tr = sample_boundary(Domain.disk(1.0), BoundaryDatum.constant(5.0), 4)
    assert tr.m == 4
    assert np.allclose(np.hypot(*tr.points.T), 1.0)
    assert np.all(tr.values == 5.0)

    tr = sample_boundary(Domain.square(1.0), BoundaryDatum.saddle(), 8)
    k = np.flatnonzero(np.all(tr.points == [1.0, 1.0], axis=1))
    assert len(k) == 1 and tr.values[k[0]] == 0.0

    tr = sample_boundary(Domain.disk(1.0), BoundaryDatum.saddle(), 100)
    assert tr.values.min() >= -1.0
    p = tr.points[np.argmin(tr.values)]
    assert abs(p[0]) < 1e-12 and abs(abs(p[1]) - 1.0) < 1e-12


@pytest.mark.parametrize("dom", [Domain.disk(1.0), Domain.square(1.0), Domain.square(2.0, (1, 1))])
def test_sample_boundary_spacing_and_corners(dom):
    m = 64
    tr = sample_boundary(dom, BoundaryDatum.saddle(), m)
    assert np.all(dom.on_boundary(tr.points))
    assert len(np.unique(tr.points, axis=0)) == m
    s = dom.boundary_param(tr.points)
    assert np.all(np.diff(s) > 0)
    gaps = np.diff(np.append(s, s[0] + dom.perimeter))
    assert gaps.max() <= 2 * dom.perimeter / m and gaps.min() >= 0.5 * dom.perimeter / m
    assert np.array_equal(tr.values, BoundaryDatum.saddle()(tr.points))
    if dom.shape.value == "square":
        r, (cx, cy) = dom.size, dom.center
        for corner in [(cx + r, cy + r), (cx - r, cy + r), (cx - r, cy - r), (cx + r, cy - r)]:
            assert np.any(np.all(np.isclose(tr.points, corner, atol=1e-15), axis=1))


def test_ray_exit_analytic():
    d = Domain.disk(1.0)
    assert math.isclose(float(d.ray_exit((0.9, 0.0), (1.0, 0.0))), 0.1, rel_tol=1e-12)
    s = Domain.square(1.0)
    v = np.array([1.0, 1.0]) / math.sqrt(2)
    assert math.isclose(float(s.ray_exit((0.5, 0.0), v)), 0.5 * math.sqrt(2), rel_tol=1e-12)


def test_boundary_param_roundtrip():
    for d in (Domain.disk(1.3, (0.1, 0.2)), Domain.square(0.7, (-0.4, 0.5))):
        s = np.linspace(0, d.perimeter, 37, endpoint=False)
        assert np.allclose(d.boundary_param(d.boundary_point(s)), s, atol=1e-12)


def test_sampled_datum_validation_and_interp():
    d = Domain.disk(1.0)
    with pytest.raises(ConfigError):
        BoundaryDatum.sampled(d, [[1, 0], [0, 1]], [0, 1])
    with pytest.raises(ConfigError):
        BoundaryDatum.sampled(d, [[1, 0], [0, 1], [0.5, 0]], [0, 1, 2])
    th = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    pts = np.column_stack([np.cos(th), np.sin(th)])
    g = BoundaryDatum.sampled(d, pts[::-1], np.arange(12.0)[::-1])
    assert np.allclose(g(pts), np.arange(12.0))
    mid = np.array([math.cos(th[1] / 2), math.sin(th[1] / 2)])
    assert math.isclose(float(g(mid)), 0.5, rel_tol=1e-12)


def test_samples_csv_roundtrip(tmp_path):
    d = Domain.disk(1.0)
    g = random_trig_datum(d, 32, seed=3)
    tr = sample_boundary(d, g, 32)
    path = tmp_path / "s.csv"
    write_samples_csv(path, tr)
    assert path.read_text().splitlines()[0] == "x,y,g"
    g2 = read_samples_csv(path, d)
    assert np.array_equal(g2(tr.points), g(tr.points))


def test_random_trig_is_seeded():
    d = Domain.disk(1.0)
    a = random_trig_datum(d, 64, 1)
    b = random_trig_datum(d, 64, 1)
    c = random_trig_datum(d, 64, 2)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    with pytest.raises(ConfigError):
        random_trig_datum(Domain.square(), 64, 1)


def test_reference_forms():
    sq, disk = Domain.square(1.0), Domain.disk(1.0)
    p = np.array([[0.5, 0.3]])
    assert BoundaryProblem(sq, BoundaryDatum.saddle()).reference()(p)[0] == 0.25 - 1
    assert BoundaryProblem(disk, BoundaryDatum.saddle()).reference()(p)[0] == 2 * 0.25 - 1
    assert BoundaryProblem(sq, BoundaryDatum.absx()).reference()(p)[0] == 0.5
    assert BoundaryProblem(Domain.square(2.0), BoundaryDatum.saddle()).reference() is None
