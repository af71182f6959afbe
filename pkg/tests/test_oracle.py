import numpy as np
import pytest

from envelope_pde.oracle import (LowerHull, contact_points, envelope_grid, envelope_value,
                                 write_witness_csv)
from envelope_pde.problem import (BoundaryDatum, BoundaryProblem, BoundaryTrace, Domain, DomainError,
                                  build_grid, random_trig_datum, sample_boundary)

SQ, DISK = Domain.square(1.0), Domain.disk(1.0)


def _check_witness(w, x, trace):
    assert 2 <= w.k <= 3
    assert np.all(w.weights > 0) and abs(w.weights.sum() - 1) < 1e-12
    assert np.allclose(w.weights @ w.points, x, atol=1e-9)
    # plane below every sample, touching at x
    assert np.all(w.plane_at(trace.points) <= trace.values + 1e-9)
    assert abs(w.plane_at(x) - w.value) < 1e-9


# frozen values from the exhaustive search
def test_frozen_saddle_square_origin():
    tr = sample_boundary(SQ, BoundaryDatum.saddle(), 256)
    w = envelope_value((0.0, 0.0), tr)
    assert w.value == -1.0
    assert w.k == 2
    assert sorted(map(tuple, w.points)) == [(0.0, -1.0), (0.0, 1.0)]
    assert np.array_equal(w.weights, [0.5, 0.5])
    A, b = w.plane
    assert np.allclose(A, 0, atol=1e-15) and b == -1.0
    _check_witness(w, (0, 0), tr)


def test_frozen_saddle_disk():
    # the envelope of x^2 - y^2 on the unit circle is 2x^2 - 1
    tr = sample_boundary(DISK, BoundaryDatum.saddle(), 400)
    w = envelope_value((0.5, 0.0), tr)
    assert w.value == pytest.approx(-0.4999178798664742, abs=1e-14)
    assert abs(w.value - (2 * 0.25 - 1)) < 1e-3
    _check_witness(w, (0.5, 0.0), tr)


def test_frozen_absx():
    tr = sample_boundary(SQ, BoundaryDatum.absx(), 256)
    w = envelope_value((0.5, 0.0), tr)
    assert w.value == pytest.approx(0.5, abs=1e-15)
    _check_witness(w, (0.5, 0.0), tr)
    cp = contact_points(w, tr)
    # the plane A = (1, 0) touches |x| on the whole right half
    assert np.all(cp[:, 0] >= -1e-12)
    assert len(cp) == np.sum(tr.points[:, 0] >= 0)
    for p in w.points:
        assert np.any(np.all(cp == p, axis=1))


def test_affine_trace_any_point():
    tr = sample_boundary(DISK, BoundaryDatum.affine((1.5, -0.5), 0.3), 64)
    rng = np.random.default_rng(0)
    for x in rng.uniform(-0.6, 0.6, (20, 2)):
        w = envelope_value(x, tr)
        assert w.value == pytest.approx(1.5 * x[0] - 0.5 * x[1] + 0.3, abs=1e-12)
        assert len(contact_points(w, tr)) == tr.m


def test_outside_hull_raises():
    tr = sample_boundary(DISK, BoundaryDatum.saddle(), 8)
    with pytest.raises(DomainError):
        envelope_value((0.99, 0.0), BoundaryTrace(tr.points[:3], tr.values[:3]))
    with pytest.raises(DomainError):
        envelope_value((2.0, 0.0), tr)


def test_contact_points_saddle_cluster():
    tr = sample_boundary(SQ, BoundaryDatum.saddle(), 256)
    cp = contact_points(envelope_value((0.0, 0.0), tr), tr)
    assert np.allclose(np.abs(cp), [0, 1])


def test_envelope_grid_examples():
    g = build_grid(SQ, 33)
    o = envelope_grid(g, sample_boundary(SQ, BoundaryDatum.saddle(), 256))
    assert np.nanmax(np.abs(o.values - g.sample(lambda p: p[..., 0] ** 2 - 1))) <= 0.02
    g = build_grid(DISK, 33)
    pc = BoundaryDatum.powercone(0.1)
    o = envelope_grid(g, sample_boundary(DISK, pc, 256))
    core = g.interior & (np.hypot(*g.coords().transpose(2, 0, 1)) < 0.5)
    ref = g.sample(BoundaryProblem(DISK, pc).reference())
    assert np.max(np.abs(o.values - ref)[core]) <= 0.02
    g = build_grid(DISK, 21)
    o = envelope_grid(g, sample_boundary(DISK, BoundaryDatum.affine((1, 2), 3), 64))
    ref = g.sample(lambda p: p[..., 0] + 2 * p[..., 1] + 3)
    assert np.nanmax(np.abs(o.values - ref)) < 1e-12


@pytest.mark.parametrize("dom,datum", [
    (SQ, BoundaryDatum.saddle()),
    (SQ, BoundaryDatum.absx()),
    (DISK, BoundaryDatum.powercone(0.1)),
    (DISK, random_trig_datum(DISK, 48, 7)),
])
def test_hull_agrees_with_brute_force(dom, datum):
    g = build_grid(dom, 13)
    tr = sample_boundary(dom, datum, 48)
    a = envelope_grid(g, tr, method="hull").values
    b = envelope_grid(g, tr, method="brute").values
    assert np.array_equal(np.isnan(a), np.isnan(b))
    assert np.nanmax(np.abs(a - b)) < 1e-10


def test_hull_witness_invariants():
    tr = sample_boundary(DISK, random_trig_datum(DISK, 64, 1), 64)
    hull = LowerHull.build(tr)
    rng = np.random.default_rng(2)
    for x in rng.uniform(-0.7, 0.7, (30, 2)):
        w = hull.witness(x)
        _check_witness(w, x, tr)
        assert w.value == pytest.approx(envelope_value(x, tr).value, abs=1e-10)


def test_weak_duality():
    tr = sample_boundary(DISK, random_trig_datum(DISK, 40, 4), 40)
    rng = np.random.default_rng(3)
    x = np.array([0.2, -0.3])
    val = envelope_value(x, tr).value
    for _ in range(200):
        A = rng.normal(size=2)
        b = np.min(tr.values - tr.points @ A)  # highest plane with slope A below the samples
        assert A @ x + b <= val + 1e-12


def test_monotone_in_data():
    tr = sample_boundary(DISK, random_trig_datum(DISK, 40, 5), 40)
    x = np.array([0.1, 0.25])
    base = envelope_value(x, tr).value
    rng = np.random.default_rng(4)
    for _ in range(20):
        up = tr.values + np.abs(rng.normal(size=tr.m)) * (rng.random(tr.m) < 0.3)
        assert envelope_value(x, BoundaryTrace(tr.points, up)).value >= base - 1e-14


def test_sampling_consistency():
    datum = BoundaryDatum.saddle()
    x = np.array([0.3, 0.2])
    coarse = envelope_value(x, sample_boundary(DISK, datum, 64)).value
    fine = envelope_value(x, sample_boundary(DISK, datum, 128)).value
    # nested samples: refining can only lower the value
    assert fine <= coarse + 1e-14
    assert coarse - fine < 0.01


def test_witness_csv(tmp_path):
    g = build_grid(SQ, 9)
    tr = sample_boundary(SQ, BoundaryDatum.saddle(), 32)
    write_witness_csv(tmp_path / "w.csv", g, LowerHull.build(tr))
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "x,y,value,k,p1x,p1y,w1,p2x,p2y,w2,p3x,p3y,w3"
    assert len(lines) == 1 + g.n_interior
    assert all(len(r.split(",")) == 13 for r in lines[1:])
