import math

import numpy as np
import pytest

from envelope_pde.analysis import (Region, boundary_gap, contact_fractions, contact_scan,
                                   default_flat_tol, gradient_field, holder_quotient, ma_residual,
                                   write_contact_csv, write_holder_txt)
from envelope_pde.envelope_solver import SolverConfig, solve_dirichlet
from envelope_pde.problem import BoundaryDatum, BoundaryProblem, Domain, build_grid
from envelope_pde.stencil import make_directions

SQ, DISK = Domain.square(1.0), Domain.disk(1.0)


def _solve(dom, datum, n=33, width=3, tol=1e-10):
    g = build_grid(dom, n)
    return solve_dirichlet(BoundaryProblem(dom, datum), g, make_directions(width),
                           SolverConfig(tol=tol))


def test_contact_saddle(saddle65):
    reps = contact_scan(saddle65, BoundaryDatum.saddle())
    assert all((0, 1) in [tuple(d) for d in r.flat_dirs] for r in reps)
    assert all(r.segment_hit for r in reps)
    r = reps[len(reps) // 2]
    ends = sorted(tuple(p) for p in r.boundary_endpoints)
    assert np.allclose(ends, [(r.point[0], -1), (r.point[0], 1)])
    assert r.max_deviation <= 5 * saddle65.grid.h * 2


def test_contact_affine():
    f = _solve(DISK, BoundaryDatum.affine((0.5, 1.0), -0.2), n=25, width=2)
    reps = contact_scan(f, BoundaryDatum.affine((0.5, 1.0), -0.2))
    assert all(len(r.flat_dirs) == 4 and r.segment_hit for r in reps)


def test_contact_absx_off_ridge():
    f = _solve(SQ, BoundaryDatum.absx(), n=41)
    reps = {r.node: r for r in contact_scan(f, BoundaryDatum.absx())}
    i = int(np.argmin(np.abs(f.grid.x - 0.5)))
    r = reps[(i, 20)]
    flat = [tuple(d) for d in r.flat_dirs]
    assert (0, 1) in flat and (1, 0) in flat
    assert r.segment_hit


def test_flat_tol_default(saddle65):
    assert default_flat_tol(saddle65) == pytest.approx(10 * saddle65.tol * 2 / saddle65.grid.h**2)


def test_contact_fractions(saddle65):
    flat, hit = contact_fractions(contact_scan(saddle65, BoundaryDatum.saddle()), saddle65.grid)
    assert flat == 1.0 and hit == 1.0


def test_gradient_examples():
    g = build_grid(SQ, 33)
    gf = gradient_field(g.sample(lambda p: p[..., 0] ** 2 - 1), g)
    full = g.interior & ~gf.one_sided
    x = g.coords()[..., 0]
    assert np.allclose(gf.grad[full][:, 0], 2 * x[full], atol=1e-12)
    assert np.allclose(gf.grad[full][:, 1], 0, atol=1e-12)
    gf = gradient_field(g.sample(lambda p: 3 * p[..., 0] - p[..., 1]), g)
    assert np.allclose(gf.grad[g.interior], (3, -1), atol=1e-12)
    assert not gf.kink.any()


def test_gradient_powercone():
    g = build_grid(DISK, 65)
    gf = gradient_field(g.sample(lambda p: -np.maximum(1 + p[..., 0], 0) ** 0.9), g)
    x = g.coords()[..., 0]
    sel = g.interior & ~gf.one_sided & (x > -0.5)
    err = np.abs(gf.grad[sel][:, 0] + 0.9 * (1 + x[sel]) ** -0.1)
    assert err.max() < 5 * g.h**2


def test_gradient_flags_kink():
    g = build_grid(SQ, 33)
    gf = gradient_field(g.sample(lambda p: np.abs(p[..., 0])), g)
    assert np.all(gf.kink[16, 1:-1])
    assert not gf.kink[g.interior & (np.abs(g.coords()[..., 0]) > 1e-9)].any()
    assert gf.one_sided[1, 16] and not gf.one_sided[16, 16]


def test_holder_affine_and_errors():
    g = build_grid(DISK, 33)
    u = g.sample(lambda p: p[..., 0] - 2 * p[..., 1])
    r = holder_quotient(u, g, Region.ball((0, 0), 0.5), alpha=0.7)
    assert r.sup_quotient < 1e-10
    assert not np.array_equal(*r.witness_pair)
    with pytest.raises(ValueError):
        holder_quotient(u, g, Region.ball((5, 5), 0.1), alpha=0.5)
    with pytest.raises(ValueError):
        holder_quotient(u, g, None, alpha=1.5)


def test_holder_sampling_deterministic():
    g = build_grid(DISK, 65)
    u = g.sample(lambda p: np.sin(2 * p[..., 0]) * p[..., 1])
    a = holder_quotient(u, g, None, alpha=0.8, n_pairs=5000, seed=3)
    b = holder_quotient(u, g, None, alpha=0.8, n_pairs=5000, seed=3)
    assert a.sup_quotient == b.sup_quotient and a.n_pairs == b.n_pairs == 5000
    assert all(np.array_equal(p, q) for p, q in zip(a.witness_pair, b.witness_pair))
    # small regions use every pair
    c = holder_quotient(u, g, Region.ball((0, 0), 0.1), alpha=0.8, n_pairs=10**6)
    assert c.n_pairs == c.n_nodes * (c.n_nodes - 1) // 2


def test_holder_excludes_kinks():
    g = build_grid(SQ, 33)
    u = g.sample(lambda p: np.abs(p[..., 0]))
    r = holder_quotient(u, g, None, alpha=1.0, n_pairs=10**6)
    # ridge nodes are dropped; the jump across the ridge is still seen
    assert all(abs(p[0]) > 1e-12 for p in r.witness_pair)
    assert r.sup_quotient == pytest.approx(2 / (2 * g.h))
    right = Region(lambda p: p[..., 0] > 0.01, "x>0")
    assert holder_quotient(u, g, right, alpha=1.0).sup_quotient < 1e-9


def test_boundary_gap_examples(saddle65):
    gap, where = boundary_gap(saddle65)
    assert gap >= 0.8 and abs(abs(where[0]) - 1) < 1e-12 and abs(where[1]) < 0.2
    f = _solve(SQ, BoundaryDatum.affine((1, 1), 0), n=33)
    assert boundary_gap(f)[0] <= 3 * math.sqrt(5) * f.grid.h
    f = _solve(DISK, BoundaryDatum.constant(1.5), n=33)
    assert boundary_gap(f)[0] <= 2 * f.tol


def test_ma_residual_examples():
    g = build_grid(SQ, 33)
    r = ma_residual(g.sample(lambda p: p[..., 0] ** 2 - 1), g)
    assert np.nanmax(np.abs(r)) < 1e-9
    r = ma_residual(g.sample(lambda p: p[..., 0] ** 2 + p[..., 1] ** 2), g)
    assert np.allclose(r[np.isfinite(r)], 4, atol=1e-9)
    # only nodes with a full 3x3 interior block
    assert np.isnan(r[1, 5]) and np.isfinite(r[2, 5])
    assert np.sum(np.isfinite(r)) == 29 * 29


def test_reports_output(tmp_path, saddle65):
    reps = contact_scan(saddle65, BoundaryDatum.saddle())
    write_contact_csv(tmp_path / "c.csv", reps)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "i,j,n_flat,segment_hit" and len(lines) == len(reps) + 1
    h = holder_quotient(saddle65, None, Region.ball((0, 0), 0.5), alpha=0.8)
    write_holder_txt(tmp_path / "h.txt", [h])
    kv = dict(l.split(" = ") for l in (tmp_path / "h.txt").read_text().splitlines() if l)
    assert kv["region"] == "ball((0,0),0.5)" and float(kv["alpha"]) == 0.8
    assert float(kv["sup_quotient"]) == h.sup_quotient
