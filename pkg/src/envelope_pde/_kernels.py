"""Compiled inner loops for the fixed-point sweeps.

Each sweep takes the stencil arrays from :class:`~envelope_pde.stencil.StencilTable`
and returns the sup-norm of the update.  Gauss-Seidel variants update ``u`` in
place; Jacobi variants read ``u`` and write ``out``.
"""

from numba import njit


@njit(cache=True)
def envelope_node(u, i, fi, fl, fv, bi, bl, bv):
    """Smallest zero-second-difference value over directions at node ``i``."""
    best = 1e300
    for d in range(fi.shape[1]):
        j = fi[i, d]
        f = u[j] if j >= 0 else fv[i, d]
        j = bi[i, d]
        b = u[j] if j >= 0 else bv[i, d]
        k = fl[i, d]
        h = bl[i, d]
        c = (h * f + k * b) / (h + k)
        if c < best:
            best = c
    return best


@njit(cache=True)
def sweep_envelope_gs(u, fi, fl, fv, bi, bl, bv, obstacle, use_obstacle):
    diff = 0.0
    for i in range(u.shape[0]):
        new = envelope_node(u, i, fi, fl, fv, bi, bl, bv)
        if use_obstacle and obstacle[i] < new:
            new = obstacle[i]
        dd = abs(new - u[i])
        if dd > diff:
            diff = dd
        u[i] = new
    return diff


@njit(cache=True)
def sweep_envelope_jacobi(u, out, fi, fl, fv, bi, bl, bv, obstacle, use_obstacle):
    diff = 0.0
    for i in range(u.shape[0]):
        new = envelope_node(u, i, fi, fl, fv, bi, bl, bv)
        if use_obstacle and obstacle[i] < new:
            new = obstacle[i]
        dd = abs(new - u[i])
        if dd > diff:
            diff = dd
        out[i] = new
    return diff


@njit(cache=True)
def pucci_node(u, i, fi, fl, fv, bi, bl, bv, perp, gamma, Gamma):
    """Root in the centre value of the discrete Pucci minimal equation.

    For each orthogonal pair the operator is piecewise linear and strictly
    decreasing in the centre value; the root sits between the two
    zero-second-difference values, weighted by Gamma toward the smaller.  The
    node value is the smallest root over pairs.
    """
    best = 1e300
    for d in range(fi.shape[1]):
        e = perp[d]
        if e < d:
            continue
        j = fi[i, d]
        f = u[j] if j >= 0 else fv[i, d]
        j = bi[i, d]
        b = u[j] if j >= 0 else bv[i, d]
        k1 = fl[i, d]
        h1 = bl[i, d]
        c1 = (h1 * f + k1 * b) / (h1 + k1)
        b1 = 2.0 / (h1 * k1)
        j = fi[i, e]
        f = u[j] if j >= 0 else fv[i, e]
        j = bi[i, e]
        b = u[j] if j >= 0 else bv[i, e]
        k2 = fl[i, e]
        h2 = bl[i, e]
        c2 = (h2 * f + k2 * b) / (h2 + k2)
        b2 = 2.0 / (h2 * k2)
        if c2 < c1:
            c1, c2 = c2, c1
            b1, b2 = b2, b1
        r = (Gamma * b1 * c1 + gamma * b2 * c2) / (Gamma * b1 + gamma * b2)
        if r < best:
            best = r
    return best


@njit(cache=True)
def sweep_pucci_gs(u, fi, fl, fv, bi, bl, bv, perp, gamma, Gamma):
    diff = 0.0
    for i in range(u.shape[0]):
        new = pucci_node(u, i, fi, fl, fv, bi, bl, bv, perp, gamma, Gamma)
        dd = abs(new - u[i])
        if dd > diff:
            diff = dd
        u[i] = new
    return diff


@njit(cache=True)
def sweep_pucci_jacobi(u, out, fi, fl, fv, bi, bl, bv, perp, gamma, Gamma):
    diff = 0.0
    for i in range(u.shape[0]):
        new = pucci_node(u, i, fi, fl, fv, bi, bl, bv, perp, gamma, Gamma)
        dd = abs(new - u[i])
        if dd > diff:
            diff = dd
        out[i] = new
    return diff


@njit(cache=True)
def run_sweeps(kind, u, fi, fl, fv, bi, bl, bv, obstacle, use_obstacle, perp,
               gamma, Gamma, jacobi, tol, max_iter, history):
    """Sweep until the update is at most ``tol``; returns the iteration count.

    ``kind`` 0 is the envelope update, 1 the Pucci update.  ``history`` must
    hold ``max_iter`` slots and receives the update norms.
    """
    buf = u.copy()
    it = 0
    while it < max_iter:
        if kind == 0:
            if jacobi:
                diff = sweep_envelope_jacobi(u, buf, fi, fl, fv, bi, bl, bv, obstacle, use_obstacle)
                u[:] = buf
            else:
                diff = sweep_envelope_gs(u, fi, fl, fv, bi, bl, bv, obstacle, use_obstacle)
        else:
            if jacobi:
                diff = sweep_pucci_jacobi(u, buf, fi, fl, fv, bi, bl, bv, perp, gamma, Gamma)
                u[:] = buf
            else:
                diff = sweep_pucci_gs(u, fi, fl, fv, bi, bl, bv, perp, gamma, Gamma)
        history[it] = diff
        it += 1
        if diff <= tol:
            break
    return it
