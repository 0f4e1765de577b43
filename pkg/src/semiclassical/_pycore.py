"""Pure-Python kernel core.

This module is the reference implementation of the hot loops: the reduced
collision kernel W, the x-integrals that turn it into the weak-form
functionals, and the per-pair tensor assembly used by the Galerkin solvers.
The compiled extension ``_ccore`` implements the same algorithms line for
line; this module is selected at import time when the extension is missing
and is also the comparison target of ``benchmarks/bench_core.py``.

All integrals use globally adaptive 15-point Gauss-Kronrod quadrature: every
panel carries its own error estimate and the panel with the largest error
is bisected until the summed error meets ``max(abs_tol, rel_tol*|I|)``.

Profiles are described by a small integer ``kind`` plus a scale ``c``:

=========  ===========================================
kind       hat profile r -> phi_hat(r)
=========  ===========================================
0          c * exp(-r**2 / 2)
1          c * exp(-r)
2          c * exp(1 - 1/(1 - r**2/4)) for r < 2, else 0
3          c (constant)
9          arbitrary Python callable (this module only)
=========  ===========================================
"""

from __future__ import annotations

import heapq
import math

import numpy as np

GAUSSIAN, EXPONENTIAL, COMPACT, CONSTANT, CALLABLE = 0, 1, 2, 3, 9

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# Nodes on [-1, 1] in increasing order, with Kronrod weights and the
# difference (Kronrod - Gauss) used for the error estimate.
GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_wg_full = np.zeros(15)
for _i, _w in zip((1, 3, 5), _WG[:3]):
    _wg_full[_i] = _w
    _wg_full[14 - _i] = _w
_wg_full[7] = _WG[3]
GK_WD = GK_WK - _wg_full

FOUR_PI = 4.0 * math.pi
SIXTEEN_PI2 = 16.0 * math.pi ** 2


def gk15(f, a, b):
    """One Gauss-Kronrod panel of a vectorized integrand on [a, b]."""
    half = 0.5 * (b - a)
    x = 0.5 * (a + b) + half * GK_NODES
    fx = f(x)
    return half * float(np.dot(GK_WK, fx)), abs(half * float(np.dot(GK_WD, fx)))


def adapt(f, edges, abs_tol, rel_tol, max_panels):
    """Globally adaptive quadrature of ``f`` over consecutive ``edges``.

    Returns ``(value, error_estimate)``.  The result is summed in left-to-right
    panel order so that it does not depend on the refinement history.
    """
    heap = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            r, e = gk15(f, a, b)
            heap.append((-e, a, b, r))
    if not heap:
        return 0.0, 0.0
    heapq.heapify(heap)
    total = sum(item[3] for item in heap)
    err = sum(-item[0] for item in heap)
    while err > max(abs_tol, rel_tol * abs(total)) and len(heap) < max_panels:
        ne, a, b, r = heapq.heappop(heap)
        m = 0.5 * (a + b)
        if not (a < m < b):
            heapq.heappush(heap, (ne, a, b, r))
            break
        r1, e1 = gk15(f, a, m)
        r2, e2 = gk15(f, m, b)
        heapq.heappush(heap, (-e1, a, m, r1))
        heapq.heappush(heap, (-e2, m, b, r2))
        total += r1 + r2 - r
        err += e1 + e2 + ne
    panels = sorted(heap, key=lambda item: item[1])
    return sum(p[3] for p in panels), sum(-p[0] for p in panels)


class Profile:
    """Hat profile together with the quantum parameters (lambda, eps).

    ``r_cut`` is a radius beyond which the profile is below 1e-19 of its
    maximum; it is used only to skip provably negligible cross terms.
    """

    def __init__(self, kind, c, eps, lam, fn=None, r_cut=math.inf, phimax=None):
        self.kind = int(kind)
        self.c = float(c)
        self.eps = float(eps)
        self.lam = int(lam)
        self.fn = fn
        self.r_cut = float(r_cut)
        if phimax is None:
            phimax = abs(self.c)
        self.phimax = float(phimax)

    def hat(self, r):
        r = np.asarray(r, dtype=float)
        c = self.c
        if self.kind == GAUSSIAN:
            return c * np.exp(-0.5 * r * r)
        if self.kind == EXPONENTIAL:
            return c * np.exp(-r)
        if self.kind == COMPACT:
            t = 0.25 * r * r
            out = np.zeros_like(r)
            inside = t < 1.0
            out[inside] = c * np.exp(1.0 - 1.0 / (1.0 - t[inside]))
            return out
        if self.kind == CONSTANT:
            return np.full_like(r, c)
        return np.asarray(self.fn(r), dtype=float) * np.ones_like(r)

    def hat1(self, r):
        return float(self.hat(np.array([r]))[0])

    def sq_int(self, a, b):
        """Integral of hat(t)**2 over [a, b], 0 <= a <= b."""
        if b <= a:
            return 0.0
        c2 = self.c * self.c
        if self.kind == GAUSSIAN:
            return c2 * 0.5 * math.sqrt(math.pi) * (math.erfc(a) - math.erfc(b))
        if self.kind == EXPONENTIAL:
            return c2 * 0.5 * (math.exp(-2.0 * a) - math.exp(-2.0 * b))
        if self.kind == CONSTANT:
            return c2 * (b - a)
        if self.kind == COMPACT:
            b = min(b, 2.0)
            if b <= a:
                return 0.0
        hi = min(b, a + 64.0) if self.kind == CALLABLE and math.isinf(b) else b
        edges = np.linspace(a, hi, 5)
        val, _ = adapt(lambda t: self.hat(t) ** 2, edges,
                       1e-17 * max(self.phimax, 1e-300) ** 2, 1e-13, 4096)
        return val

    def phi(self, r, rho):
        """The collision profile Phi(r, rho) of the quantum kernel."""
        e = self.eps
        hr = self.hat1(r / e)
        hp = self.hat1(rho / e)
        if self.lam == 0:
            return (hr * hr + hp * hp) / e ** 4
        s = hr + self.lam * hp
        return s * s / e ** 4


class Tol:
    def __init__(self, abs_tol=1e-10, rel_tol=1e-9, max_depth=16,
                 theta_points=8, s_points=8, direct=False):
        self.abs_tol = float(abs_tol)
        self.rel_tol = float(rel_tol)
        self.max_panels = 2 ** min(int(max_depth), 16)
        self.theta_points = int(theta_points)
        self.s_points = int(s_points)
        self.direct = bool(direct)


def y_star(x, y, z, s, theta):
    if s <= 0.0:
        return 0.0
    c = (x - y + s * s) ** 2 / (4.0 * s * s)
    a = max(z - c, 0.0)
    b = max(x - c, 0.0)
    return math.sqrt(max(a + b + 2.0 * math.sqrt(a * b) * math.cos(theta), 0.0))


def _theta_edges(k, ab, n_base):
    """Panel edges on [0, pi] graded toward theta = pi at the Y_* peak scale."""
    edges = list(np.linspace(0.0, 0.5 * math.pi, max(n_base // 2, 1) + 1))
    w = 1.0 / (k * math.sqrt(math.sqrt(ab)))
    tail = []
    d = 0.25 * w
    while d < 0.5 * math.pi:
        tail.append(math.pi - d)
        d *= 2.0
    edges.extend(sorted(tail))
    edges.append(math.pi)
    return edges


def _graded_edges(lo, hi, start, width, n_base):
    """Edges on [lo, hi]: uniform base panels plus geometric grading away from
    ``start`` (one of the endpoints) with initial panel ``width``."""
    edges = set(np.linspace(lo, hi, max(n_base, 1) + 1).tolist())
    d = 0.25 * width
    while d < hi - lo:
        edges.add(lo + d if start == lo else hi - d)
        d *= 2.0
    return sorted(edges)


def _theta_integral(p, k, a, b, hs, mode, abs_tol, rel_tol, n_base, max_panels):
    """Integral over theta in [0, pi] of the Y_*-dependent profile factor.

    mode 0: hat(kY); mode 1: hat(kY) * (hat(kY) + 2*lam*hs).
    """
    ab = a * b
    if ab <= 1e-300:
        hy = p.hat1(k * math.sqrt(a + b))
        return math.pi * (hy if mode == 0 else hy * (hy + 2.0 * p.lam * hs))
    d = abs(math.sqrt(a) - math.sqrt(b))
    if k * d >= p.r_cut:
        return 0.0
    sab = 2.0 * math.sqrt(ab)

    def f(th):
        hy = p.hat(k * np.sqrt(np.maximum(a + b + sab * np.cos(th), 0.0)))
        return hy if mode == 0 else hy * (hy + 2.0 * p.lam * hs)

    val, _ = adapt(f, _theta_edges(k, ab, n_base), abs_tol, rel_tol, max_panels)
    return val


def _cross_or_full(p, x, y, z, slo, shi, k, tol, direct, budget):
    """Numerical (s, theta) integral.

    direct=False: the cross term  int ds hat(ks) int_0^{2pi} hat(kY) dtheta.
    direct=True:  the whole bracket int ds int_0^{2pi} [Phi-profile] dtheta
                  (without the eps^-4 prefactor).
    """
    s_end = shi if direct else min(shi, p.r_cut / k)
    if s_end <= slo:
        return 0.0
    length = s_end - slo
    inner_tol = 0.1 * budget / (2.0 * max(p.phimax, 1e-300) * max(length, 1e-300)
                                * (3.0 if direct else 1.0))
    lam = p.lam

    def g(svec):
        out = np.empty_like(svec)
        for idx, s in enumerate(svec):
            hs = p.hat1(k * s)
            cc = (x - y + s * s) ** 2 / (4.0 * s * s)
            a = max(z - cc, 0.0)
            b = max(x - cc, 0.0)
            if direct:
                inner = _theta_integral(p, k, a, b, hs, 1, inner_tol, 0.1 * tol.rel_tol,
                                        tol.theta_points, tol.max_panels)
                out[idx] = 2.0 * math.pi * hs * hs + 2.0 * inner
            else:
                if hs == 0.0:
                    out[idx] = 0.0
                    continue
                inner = _theta_integral(p, k, a, b, hs, 0, inner_tol, 0.1 * tol.rel_tol,
                                        tol.theta_points, tol.max_panels)
                out[idx] = 2.0 * hs * inner
        return out

    edges = _graded_edges(slo, s_end, slo, 1.0 / k, tol.s_points)
    val, _ = adapt(g, edges, budget, tol.rel_tol, tol.max_panels)
    return val


def w_value(p, x, y, z, tol):
    """Reduced kernel W_Phi(x, y, z) for the quantum profile ``p``."""
    tiny = 1e-12 * (1.0 + y + z)
    nzero = (x < tiny) + (y < tiny) + (z < tiny)
    if nzero >= 2:
        return 0.0
    if x < tiny:
        return SIXTEEN_PI2 / math.sqrt(y * z) * p.phi(math.sqrt(2 * y), math.sqrt(2 * z))
    if y < tiny:
        if z > x:
            return SIXTEEN_PI2 / math.sqrt(x * z) * p.phi(math.sqrt(2 * x),
                                                           math.sqrt(2 * (z - x)))
        return 0.0
    if z < tiny:
        if y > x:
            return SIXTEEN_PI2 / math.sqrt(x * y) * p.phi(math.sqrt(2 * (y - x)),
                                                           math.sqrt(2 * x))
        return 0.0
    xs = y + z - x
    if xs <= 0.0:
        return 0.0
    rx, ry, rz, rs = math.sqrt(x), math.sqrt(y), math.sqrt(z), math.sqrt(xs)
    slo = max(abs(rx - ry), abs(rs - rz))
    shi = min(rx + ry, rs + rz)
    if slo >= shi:
        return 0.0
    e = p.eps
    k = math.sqrt(2.0) / e
    pref = FOUR_PI / math.sqrt(x * y * z) / e ** 4
    scaled_abs = tol.abs_tol / pref
    slo2 = max(abs(rx - rz), abs(rs - ry))
    shi2 = min(rx + rz, rs + ry)
    sq = p.sq_int(k * slo, k * shi)
    if shi2 > slo2:
        sq += p.sq_int(k * slo2, k * shi2)
    total = 2.0 * math.pi * sq / k
    if tol.direct:
        # The closed-form squared terms only set the error budget here.
        budget = max(scaled_abs, 0.25 * tol.rel_tol * total)
        return pref * _cross_or_full(p, x, y, z, slo, shi, k, tol, True, budget)
    if p.lam != 0 and k * abs(rz - rx) < p.r_cut and k * slo < p.r_cut:
        budget = max(scaled_abs, 0.25 * tol.rel_tol * total)
        total += 2.0 * p.lam * _cross_or_full(p, x, y, z, slo, shi, k, tol, False, budget)
    return pref * total


# ---------------------------------------------------------------------------
# Test functions in piecewise-polynomial form
# ---------------------------------------------------------------------------

def pp_eval(breaks, coeffs, x):
    """Evaluate a piecewise polynomial (scipy PPoly layout) with zero extension."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x >= breaks[0]) & (x <= breaks[-1])
    if not np.any(inside):
        return out
    xi = x[inside]
    j = np.clip(np.searchsorted(breaks, xi, side="right") - 1, 0, len(breaks) - 2)
    t = xi - breaks[j]
    acc = coeffs[0, j].copy()
    for d in range(1, coeffs.shape[0]):
        acc = acc * t + coeffs[d, j]
    out[inside] = acc
    return out


def bspline_eval(x, h, n):
    """Values of the folded cubic B-spline family at points ``x``.

    Returns ``(idx, val)`` of shape (len(x), 6): for each point up to six
    (index, value) pairs; unused slots carry index -1 and value 0.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u_all = x / h
    j = np.floor(u_all).astype(np.int64)
    u = u_all - j
    b = np.stack([(1 - u) ** 3 / 6.0,
                  (3 * u ** 3 - 6 * u ** 2 + 4) / 6.0,
                  (-3 * u ** 3 + 3 * u ** 2 + 3 * u + 1) / 6.0,
                  u ** 3 / 6.0], axis=1)
    idx = np.stack([j - 1, j, j + 1, j + 2], axis=1)
    out_i = np.full((len(x), 6), -1, dtype=np.int64)
    out_v = np.zeros((len(x), 6))
    out_i[:, :4] = idx
    out_v[:, :4] = b
    # Fold the ghost spline B_{-1}: phi_0 += 2 B_{-1}, phi_1 -= B_{-1}.
    ghost = idx == -1
    rows, cols = np.nonzero(ghost)
    for r, cidx in zip(rows, cols):
        g = out_v[r, cidx]
        out_i[r, cidx] = -1
        out_v[r, cidx] = 0.0
        out_i[r, 4], out_v[r, 4] = 0, 2.0 * g
        out_i[r, 5], out_v[r, 5] = 1, -g
    bad = (out_i < 0) | (out_i >= n) | (x[:, None] < 0)
    out_i[bad] = -1
    out_v[bad] = 0.0
    return out_i, out_v


class Family:
    """Folded cubic B-splines on a uniform grid plus optional extra PP functions."""

    def __init__(self, n, h, extras=()):
        self.n = int(n)
        self.h = float(h)
        self.extras = [(np.asarray(b, float), np.asarray(c, float)) for b, c in extras]
        self.size = self.n + len(self.extras)

    def dense(self, x):
        """Matrix (len(x), size) of all family values."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros((len(x), self.size))
        if self.n:
            idx, val = bspline_eval(x, self.h, self.n)
            rows = np.repeat(np.arange(len(x)), idx.shape[1])
            flat_i = idx.ravel()
            ok = flat_i >= 0
            np.add.at(out, (rows[ok], flat_i[ok]), val.ravel()[ok])
        for e, (b, c) in enumerate(self.extras):
            out[:, self.n + e] = pp_eval(b, c, x)
        return out

    def knots(self):
        pts = []
        if self.n:
            pts.extend((np.arange(self.n + 2) * self.h).tolist())
        for b, _ in self.extras:
            pts.extend(b.tolist())
        return pts


# ---------------------------------------------------------------------------
# x-integration
# ---------------------------------------------------------------------------

def _x_edges(y, z, knots, k, extra_pts, n_base):
    """Sub-interval edges on [0, y+z] with grading around x = y and x = z.

    ``knots`` are break points of the test functions (mirrored through
    x -> y+z-x because dphi also samples x_*); ``extra_pts`` are break points
    of the x-weight only.
    """
    total = y + z
    pts = {0.0, total}
    for v in [y, z] + list(extra_pts):
        if 0.0 < v < total:
            pts.add(v)
    for v in knots:
        for m in (v, total - v):
            if 0.0 < m < total:
                pts.add(m)
    base = sorted(pts)
    grade = set()
    for c in (y, z):
        if not (0.0 <= c <= total):
            continue
        w = 2.0 * math.sqrt(c) / k + 1.0 / (k * k)
        d = 0.25 * w
        while d < total:
            for v in (c - d, c + d):
                if 0.0 < v < total:
                    grade.add(v)
            d *= 2.0
    edges = sorted(set(base) | grade)
    cleaned = [edges[0]]
    for v in edges[1:]:
        if v - cleaned[-1] > 1e-13 * max(total, 1.0):
            cleaned.append(v)
    if cleaned[-1] != total:
        cleaned[-1] = total
    if n_base > 1 and len(cleaned) < n_base:
        cleaned = sorted(set(cleaned) | set(np.linspace(0.0, total, n_base + 1).tolist()))
    return cleaned


class _Panel:
    __slots__ = ("kind", "a", "b", "t0", "t1")

    def __init__(self, kind, a, b, t0, t1):
        self.kind, self.a, self.b, self.t0, self.t1 = kind, a, b, t0, t1

    def nodes(self):
        """x-nodes and Kronrod/difference weights including the Jacobian."""
        half = 0.5 * (self.t1 - self.t0)
        t = 0.5 * (self.t0 + self.t1) + half * GK_NODES
        if self.kind == 0:
            x = t
            jac = np.full(15, half)
        elif self.kind == 1:
            x = self.a + (self.b - self.a) * t * t
            jac = half * 2.0 * (self.b - self.a) * t
        else:
            x = self.b - (self.b - self.a) * t * t
            jac = half * 2.0 * (self.b - self.a) * t
        return x, jac * GK_WK, jac * GK_WD

    def split(self):
        m = 0.5 * (self.t0 + self.t1)
        return (_Panel(self.kind, self.a, self.b, self.t0, m),
                _Panel(self.kind, self.a, self.b, m, self.t1))

    def width(self):
        return self.t1 - self.t0


def _initial_panels(edges):
    panels = []
    last = len(edges) - 2
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        if i == 0 and i == last:
            m = 0.5 * (a + b)
            panels.append(_Panel(1, a, m, 0.0, 1.0))
            panels.append(_Panel(2, m, b, 0.0, 1.0))
        elif i == 0:
            panels.append(_Panel(1, a, b, 0.0, 1.0))
        elif i == last:
            panels.append(_Panel(2, a, b, 0.0, 1.0))
        else:
            panels.append(_Panel(0, a, b, a, b))
    return panels


def _weight_values(x, wgrid, wvals):
    if wgrid is None:
        return np.ones_like(x)
    out = np.interp(x, wgrid, wvals, left=0.0, right=0.0)
    return out


def x_integral(p, breaks, coeffs, y, z, tol, wgrid=None, wvals=None, factor=0.5):
    """factor * int_0^{y+z} W(x,y,z) dphi(x,y,z) sqrt(x) w(x) dx.

    ``w`` is the piecewise-linear function through (wgrid, wvals) with zero
    extension, or 1 when ``wgrid`` is None.  With the defaults this is the
    quadratic weak-form functional J[phi](y, z).
    """
    total = y + z
    if total <= 0.0:
        return 0.0
    lo, hi = breaks[0], breaks[-1]
    phi_y = float(pp_eval(breaks, coeffs, np.array([y]))[0])
    phi_z = float(pp_eval(breaks, coeffs, np.array([z]))[0])
    if phi_y == 0.0 and phi_z == 0.0 and (lo >= total or hi <= 0.0):
        return 0.0
    k = math.sqrt(2.0) / p.eps
    knots = list(breaks)
    extra = [] if wgrid is None else list(wgrid)
    edges = _x_edges(y, z, knots, k, extra, 0)

    def integrand(x):
        w = np.array([w_value(p, xi, y, z, tol) for xi in x])
        xs = np.maximum(total - x, 0.0)
        dphi = (pp_eval(breaks, coeffs, x) + pp_eval(breaks, coeffs, xs) - phi_y - phi_z)
        return factor * w * dphi * np.sqrt(x) * _weight_values(x, wgrid, wvals)

    panels = _initial_panels(edges)
    heap = []
    for i, pan in enumerate(panels):
        x, wk, wd = pan.nodes()
        fx = integrand(x)
        heap.append((-abs(float(np.dot(wd, fx))), i, pan, float(np.dot(wk, fx))))
    heapq.heapify(heap)
    counter = len(heap)
    res = sum(h[3] for h in heap)
    err = sum(-h[0] for h in heap)
    while err > max(tol.abs_tol, tol.rel_tol * abs(res)) and len(heap) < tol.max_panels:
        ne, _, pan, r = heapq.heappop(heap)
        if pan.width() < 1e-15 * max(total, 1.0):
            heapq.heappush(heap, (ne, _, pan, r))
            break
        res -= r
        err += ne
        for child in pan.split():
            x, wk, wd = child.nodes()
            fx = integrand(x)
            rc, ec = float(np.dot(wk, fx)), abs(float(np.dot(wd, fx)))
            heapq.heappush(heap, (-ec, counter, child, rc))
            counter += 1
            res += rc
            err += ec
    ordered = sorted(heap, key=lambda h: (h[2].a, h[2].t0))
    return sum(h[3] for h in ordered)


def assemble_pair(p, fam, y, z, tol, want_cubic, xatoms=()):
    """Tensor slices for one (y, z) pair.

    Returns ``(jvec, tmat, amat)``:

    * ``jvec[i]   = 1/2 int W dphi_i sqrt(x) dx``          (quadratic tensor)
    * ``tmat[i,l] = int W dphi_i hat_l(x) sqrt(x) dx``     (cubic, density in x)
    * ``amat[i,a] = W(a, y, z) dphi_i(a, y, z)``           (cubic, atom in x)

    where ``hat_l`` are the piecewise-linear hats on the family's grid.
    """
    size = fam.size
    n = fam.n
    h = fam.h
    jvec = np.zeros(size)
    tmat = np.zeros((size, n)) if want_cubic else None
    amat = np.zeros((size, len(xatoms)))
    total = y + z
    cyz = fam.dense(np.array([y, z])).sum(axis=0)
    for a_idx, xa in enumerate(xatoms):
        w = w_value(p, xa, y, z, tol)
        if w != 0.0:
            dph = fam.dense(np.array([xa, max(total - xa, 0.0)])).sum(axis=0) - cyz
            amat[:, a_idx] = w * dph
    if total <= 0.0:
        return jvec, tmat, amat
    k = math.sqrt(2.0) / p.eps
    knots = fam.knots()
    grid_pts = (np.arange(n) * h).tolist()
    edges = _x_edges(y, z, knots, k, grid_pts, 0)

    def evaluate(pan):
        x, wk, wd = pan.nodes()
        wv = np.array([w_value(p, xi, y, z, tol) for xi in x]) * np.sqrt(x)
        vals = fam.dense(x) + fam.dense(np.maximum(total - x, 0.0)) - cyz
        gk = 0.5 * (wk * wv) @ vals
        err = float(np.max(np.abs(0.5 * (wd * wv) @ vals))) if size else 0.0
        return x, wk * wv, vals, gk, err

    panels = _initial_panels(edges)
    heap = []
    store = {}
    counter = 0
    res = np.zeros(size)
    err = 0.0
    for pan in panels:
        x, g, vals, gk, e = evaluate(pan)
        heap.append((-e, counter, pan))
        store[counter] = (x, g, vals, gk)
        res += gk
        err += e
        counter += 1
    heapq.heapify(heap)

    def scale():
        return max(tol.abs_tol, tol.rel_tol * float(np.max(np.abs(res))) if size else 0.0)

    while err > scale() and len(heap) < tol.max_panels:
        ne, key, pan = heapq.heappop(heap)
        if pan.width() < 1e-15 * max(total, 1.0):
            heapq.heappush(heap, (ne, key, pan))
            break
        res -= store[key][3]
        err += ne
        del store[key]
        for child in pan.split():
            x, g, vals, gk, e = evaluate(child)
            heapq.heappush(heap, (-e, counter, child))
            store[counter] = (x, g, vals, gk)
            res += gk
            err += e
            counter += 1
    ordered = sorted(heap, key=lambda item: (item[2].a, item[2].t0))
    for _, key, _ in ordered:
        x, g, vals, _ = store[key]
        jvec += 0.5 * g @ vals
        if want_cubic:
            u = x / h
            j0 = np.floor(u).astype(np.int64)
            frac = u - j0
            inside = u <= n - 1
            for jj, wt in ((j0, 1.0 - frac), (j0 + 1, frac)):
                ok = (jj >= 0) & (jj < n) & inside
                if np.any(ok):
                    contrib = (g[ok] * wt[ok])[:, None] * vals[ok]
                    np.add.at(tmat.T, jj[ok], contrib)
    return jvec, tmat, amat
