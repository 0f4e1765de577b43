# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel core.

Same algorithms as :mod:`semiclassical._pycore`, written against C structs
so that the nested (x, s, theta) quadratures run without touching Python
objects.  Every entry point releases the GIL around the numerical work, so
a thread pool in the caller parallelizes independent (y, z) pairs.

Only the closed-form profile kinds (Gaussian, exponential, compact bump,
constant) are supported here; callable profiles go through the pure-Python
core.
"""

from libc.math cimport exp, sqrt, erfc, fabs, cos, floor, M_PI
from libc.stdlib cimport malloc, realloc, free, qsort

import numpy as np

from ._pycore import GK_NODES as _NODES, GK_WK as _WK, GK_WD as _WD

GAUSSIAN, EXPONENTIAL, COMPACT, CONSTANT = 0, 1, 2, 3

cdef double GX[15]
cdef double GW[15]
cdef double GD[15]
for _i in range(15):
    GX[_i] = _NODES[_i]
    GW[_i] = _WK[_i]
    GD[_i] = _WD[_i]

cdef double FOUR_PI = 4.0 * M_PI
cdef double SIXTEEN_PI2 = 16.0 * M_PI * M_PI
cdef double SQRT2 = sqrt(2.0)


# ---------------------------------------------------------------------------
# Profile and tolerances
# ---------------------------------------------------------------------------

cdef struct Prof:
    int kind
    int lam
    double c
    double eps
    double r_cut
    double phimax


cdef struct Tolc:
    double abs_tol
    double rel_tol
    int max_panels
    int theta_points
    int s_points
    int direct


cdef inline double hat(const Prof* p, double r) noexcept nogil:
    cdef double t
    if p.kind == 0:
        return p.c * exp(-0.5 * r * r)
    if p.kind == 1:
        return p.c * exp(-r)
    if p.kind == 2:
        t = 0.25 * r * r
        if t < 1.0:
            return p.c * exp(1.0 - 1.0 / (1.0 - t))
        return 0.0
    return p.c


cdef inline double phi_prof(const Prof* p, double r, double rho) noexcept nogil:
    cdef double e = p.eps
    cdef double hr = hat(p, r / e)
    cdef double hp = hat(p, rho / e)
    cdef double s, e4 = e * e * e * e
    if p.lam == 0:
        return (hr * hr + hp * hp) / e4
    s = hr + p.lam * hp
    return s * s / e4


cdef class Profile:
    """Hat profile plus quantum parameters, mirroring ``_pycore.Profile``."""

    cdef Prof st
    cdef public object fn

    def __init__(self, kind, c, eps, lam, fn=None, r_cut=float("inf"), phimax=None):
        if int(kind) not in (0, 1, 2, 3):
            raise ValueError("compiled core supports only closed-form profile kinds")
        self.st.kind = int(kind)
        self.st.c = float(c)
        self.st.eps = float(eps)
        self.st.lam = int(lam)
        self.st.r_cut = float(r_cut)
        self.st.phimax = abs(float(c)) if phimax is None else float(phimax)
        self.fn = fn

    @property
    def kind(self):
        return self.st.kind

    @property
    def c(self):
        return self.st.c

    @property
    def eps(self):
        return self.st.eps

    @property
    def lam(self):
        return self.st.lam

    @property
    def r_cut(self):
        return self.st.r_cut

    @property
    def phimax(self):
        return self.st.phimax

    def hat(self, r):
        r = np.asarray(r, dtype=float)
        flat = r.ravel()
        out = np.empty_like(flat)
        cdef Py_ssize_t i
        for i in range(flat.shape[0]):
            out[i] = hat(&self.st, flat[i])
        return out.reshape(r.shape)

    def hat1(self, double r):
        return hat(&self.st, r)

    def sq_int(self, double a, double b):
        return sq_int(&self.st, a, b)

    def phi(self, double r, double rho):
        return phi_prof(&self.st, r, rho)


cdef class Tol:
    """Quadrature controls, mirroring ``_pycore.Tol``."""

    cdef Tolc st

    def __init__(self, abs_tol=1e-10, rel_tol=1e-9, max_depth=16,
                 theta_points=8, s_points=8, direct=False):
        self.st.abs_tol = float(abs_tol)
        self.st.rel_tol = float(rel_tol)
        self.st.max_panels = 2 ** min(int(max_depth), 16)
        self.st.theta_points = int(theta_points)
        self.st.s_points = int(s_points)
        self.st.direct = 1 if direct else 0

    @property
    def abs_tol(self):
        return self.st.abs_tol

    @property
    def rel_tol(self):
        return self.st.rel_tol

    @property
    def max_panels(self):
        return self.st.max_panels

    @property
    def direct(self):
        return bool(self.st.direct)


# ---------------------------------------------------------------------------
# Index max-heap keyed by an external error array (ties: smaller index first)
# ---------------------------------------------------------------------------

cdef struct Heap:
    int* idx
    int n
    int cap


cdef inline bint _above(const double* key, int i, int j) noexcept nogil:
    return key[i] > key[j] or (key[i] == key[j] and i < j)


cdef int heap_push(Heap* h, const double* key, int item) noexcept nogil:
    cdef int* tmp
    cdef int pos, parent
    if h.n == h.cap:
        tmp = <int*> realloc(h.idx, 2 * h.cap * sizeof(int))
        if tmp == NULL:
            return -1
        h.idx = tmp
        h.cap *= 2
    pos = h.n
    h.n += 1
    while pos > 0:
        parent = (pos - 1) // 2
        if _above(key, item, h.idx[parent]):
            h.idx[pos] = h.idx[parent]
            pos = parent
        else:
            break
    h.idx[pos] = item
    return 0


cdef int heap_pop(Heap* h, const double* key) noexcept nogil:
    cdef int top = h.idx[0]
    cdef int last, pos, child
    h.n -= 1
    if h.n == 0:
        return top
    last = h.idx[h.n]
    pos = 0
    while True:
        child = 2 * pos + 1
        if child >= h.n:
            break
        if child + 1 < h.n and _above(key, h.idx[child + 1], h.idx[child]):
            child += 1
        if _above(key, h.idx[child], last):
            h.idx[pos] = h.idx[child]
            pos = child
        else:
            break
    h.idx[pos] = last
    return top


# ---------------------------------------------------------------------------
# Scalar adaptive Gauss-Kronrod
# ---------------------------------------------------------------------------

ctypedef void (*vfun)(void* ctx, const double* x, double* fx) noexcept nogil


cdef struct Seg:
    double a
    double b
    double r


cdef int _cmp_seg(const void* u, const void* v) noexcept nogil:
    cdef double da = (<const Seg*> u).a
    cdef double db = (<const Seg*> v).a
    if da < db:
        return -1
    if da > db:
        return 1
    return 0


cdef int _cmp_double(const void* u, const void* v) noexcept nogil:
    cdef double da = (<const double*> u)[0]
    cdef double db = (<const double*> v)[0]
    if da < db:
        return -1
    if da > db:
        return 1
    return 0


cdef inline void gk15(vfun f, void* ctx, double a, double b, double* r, double* e) noexcept nogil:
    cdef double x[15]
    cdef double fx[15]
    cdef double half = 0.5 * (b - a), mid = 0.5 * (a + b)
    cdef double sk = 0.0, sd = 0.0
    cdef int i
    for i in range(15):
        x[i] = mid + half * GX[i]
    f(ctx, x, fx)
    for i in range(15):
        sk += GW[i] * fx[i]
        sd += GD[i] * fx[i]
    r[0] = half * sk
    e[0] = fabs(half * sd)


cdef double adapt(vfun f, void* ctx, const double* edges, int nedges,
                  double abs_tol, double rel_tol, int max_panels) noexcept nogil:
    """Globally adaptive quadrature over consecutive edges (see _pycore.adapt)."""
    cdef int cap = 2 * nedges + 16, n = 0, i, top, m
    cdef double* pa = <double*> malloc(cap * sizeof(double))
    cdef double* pb = <double*> malloc(cap * sizeof(double))
    cdef double* pr = <double*> malloc(cap * sizeof(double))
    cdef double* pe = <double*> malloc(cap * sizeof(double))
    cdef double* tmp
    cdef Heap h
    cdef double total = 0.0, err = 0.0, r1, e1, r2, e2, mid, out
    cdef Seg* segs
    h.cap = cap
    h.n = 0
    h.idx = <int*> malloc(cap * sizeof(int))
    for i in range(nedges - 1):
        if edges[i + 1] > edges[i]:
            pa[n] = edges[i]
            pb[n] = edges[i + 1]
            gk15(f, ctx, pa[n], pb[n], &pr[n], &pe[n])
            total += pr[n]
            err += pe[n]
            heap_push(&h, pe, n)
            n += 1
    if n == 0:
        free(pa); free(pb); free(pr); free(pe); free(h.idx)
        return 0.0
    while err > (abs_tol if abs_tol > rel_tol * fabs(total) else rel_tol * fabs(total)) \
            and h.n < max_panels:
        top = heap_pop(&h, pe)
        mid = 0.5 * (pa[top] + pb[top])
        if not (pa[top] < mid < pb[top]):
            heap_push(&h, pe, top)
            break
        if n + 2 > cap:
            cap *= 2
            tmp = <double*> realloc(pa, cap * sizeof(double)); pa = tmp
            tmp = <double*> realloc(pb, cap * sizeof(double)); pb = tmp
            tmp = <double*> realloc(pr, cap * sizeof(double)); pr = tmp
            tmp = <double*> realloc(pe, cap * sizeof(double)); pe = tmp
        gk15(f, ctx, pa[top], mid, &r1, &e1)
        gk15(f, ctx, mid, pb[top], &r2, &e2)
        total += r1 + r2 - pr[top]
        err += e1 + e2 - pe[top]
        pa[n] = pa[top]; pb[n] = mid; pr[n] = r1; pe[n] = e1
        heap_push(&h, pe, n)
        n += 1
        pa[n] = mid; pb[n] = pb[top]; pr[n] = r2; pe[n] = e2
        heap_push(&h, pe, n)
        n += 1
    m = h.n
    segs = <Seg*> malloc(m * sizeof(Seg))
    for i in range(m):
        top = h.idx[i]
        segs[i].a = pa[top]
        segs[i].b = pb[top]
        segs[i].r = pr[top]
    qsort(segs, m, sizeof(Seg), _cmp_seg)
    out = 0.0
    for i in range(m):
        out += segs[i].r
    free(segs); free(pa); free(pb); free(pr); free(pe); free(h.idx)
    return out


# ---------------------------------------------------------------------------
# Squared-profile integrals
# ---------------------------------------------------------------------------

cdef void _sq_integrand(void* ctx, const double* x, double* fx) noexcept nogil:
    cdef const Prof* p = <const Prof*> ctx
    cdef double h
    cdef int i
    for i in range(15):
        h = hat(p, x[i])
        fx[i] = h * h


cdef double sq_int(const Prof* p, double a, double b) noexcept nogil:
    cdef double c2 = p.c * p.c
    cdef double edges[5]
    cdef double pm
    cdef int i
    if b <= a:
        return 0.0
    if p.kind == 0:
        return c2 * 0.5 * sqrt(M_PI) * (erfc(a) - erfc(b))
    if p.kind == 1:
        return c2 * 0.5 * (exp(-2.0 * a) - exp(-2.0 * b))
    if p.kind == 3:
        return c2 * (b - a)
    if b > 2.0:
        b = 2.0
    if b <= a:
        return 0.0
    for i in range(5):
        edges[i] = a + (b - a) * i / 4.0
    edges[4] = b
    pm = p.phimax if p.phimax > 1e-300 else 1e-300
    return adapt(_sq_integrand, <void*> p, edges, 5, 1e-17 * pm * pm, 1e-13, 4096)


# ---------------------------------------------------------------------------
# The reduced kernel W
# ---------------------------------------------------------------------------

cdef struct ThCtx:
    const Prof* p
    double k
    double a
    double b
    double sab
    double hs
    int mode


cdef void _theta_f(void* ctx, const double* th, double* fx) noexcept nogil:
    cdef ThCtx* c = <ThCtx*> ctx
    cdef double arg, hy
    cdef int i
    for i in range(15):
        arg = c.a + c.b + c.sab * cos(th[i])
        if arg < 0.0:
            arg = 0.0
        hy = hat(c.p, c.k * sqrt(arg))
        if c.mode == 0:
            fx[i] = hy
        else:
            fx[i] = hy * (hy + 2.0 * c.p.lam * c.hs)


cdef int _sorted_unique(double* buf, int n) noexcept nogil:
    cdef int i, m = 0
    qsort(buf, n, sizeof(double), _cmp_double)
    for i in range(n):
        if m == 0 or buf[i] != buf[m - 1]:
            buf[m] = buf[i]
            m += 1
    return m


cdef double theta_integral(const Prof* p, double k, double a, double b, double hs,
                           int mode, double abs_tol, double rel_tol, int n_base,
                           int max_panels) noexcept nogil:
    cdef double ab = a * b, hy, d, w, half_pi = 0.5 * M_PI, val
    cdef ThCtx c
    cdef int nb = n_base // 2, i, ne = 0
    cdef double* edges
    if nb < 1:
        nb = 1
    if ab <= 1e-300:
        hy = hat(p, k * sqrt(a + b))
        if mode == 0:
            return M_PI * hy
        return M_PI * hy * (hy + 2.0 * p.lam * hs)
    d = fabs(sqrt(a) - sqrt(b))
    if k * d >= p.r_cut:
        return 0.0
    edges = <double*> malloc((nb + 1 + 1100) * sizeof(double))
    for i in range(nb + 1):
        edges[ne] = half_pi * i / nb
        ne += 1
    w = 1.0 / (k * sqrt(sqrt(ab)))
    d = 0.25 * w
    while d < half_pi and ne < nb + 1090:
        edges[ne] = M_PI - d
        ne += 1
        d *= 2.0
    edges[ne] = M_PI
    ne += 1
    ne = _sorted_unique(edges, ne)
    c.p = p
    c.k = k
    c.a = a
    c.b = b
    c.sab = 2.0 * sqrt(ab)
    c.hs = hs
    c.mode = mode
    val = adapt(_theta_f, &c, edges, ne, abs_tol, rel_tol, max_panels)
    free(edges)
    return val


cdef struct SCtx:
    const Prof* p
    const Tolc* tol
    double x
    double y
    double z
    double k
    double inner_tol
    int direct


cdef void _s_f(void* ctx, const double* sv, double* fx) noexcept nogil:
    cdef SCtx* c = <SCtx*> ctx
    cdef double s, hs, cc, a, b, inner
    cdef int i
    for i in range(15):
        s = sv[i]
        hs = hat(c.p, c.k * s)
        cc = (c.x - c.y + s * s) * (c.x - c.y + s * s) / (4.0 * s * s)
        a = c.z - cc
        if a < 0.0:
            a = 0.0
        b = c.x - cc
        if b < 0.0:
            b = 0.0
        if c.direct:
            inner = theta_integral(c.p, c.k, a, b, hs, 1, c.inner_tol, 0.1 * c.tol.rel_tol,
                                   c.tol.theta_points, c.tol.max_panels)
            fx[i] = 2.0 * M_PI * hs * hs + 2.0 * inner
        else:
            if hs == 0.0:
                fx[i] = 0.0
                continue
            inner = theta_integral(c.p, c.k, a, b, hs, 0, c.inner_tol, 0.1 * c.tol.rel_tol,
                                   c.tol.theta_points, c.tol.max_panels)
            fx[i] = 2.0 * hs * inner


cdef double cross_or_full(const Prof* p, double x, double y, double z, double slo,
                          double shi, double k, const Tolc* tol, int direct,
                          double budget) noexcept nogil:
    cdef double s_end = shi, length, d, val, pm
    cdef SCtx c
    cdef int nb = tol.s_points, ne = 0, i
    cdef double* edges
    if not direct and p.r_cut / k < shi:
        s_end = p.r_cut / k
    if s_end <= slo:
        return 0.0
    if nb < 1:
        nb = 1
    length = s_end - slo
    pm = p.phimax if p.phimax > 1e-300 else 1e-300
    c.p = p
    c.tol = tol
    c.x = x
    c.y = y
    c.z = z
    c.k = k
    c.direct = direct
    c.inner_tol = 0.1 * budget / (2.0 * pm * (length if length > 1e-300 else 1e-300)
                                  * (3.0 if direct else 1.0))
    edges = <double*> malloc((nb + 1 + 1100) * sizeof(double))
    for i in range(nb + 1):
        edges[ne] = slo + length * i / nb
        ne += 1
    edges[ne - 1] = s_end
    d = 0.25 / k
    while d < length and ne < nb + 1090:
        edges[ne] = slo + d
        ne += 1
        d *= 2.0
    ne = _sorted_unique(edges, ne)
    val = adapt(_s_f, &c, edges, ne, budget, tol.rel_tol, tol.max_panels)
    free(edges)
    return val


cdef double w_value_c(const Prof* p, double x, double y, double z, const Tolc* tol) noexcept nogil:
    cdef double tiny = 1e-12 * (1.0 + y + z)
    cdef int nzero = (x < tiny) + (y < tiny) + (z < tiny)
    cdef double xs, rx, ry, rz, rs, slo, shi, slo2, shi2, e, k, pref, scaled_abs
    cdef double sq, total, budget
    if nzero >= 2:
        return 0.0
    if x < tiny:
        return SIXTEEN_PI2 / sqrt(y * z) * phi_prof(p, sqrt(2 * y), sqrt(2 * z))
    if y < tiny:
        if z > x:
            return SIXTEEN_PI2 / sqrt(x * z) * phi_prof(p, sqrt(2 * x), sqrt(2 * (z - x)))
        return 0.0
    if z < tiny:
        if y > x:
            return SIXTEEN_PI2 / sqrt(x * y) * phi_prof(p, sqrt(2 * (y - x)), sqrt(2 * x))
        return 0.0
    xs = y + z - x
    if xs <= 0.0:
        return 0.0
    rx = sqrt(x)
    ry = sqrt(y)
    rz = sqrt(z)
    rs = sqrt(xs)
    slo = fabs(rx - ry)
    if fabs(rs - rz) > slo:
        slo = fabs(rs - rz)
    shi = rx + ry
    if rs + rz < shi:
        shi = rs + rz
    if slo >= shi:
        return 0.0
    e = p.eps
    k = SQRT2 / e
    pref = FOUR_PI / sqrt(x * y * z) / (e * e * e * e)
    scaled_abs = tol.abs_tol / pref
    slo2 = fabs(rx - rz)
    if fabs(rs - ry) > slo2:
        slo2 = fabs(rs - ry)
    shi2 = rx + rz
    if rs + ry < shi2:
        shi2 = rs + ry
    sq = sq_int(p, k * slo, k * shi)
    if shi2 > slo2:
        sq += sq_int(p, k * slo2, k * shi2)
    total = 2.0 * M_PI * sq / k
    budget = 0.25 * tol.rel_tol * total
    if scaled_abs > budget:
        budget = scaled_abs
    if tol.direct:
        return pref * cross_or_full(p, x, y, z, slo, shi, k, tol, 1, budget)
    if p.lam != 0 and k * fabs(rz - rx) < p.r_cut and k * slo < p.r_cut:
        total += 2.0 * p.lam * cross_or_full(p, x, y, z, slo, shi, k, tol, 0, budget)
    return pref * total


def w_value(Profile p, double x, double y, double z, Tol tol):
    """Reduced kernel W_Phi(x, y, z) for the quantum profile ``p``."""
    cdef double out
    with nogil:
        out = w_value_c(&p.st, x, y, z, &tol.st)
    return out


def w_values(Profile p, double[::1] x, double y, double z, Tol tol):
    """Vector of W(x_i, y, z)."""
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = w_value_c(&p.st, x[i], y, z, &tol.st)
    return out


# ---------------------------------------------------------------------------
# Test functions: piecewise polynomials and the folded B-spline family
# ---------------------------------------------------------------------------

cdef inline double pp_scalar(const double* brk, const double* coef, int nb, int order,
                             double x) noexcept nogil:
    """scipy PPoly evaluation with zero extension; coef[d*(nb-1) + j]."""
    cdef int lo, hi, mid, j, d, m = nb - 1
    cdef double t, acc
    if x < brk[0] or x > brk[nb - 1]:
        return 0.0
    lo = 0
    hi = nb
    while lo < hi:
        mid = (lo + hi) // 2
        if brk[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    j = lo - 1
    if j < 0:
        j = 0
    if j > m - 1:
        j = m - 1
    t = x - brk[j]
    acc = coef[j]
    for d in range(1, order):
        acc = acc * t + coef[d * m + j]
    return acc


cdef inline double interp0(const double* g, const double* v, int n, double x) noexcept nogil:
    cdef int lo, hi, mid
    cdef double t
    if n == 0 or x < g[0] or x > g[n - 1]:
        return 0.0
    if n == 1:
        return v[0]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if g[mid] <= x:
            lo = mid
        else:
            hi = mid
    if g[hi] == g[lo]:
        return v[hi]
    t = (x - g[lo]) / (g[hi] - g[lo])
    return v[lo] + t * (v[hi] - v[lo])


cdef struct Fam:
    int n
    double h
    int nextra
    int size
    const double* ebrk
    const double* ecoef
    const int* boff
    const int* coff
    const int* nbrk
    const int* order


cdef inline void fam_add(const Fam* f, double x, double sign, double* out) noexcept nogil:
    """out[i] += sign * family_i(x) for every family member."""
    cdef double u, fr, b[4], g
    cdef int j, q, ii, e
    if x >= 0.0 and f.n > 0:
        u = x / f.h
        j = <int> floor(u)
        fr = u - j
        b[0] = (1 - fr) * (1 - fr) * (1 - fr) / 6.0
        b[1] = (3 * fr * fr * fr - 6 * fr * fr + 4) / 6.0
        b[2] = (-3 * fr * fr * fr + 3 * fr * fr + 3 * fr + 1) / 6.0
        b[3] = fr * fr * fr / 6.0
        for q in range(4):
            ii = j - 1 + q
            if ii == -1:
                g = b[q]
                out[0] += sign * 2.0 * g
                if f.n > 1:
                    out[1] -= sign * g
            elif 0 <= ii < f.n:
                out[ii] += sign * b[q]
    for e in range(f.nextra):
        out[f.n + e] += sign * pp_scalar(f.ebrk + f.boff[e], f.ecoef + f.coff[e],
                                         f.nbrk[e], f.order[e], x)


# ---------------------------------------------------------------------------
# x-integration (scalar with optional weight, or vector over a family)
# ---------------------------------------------------------------------------

cdef struct XCtx:
    const Prof* p
    const Tolc* tol
    double y
    double z
    double total
    int mode            # 0: single PP test function, 1: family
    int size
    # mode 0
    const double* brk
    const double* coef
    int nb
    int order
    const double* wg
    const double* wv
    int nw
    double factor
    double phi_yz
    # mode 1
    const Fam* fam
    const double* cyz


cdef struct XPan:
    int kind
    double a
    double b
    double t0
    double t1


cdef struct XSort:
    double a
    double t0
    int idx


cdef int _cmp_xsort(const void* u, const void* v) noexcept nogil:
    cdef const XSort* p = <const XSort*> u
    cdef const XSort* q = <const XSort*> v
    if p.a < q.a:
        return -1
    if p.a > q.a:
        return 1
    if p.t0 < q.t0:
        return -1
    if p.t0 > q.t0:
        return 1
    return 0


cdef inline void xpan_nodes(const XPan* pan, double* x, double* jac) noexcept nogil:
    cdef double half = 0.5 * (pan.t1 - pan.t0), mid = 0.5 * (pan.t0 + pan.t1), t
    cdef int i
    for i in range(15):
        t = mid + half * GX[i]
        if pan.kind == 0:
            x[i] = t
            jac[i] = half
        elif pan.kind == 1:
            x[i] = pan.a + (pan.b - pan.a) * t * t
            jac[i] = half * 2.0 * (pan.b - pan.a) * t
        else:
            x[i] = pan.b - (pan.b - pan.a) * t * t
            jac[i] = half * 2.0 * (pan.b - pan.a) * t


cdef inline void node_values(const XCtx* c, double x, double* vals) noexcept nogil:
    """Delta-phi of every component at (x, y, z)."""
    cdef double xs = c.total - x
    cdef int i
    if xs < 0.0:
        xs = 0.0
    if c.mode == 0:
        vals[0] = (pp_scalar(c.brk, c.coef, c.nb, c.order, x)
                   + pp_scalar(c.brk, c.coef, c.nb, c.order, xs) - c.phi_yz)
    else:
        for i in range(c.size):
            vals[i] = -c.cyz[i]
        fam_add(c.fam, x, 1.0, vals)
        fam_add(c.fam, xs, 1.0, vals)


cdef double eval_panel(const XCtx* c, const XPan* pan, double* xo, double* go,
                       double* res, double* vals) noexcept nogil:
    """Kronrod sums of one panel into ``res``; returns the error estimate.

    ``go`` receives Kronrod-weight * Jacobian * W * sqrt(x) (times the
    scalar weight in mode 0) for the final tensor accumulation.
    """
    cdef double jac[15]
    cdef double gd, gk, e, m
    cdef int i, q
    cdef double* errv = vals + c.size
    xpan_nodes(pan, xo, jac)
    for q in range(c.size):
        res[q] = 0.0
        errv[q] = 0.0
    for i in range(15):
        gk = w_value_c(c.p, xo[i], c.y, c.z, c.tol) * sqrt(xo[i])
        if c.mode == 0:
            gk *= c.factor
            if c.nw > 0:
                gk *= interp0(c.wg, c.wv, c.nw, xo[i])
        gd = jac[i] * GD[i] * gk
        gk = jac[i] * GW[i] * gk
        go[i] = gk
        if gk == 0.0 and gd == 0.0:
            continue
        node_values(c, xo[i], vals)
        for q in range(c.size):
            res[q] += gk * vals[q]
            errv[q] += gd * vals[q]
    m = 0.0
    for q in range(c.size):
        e = fabs(errv[q])
        if c.mode == 1:
            e *= 0.5
            res[q] *= 0.5
        if e > m:
            m = e
    return m


cdef int x_edges(double y, double z, const double* knots, int nk, const double* extra,
                 int nex, double k, double** out) noexcept nogil:
    cdef double total = y + z, w, d, v, cc
    cdef int cap = 2 * nk + nex + 4 + 4 * 1100, n = 0, i, j, m
    cdef double* pts = <double*> malloc(cap * sizeof(double))
    cdef double cen[2]
    pts[n] = 0.0; n += 1
    pts[n] = total; n += 1
    if 0.0 < y < total:
        pts[n] = y; n += 1
    if 0.0 < z < total:
        pts[n] = z; n += 1
    for i in range(nex):
        if 0.0 < extra[i] < total:
            pts[n] = extra[i]; n += 1
    for i in range(nk):
        v = knots[i]
        if 0.0 < v < total:
            pts[n] = v; n += 1
        v = total - knots[i]
        if 0.0 < v < total:
            pts[n] = v; n += 1
    cen[0] = y
    cen[1] = z
    for j in range(2):
        cc = cen[j]
        if not (0.0 <= cc <= total):
            continue
        w = 2.0 * sqrt(cc) / k + 1.0 / (k * k)
        d = 0.25 * w
        while d < total and n + 2 < cap:
            v = cc - d
            if 0.0 < v < total:
                pts[n] = v; n += 1
            v = cc + d
            if 0.0 < v < total:
                pts[n] = v; n += 1
            d *= 2.0
    n = _sorted_unique(pts, n)
    m = 1
    for i in range(1, n):
        if pts[i] - pts[m - 1] > 1e-13 * (total if total > 1.0 else 1.0):
            pts[m] = pts[i]
            m += 1
    pts[m - 1] = total
    out[0] = pts
    return m


cdef int x_quad(const XCtx* c, const double* edges, int ne, double* result,
                double* tmat, int ntm, double h) noexcept nogil:
    """Vector-adaptive x-quadrature over [0, y+z].

    Writes the (ordered) sum into ``result``.  When ``tmat`` is not NULL it
    also accumulates tmat[q*ntm + l] += g * hat_l(x) * dphi_q over all final
    nodes (family mode only).  Returns 0 on success, -1 on allocation failure.
    """
    cdef int size = c.size, cap, npan = 0, i, q, top, last = ne - 2, kid, m
    cdef int j0, l, lsel
    cdef XPan* pans
    cdef double* px
    cdef double* pg
    cdef double* pr
    cdef double* pe
    cdef double* vals
    cdef double res_abs, err = 0.0, scale, mid, u, fr, wt, mx, width_min
    cdef double* res
    cdef Heap hp
    cdef XSort* order
    cdef XPan child
    cdef void* tmp
    cap = 2 * ne + 16
    pans = <XPan*> malloc(cap * sizeof(XPan))
    px = <double*> malloc(cap * 15 * sizeof(double))
    pg = <double*> malloc(cap * 15 * sizeof(double))
    pr = <double*> malloc(cap * size * sizeof(double))
    pe = <double*> malloc(cap * sizeof(double))
    vals = <double*> malloc(2 * size * sizeof(double))
    res = <double*> malloc(size * sizeof(double))
    hp.cap = cap
    hp.n = 0
    hp.idx = <int*> malloc(cap * sizeof(int))
    if pans == NULL or px == NULL or pg == NULL or pr == NULL or pe == NULL \
            or vals == NULL or res == NULL or hp.idx == NULL:
        free(pans); free(px); free(pg); free(pr); free(pe); free(vals); free(res); free(hp.idx)
        return -1
    for q in range(size):
        res[q] = 0.0
    for i in range(ne - 1):
        if i == 0 and i == last:
            mid = 0.5 * (edges[0] + edges[1])
            pans[npan].kind = 1; pans[npan].a = edges[0]; pans[npan].b = mid
            pans[npan].t0 = 0.0; pans[npan].t1 = 1.0
            npan += 1
            pans[npan].kind = 2; pans[npan].a = mid; pans[npan].b = edges[1]
            pans[npan].t0 = 0.0; pans[npan].t1 = 1.0
            npan += 1
        elif i == 0:
            pans[npan].kind = 1; pans[npan].a = edges[i]; pans[npan].b = edges[i + 1]
            pans[npan].t0 = 0.0; pans[npan].t1 = 1.0
            npan += 1
        elif i == last:
            pans[npan].kind = 2; pans[npan].a = edges[i]; pans[npan].b = edges[i + 1]
            pans[npan].t0 = 0.0; pans[npan].t1 = 1.0
            npan += 1
        else:
            pans[npan].kind = 0; pans[npan].a = edges[i]; pans[npan].b = edges[i + 1]
            pans[npan].t0 = edges[i]; pans[npan].t1 = edges[i + 1]
            npan += 1
    for i in range(npan):
        pe[i] = eval_panel(c, &pans[i], px + 15 * i, pg + 15 * i, pr + size * i, vals)
        err += pe[i]
        for q in range(size):
            res[q] += pr[size * i + q]
        heap_push(&hp, pe, i)
    width_min = 1e-15 * (c.total if c.total > 1.0 else 1.0)
    while hp.n < c.tol.max_panels:
        mx = 0.0
        for q in range(size):
            if fabs(res[q]) > mx:
                mx = fabs(res[q])
        scale = c.tol.rel_tol * mx
        if c.tol.abs_tol > scale:
            scale = c.tol.abs_tol
        if not (err > scale):
            break
        top = heap_pop(&hp, pe)
        if pans[top].t1 - pans[top].t0 < width_min:
            heap_push(&hp, pe, top)
            break
        if npan + 2 > cap:
            cap *= 2
            tmp = realloc(pans, cap * sizeof(XPan))
            if tmp == NULL:
                break
            pans = <XPan*> tmp
            tmp = realloc(px, cap * 15 * sizeof(double))
            if tmp == NULL:
                break
            px = <double*> tmp
            tmp = realloc(pg, cap * 15 * sizeof(double))
            if tmp == NULL:
                break
            pg = <double*> tmp
            tmp = realloc(pr, cap * size * sizeof(double))
            if tmp == NULL:
                break
            pr = <double*> tmp
            tmp = realloc(pe, cap * sizeof(double))
            if tmp == NULL:
                break
            pe = <double*> tmp
        for q in range(size):
            res[q] -= pr[size * top + q]
        err -= pe[top]
        mid = 0.5 * (pans[top].t0 + pans[top].t1)
        for kid in range(2):
            child = pans[top]
            if kid == 0:
                child.t1 = mid
            else:
                child.t0 = mid
            if child.kind == 0:
                child.a = child.t0
                child.b = child.t1
            pans[npan] = child
            pe[npan] = eval_panel(c, &pans[npan], px + 15 * npan, pg + 15 * npan,
                                  pr + size * npan, vals)
            err += pe[npan]
            for q in range(size):
                res[q] += pr[size * npan + q]
            heap_push(&hp, pe, npan)
            npan += 1
    m = hp.n
    order = <XSort*> malloc(m * sizeof(XSort))
    for i in range(m):
        top = hp.idx[i]
        order[i].idx = top
        order[i].t0 = pans[top].t0
        # sqrt panels keep a, b fixed; sort them by their left image point
        order[i].a = pans[top].a
    qsort(order, m, sizeof(XSort), _cmp_xsort)
    for q in range(size):
        result[q] = 0.0
    for i in range(m):
        top = order[i].idx
        for q in range(size):
            result[q] += pr[size * top + q]
        if tmat != NULL:
            for kid in range(15):
                if pg[15 * top + kid] == 0.0:
                    continue
                u = px[15 * top + kid] / h
                if u > ntm - 1:
                    continue
                j0 = <int> floor(u)
                fr = u - j0
                node_values(c, px[15 * top + kid], vals)
                for lsel in range(2):
                    l = j0 + lsel
                    wt = (1.0 - fr) if lsel == 0 else fr
                    if l < 0 or l >= ntm or wt == 0.0:
                        continue
                    wt *= pg[15 * top + kid]
                    for q in range(size):
                        tmat[q * ntm + l] += wt * vals[q]
    free(order); free(pans); free(px); free(pg); free(pr); free(pe); free(vals); free(res)
    free(hp.idx)
    return 0


def _pp_arrays(breaks, coeffs):
    b = np.ascontiguousarray(breaks, dtype=float)
    c = np.ascontiguousarray(np.asarray(coeffs, dtype=float).reshape(np.shape(coeffs)[0], -1))
    return b, c


def x_integral(Profile p, breaks, coeffs, double y, double z, Tol tol,
               wgrid=None, wvals=None, double factor=0.5):
    """factor * int_0^{y+z} W(x,y,z) dphi(x,y,z) sqrt(x) w(x) dx (see _pycore)."""
    cdef double total = y + z
    b_arr, c_arr = _pp_arrays(breaks, coeffs)
    cdef double[::1] bv = b_arr
    cdef double[::1] cv = c_arr.ravel()
    cdef int nb = b_arr.shape[0], order = c_arr.shape[0]
    cdef XCtx c
    cdef double out = 0.0, py, pz, k
    cdef double* edges = NULL
    cdef int ne, rc = 0
    cdef double[::1] wgv
    cdef double[::1] wvv
    if total <= 0.0:
        return 0.0
    py = pp_scalar(&bv[0], &cv[0], nb, order, y)
    pz = pp_scalar(&bv[0], &cv[0], nb, order, z)
    if py == 0.0 and pz == 0.0 and (bv[0] >= total or bv[nb - 1] <= 0.0):
        return 0.0
    if wgrid is None:
        wg_arr = np.zeros(1)
        wv_arr = np.zeros(1)
        c.nw = 0
    else:
        wg_arr = np.ascontiguousarray(wgrid, dtype=float)
        wv_arr = np.ascontiguousarray(wvals, dtype=float)
        c.nw = wg_arr.shape[0]
    wgv = wg_arr
    wvv = wv_arr
    k = SQRT2 / p.st.eps
    c.p = &p.st
    c.tol = &tol.st
    c.y = y
    c.z = z
    c.total = total
    c.mode = 0
    c.size = 1
    c.brk = &bv[0]
    c.coef = &cv[0]
    c.nb = nb
    c.order = order
    c.wg = &wgv[0]
    c.wv = &wvv[0]
    c.factor = factor
    c.phi_yz = py + pz
    c.fam = NULL
    c.cyz = NULL
    with nogil:
        ne = x_edges(y, z, &bv[0], nb, &wgv[0], c.nw, k, &edges)
        rc = x_quad(&c, edges, ne, &out, NULL, 0, 1.0)
        free(edges)
    if rc != 0:
        raise MemoryError("x-quadrature workspace allocation failed")
    return out


def assemble_pair(Profile p, fam, double y, double z, Tol tol, bint want_cubic, xatoms=()):
    """Tensor slices for one (y, z) pair (see ``_pycore.assemble_pair``)."""
    cdef int n = int(fam.n), nextra = len(fam.extras), size = n + nextra
    cdef double h = float(fam.h), total = y + z, k, w, xa
    cdef Fam f
    cdef XCtx c
    cdef int e, ne, rc = 0, q, ai
    cdef double* edges = NULL
    cdef double* tptr = NULL
    blist, clist, boff, coff, nbrk, order = [], [], [], [], [], []
    bpos, cpos = 0, 0
    for bb, cc in fam.extras:
        b_arr, c_arr = _pp_arrays(bb, cc)
        blist.append(b_arr)
        clist.append(c_arr.ravel())
        boff.append(bpos)
        coff.append(cpos)
        bpos += b_arr.shape[0]
        cpos += c_arr.size
        nbrk.append(b_arr.shape[0])
        order.append(c_arr.shape[0])
    eb = np.ascontiguousarray(np.concatenate(blist) if blist else np.zeros(1))
    ec = np.ascontiguousarray(np.concatenate(clist) if clist else np.zeros(1))
    boff_a = np.asarray(boff or [0], dtype=np.intc)
    coff_a = np.asarray(coff or [0], dtype=np.intc)
    nbrk_a = np.asarray(nbrk or [0], dtype=np.intc)
    order_a = np.asarray(order or [0], dtype=np.intc)
    cdef double[::1] ebv = eb
    cdef double[::1] ecv = ec
    cdef int[::1] bov = boff_a
    cdef int[::1] cov = coff_a
    cdef int[::1] nbv = nbrk_a
    cdef int[::1] orv = order_a
    f.n = n
    f.h = h
    f.nextra = nextra
    f.size = size
    f.ebrk = &ebv[0]
    f.ecoef = &ecv[0]
    f.boff = &bov[0]
    f.coff = &cov[0]
    f.nbrk = &nbv[0]
    f.order = &orv[0]

    jvec = np.zeros(size)
    tmat = np.zeros((size, n)) if want_cubic else None
    xat = np.ascontiguousarray(xatoms, dtype=float).ravel()
    amat = np.zeros((size, xat.shape[0]))
    cyz = np.zeros(max(size, 1))
    dph = np.zeros(max(size, 1))
    cdef double[::1] cyzv = cyz
    cdef double[::1] dphv = dph
    cdef double[::1] jv = jvec
    cdef double[:, ::1] tv
    cdef double[::1] xav = xat if xat.shape[0] else np.zeros(1)
    cdef double[:, ::1] av = amat
    if size == 0:
        return jvec, tmat, amat
    with nogil:
        fam_add(&f, y, 1.0, &cyzv[0])
        fam_add(&f, z, 1.0, &cyzv[0])
    for ai in range(xat.shape[0]):
        xa = xav[ai]
        with nogil:
            w = w_value_c(&p.st, xa, y, z, &tol.st)
        if w != 0.0:
            with nogil:
                for q in range(size):
                    dphv[q] = -cyzv[q]
                fam_add(&f, xa, 1.0, &dphv[0])
                fam_add(&f, total - xa if total > xa else 0.0, 1.0, &dphv[0])
                for q in range(size):
                    av[q, ai] = w * dphv[q]
    if total <= 0.0:
        return jvec, tmat, amat
    knots_a = np.ascontiguousarray(fam.knots(), dtype=float)
    if knots_a.shape[0] == 0:
        knots_a = np.zeros(1)
    grid_a = np.ascontiguousarray(np.arange(n) * h, dtype=float)
    if grid_a.shape[0] == 0:
        grid_a = np.zeros(1)
    cdef double[::1] kv = knots_a
    cdef double[::1] gv = grid_a
    cdef int nk = knots_a.shape[0], ng = n
    if want_cubic:
        tv = tmat
        tptr = &tv[0, 0] if n > 0 else NULL
    k = SQRT2 / p.st.eps
    c.p = &p.st
    c.tol = &tol.st
    c.y = y
    c.z = z
    c.total = total
    c.mode = 1
    c.size = size
    c.brk = NULL
    c.coef = NULL
    c.nb = 0
    c.order = 0
    c.wg = NULL
    c.wv = NULL
    c.nw = 0
    c.factor = 1.0
    c.phi_yz = 0.0
    c.fam = &f
    c.cyz = &cyzv[0]
    with nogil:
        ne = x_edges(y, z, &kv[0], nk, &gv[0], ng, k, &edges)
        rc = x_quad(&c, edges, ne, &jv[0], tptr, n, h)
        free(edges)
    if rc != 0:
        raise MemoryError("x-quadrature workspace allocation failed")
    return jvec, tmat, amat
