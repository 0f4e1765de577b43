"""Independent reference values for the kernel machinery.

Nothing here calls the kernel core.  The values come from closed forms for
double sphere integrals and from the min-identity for a constant profile.
A Monte-Carlo sampler of ``S^2 x S^2`` checks the closed forms, and a
velocity-space quadrature route gives an independent value of ``J``.
``oracle_suite`` runs all of them against the library and returns a
pass/fail table.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, SingularConfigurationError

__all__ = [
    "SphereMCConfig",
    "OracleRow",
    "sphere_inv_alpha",
    "sphere_inv_alpha_weighted",
    "mc_sphere_integral",
    "w_constant_profile_oracle",
    "lemma42_bound_margin",
    "j_sphere_route",
    "oracle_suite",
]

PI2 = math.pi ** 2
_BLOCK = 1 << 16


@dataclass(frozen=True)
class SphereMCConfig:
    samples: int = 1_000_000
    seed: int = 20240611

    def __post_init__(self):
        if int(self.samples) < 10_000:
            raise DomainError("Monte-Carlo needs at least 1e4 samples")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must be an unsigned 64-bit integer")


def _check_alpha(alpha):
    if not -1.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (-1, 1)")


def _f1(y, z, alpha):
    sy, sz = math.sqrt(y), math.sqrt(z)
    a1 = 1.0 + alpha
    num = (sy + sz) ** a1 - abs(sy - sz) ** a1
    return 4.0 * PI2 * num / (2.0 ** (0.5 * a1) * a1 * math.sqrt(y * z) * abs(y - z) ** a1)


def _f2(y, z, alpha):
    sy, sz = math.sqrt(y), math.sqrt(z)
    d = abs(sy - sz)
    den = 2.0 ** (0.5 * (3.0 + alpha)) * (1.0 - alpha * alpha)
    first = ((sy + sz) ** (3.0 - alpha) - d ** (3.0 - alpha)) / (den * (3.0 - alpha) * (y * z) ** 1.5)
    second = ((sy + sz) ** (1.0 - alpha) + d ** (1.0 - alpha)) / (den * y * z)
    return 16.0 * PI2 * (first - second)


def sphere_inv_alpha(y: float, z: float, alpha: float) -> float:
    """Closed form of the double sphere integral of ``|v - v*|^(-3-alpha)``.

    Here ``v = sqrt(2y) w`` and ``v* = sqrt(2z) w*`` with ``w, w*`` on the
    unit sphere.  The integral diverges on the diagonal ``y = z`` for every
    alpha in (-1, 1): near ``w = w*`` the integrand behaves like
    ``|w - w*|^(-3-alpha)`` on a two-dimensional set.
    """
    _check_alpha(alpha)
    if y <= 0 or z <= 0:
        raise DomainError("y and z must be positive")
    if y == z:
        raise SingularConfigurationError("the integral diverges for y = z")
    if alpha == 0.0:
        return 4.0 * PI2 * math.sqrt(2.0) / (math.sqrt(max(y, z)) * abs(y - z))
    return _f1(y, z, alpha)


def sphere_inv_alpha_weighted(y: float, z: float, alpha: float) -> float:
    """Closed form of the double sphere integral of ``(1 - (w.w*)^2)/|v - v*|^(3+alpha)``."""
    _check_alpha(alpha)
    if y <= 0 or z <= 0:
        raise DomainError("y and z must be positive")
    if alpha == 0.0:
        return 8.0 * PI2 * math.sqrt(2.0) / (3.0 * max(y, z) ** 1.5)
    return _f2(y, z, alpha)


def _unit_vectors(rng, n):
    c = 2.0 * rng.random(n) - 1.0          # inverse CDF of cos(theta)
    ph = 2.0 * math.pi * rng.random(n)
    s = np.sqrt(np.maximum(1.0 - c * c, 0.0))
    return np.stack([s * np.cos(ph), s * np.sin(ph), c], axis=1)


def _mc_block(y, z, alpha, weighted, seed, block, n):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))
    w = _unit_vectors(rng, n)
    ws = _unit_vectors(rng, n)
    d = math.sqrt(2.0 * y) * w - math.sqrt(2.0 * z) * ws
    r = np.sqrt(np.einsum("ij,ij->i", d, d))
    with np.errstate(divide="ignore"):
        g = r ** (-3.0 - alpha)
    if weighted:
        cos = np.einsum("ij,ij->i", w, ws)
        g = g * (1.0 - cos * cos)
    g *= 16.0 * PI2
    return math.fsum(g), math.fsum(g * g)


def mc_sphere_integral(y: float, z: float, alpha: float, weighted: bool = False,
                       cfg: SphereMCConfig | None = None, threads: int = 1):
    """Monte-Carlo estimate ``(mean, standard error)`` of the sphere integrals.

    Samples are drawn in fixed blocks of 65536 with one counter-based
    generator per block, so the estimate is independent of ``threads``.
    """
    _check_alpha(alpha)
    if y <= 0 or z <= 0:
        raise DomainError("y and z must be positive")
    cfg = cfg or SphereMCConfig()
    total = int(cfg.samples)
    sizes = [min(_BLOCK, total - b * _BLOCK) for b in range(-(-total // _BLOCK))]

    def run(b):
        return _mc_block(y, z, alpha, weighted, int(cfg.seed), b, sizes[b])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / total
    var = max(s2 / total - mean * mean, 0.0) * total / (total - 1)
    return mean, math.sqrt(var / total)


def w_constant_profile_oracle(x: float, y: float, z: float) -> float:
    """``W`` for ``Phi = 1``: ``16 pi^2 min(sqrt x, sqrt x*, sqrt y, sqrt z)/sqrt(xyz)``."""
    if min(x, y, z) <= 0:
        raise DomainError("the oracle needs x, y, z > 0")
    xs = y + z - x
    if xs < 0:
        return 0.0
    m = min(math.sqrt(x), math.sqrt(xs), math.sqrt(y), math.sqrt(z))
    return 16.0 * PI2 * m / math.sqrt(x * y * z)


def lemma42_bound_margin(alpha: float, y: float, z: float) -> float:
    """Ratio of the two sides of the sphere-integral bound at ``(y, z)``.

    The left side is the double sphere integral of
    ``((y - z)^2 + yz (1 - (w.w*)^2)) / |v - v*|^(3 + alpha)``, assembled from
    the closed forms.  The ratio divides it by
    ``(y^((1-alpha)/2) + z^((1-alpha)/2)) / (1 - alpha)``.  A bounded ratio
    over a grid is the numerical content of the bound.
    """
    if not 0.0 <= alpha < 1.0:
        raise DomainError("alpha must lie in [0, 1)")
    if y < 0 or z < 0 or (y == 0 and z == 0):
        raise DomainError("need y, z >= 0, not both zero")
    if y == 0 or z == 0:
        # One velocity vanishes: |v - v*| = |v| and the weight term drops.
        u = max(y, z)
        lhs = u * u * 16.0 * PI2 * (2.0 * u) ** (-0.5 * (3.0 + alpha))
    else:
        lhs = y * z * sphere_inv_alpha_weighted(y, z, alpha)
        if y != z:
            lhs += (y - z) ** 2 * sphere_inv_alpha(y, z, alpha)
    rhs = (y ** (0.5 * (1.0 - alpha)) + z ** (0.5 * (1.0 - alpha))) / (1.0 - alpha)
    return lhs / rhs


# ---------------------------------------------------------------------------
# Velocity-space route to J
# ---------------------------------------------------------------------------

def j_sphere_route(hat, lam: int, eps: float, phi, y: float, z: float,
                   theta_panels: int = 48, psi_points: int = 96,
                   rel_tol: float = 1e-9) -> float:
    """``J[phi](y, z)`` from the three-sphere representation.

    Fix ``v = sqrt(2y) e3`` by isotropy.  Let ``u`` be the cosine between
    ``v`` and ``v*``.  Parametrize the collision direction by its angle
    ``theta`` to ``v - v*`` and an azimuth ``psi``.  Then

        J = 2 sqrt2 pi int_{-1}^{1} du int_0^{pi/2} dtheta
            |z| cos(theta) sin(theta) Phi(|z| cos theta, |z| sin theta)
            int_0^{2 pi} dphi(x(u, theta, psi), y, z) dpsi

    where ``z = v - v*``.  This shares no code with the kernel core.  The
    psi integral uses the periodic trapezoid rule, theta uses composite
    Gauss-Legendre and u uses adaptive quadrature.
    """
    if y <= 0 or z <= 0:
        raise DomainError("y and z must be positive")
    gx, gw = np.polynomial.legendre.leggauss(10)
    edges = np.linspace(0.0, 0.5 * math.pi, theta_panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    th = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    thw = (half[:, None] * gw[None, :]).ravel()
    psi = 2.0 * math.pi * np.arange(psi_points) / psi_points
    cth, sth = np.cos(th), np.sin(th)
    v = math.sqrt(2.0 * y) * np.array([0.0, 0.0, 1.0])
    py, pz = float(phi(y)), float(phi(z))

    def profile(r, rho):
        a = hat(r / eps)
        b = hat(rho / eps)
        if lam == 0:
            return (a * a + b * b) / eps ** 4
        return (a + lam * b) ** 2 / eps ** 4

    def inner(u):
        su = math.sqrt(max(1.0 - u * u, 0.0))
        vs = math.sqrt(2.0 * z) * np.array([su, 0.0, u])
        zz = v - vs
        nz = float(np.linalg.norm(zz))
        if nz == 0.0:
            return 0.0
        e0 = zz / nz
        # orthonormal frame around e0
        trial = np.array([1.0, 0.0, 0.0]) if abs(e0[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = trial - e0 * float(trial @ e0)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(e0, e1)
        va, vb, vc = float(v @ e0), float(v @ e1), float(v @ e2)
        # v . w for w = cos(th) e0 + sin(th)(cos(psi) e1 + sin(psi) e2)
        vw = cth[:, None] * va + sth[:, None] * (np.cos(psi)[None, :] * vb
                                                + np.sin(psi)[None, :] * vc)
        t = nz * cth[:, None]
        x = 0.5 * (float(v @ v) - 2.0 * t * vw + t * t)
        x = np.maximum(x, 0.0)
        xs = np.maximum(y + z - x, 0.0)
        dphi = phi(x) + phi(xs) - py - pz
        ring = dphi.mean(axis=1) * 2.0 * math.pi
        weight = nz * cth * sth * profile(nz * cth, nz * sth)
        return float(np.dot(thw, weight * ring))

    val, _ = integrate.quad(inner, -1.0, 1.0, epsabs=0.0, epsrel=rel_tol, limit=400)
    return 2.0 * math.sqrt(2.0) * math.pi * val


# ---------------------------------------------------------------------------
# Oracle suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleRow:
    name: str
    value: float
    reference: float
    error: float
    tolerance: float
    passed: bool


def _row(name, value, reference, tol, mode="rel"):
    err = abs(value - reference)
    if mode == "rel":
        err = err / abs(reference) if reference != 0 else err
    return OracleRow(name, float(value), float(reference), float(err), float(tol), bool(err <= tol))


def oracle_suite(samples: int = 1_000_000, seed: int = 20240611, configs: int = 12,
                 threads: int = 1) -> list[OracleRow]:
    """Run every oracle against the library and return one row per check.

    MC rows report the distance in standard errors and use a threshold of 3.
    """
    from . import kernels, potential

    rows: list[OracleRow] = []
    grid = (0.1, 0.5, 1.0, 2.0, 4.0)
    const = kernels.QuantumProfile(potential.constant(1.0), 0, 1.0)
    # constant profile with lambda=0 doubles the squares; divide by 2
    worst = 0.0
    for x in grid:
        for y in grid:
            for z in grid:
                if x > y + z:
                    continue
                w = 0.5 * kernels.w_kernel(const, x, y, z)
                ref = w_constant_profile_oracle(x, y, z)
                scale = ref if ref > 0 else 16.0 * PI2
                worst = max(worst, abs(w - ref) / scale)
    rows.append(OracleRow("w_min_identity_grid", worst, 0.0, worst, 1e-6, worst <= 1e-6))
    rows.append(_row("w_boundary_x0", 0.5 * kernels.w_kernel(const, 0.0, 1.0, 1.0), 16 * PI2, 1e-10))

    for y, z in ((1.0, 4.0), (0.3, 2.5)):
        rows.append(_row(f"F3_simple_form_{y:g}_{z:g}", _f1(y, z, 0.0),
                         sphere_inv_alpha(y, z, 0.0), 1e-12))
        rows.append(_row(f"F4_simple_form_{y:g}_{z:g}", _f2(y, z, 0.0),
                         sphere_inv_alpha_weighted(y, z, 0.0), 1e-12))

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xC0FFEE])))
    for k in range(configs):
        y = float(rng.uniform(0.2, 5.0))
        z = float(rng.uniform(0.2, 5.0))
        if abs(y - z) < 0.5:
            z = y + 0.5 + float(rng.uniform(0.0, 2.0))
        alpha = float(rng.uniform(-0.9, 0.9))
        weighted = bool(k % 2)
        ref = sphere_inv_alpha_weighted(y, z, alpha) if weighted else sphere_inv_alpha(y, z, alpha)
        est, se = mc_sphere_integral(y, z, alpha, weighted, SphereMCConfig(samples, seed + k),
                                     threads=threads)
        nsig = abs(est - ref) / se
        label = "F2" if weighted else "F1"
        rows.append(OracleRow(f"mc_{label}_y{y:.3f}_z{z:.3f}_a{alpha:+.3f}", est, ref, nsig, 3.0,
                              nsig <= 3.0))

    hat = potential.normalize(potential.gaussian())
    bump = kernels.TestFunction.bump(1.5, 1.0)
    for y, z in ((1.0, 2.0), (0.7, 1.3)):
        q = kernels.QuantumProfile(hat, -1, 0.5)
        rows.append(_row(f"j_sphere_route_{y:g}_{z:g}", kernels.j_functional(q, bump, y, z),
                         j_sphere_route(hat, -1, 0.5, bump, y, z), 1e-6))

    quad = kernels.TestFunction.cutoff_polynomial([0.0, 0.0, 1.0], 3.0, 1.0)
    rows.append(_row("landau_x2_at_1_0", kernels.landau_kernel(quad, 1.0, 0.0), -8 * math.pi, 1e-12))

    margins = [lemma42_bound_margin(a, y, z) for a in (0.0, 0.5)
               for y in np.geomspace(0.1, 10, 9) for z in np.geomspace(0.1, 10, 9)]
    mmax = float(max(margins))
    rows.append(OracleRow("lemma42_margin_max", mmax, 0.0, mmax, 1e3,
                          bool(math.isfinite(mmax) and mmax < 1e3)))

    rows.append(_row("diffusion_coefficient_gaussian", potential.diffusion_coefficient(hat), 1.0, 1e-8))
    rows.append(_row("sup_linear_bound_gaussian", potential.sup_linear_bound(hat),
                     math.exp(-0.5) / math.sqrt(math.pi), 1e-6))
    base = potential.gaussian()
    for rho in (0.5, 1.0, 2.0, 4.0):
        rows.append(_row(f"reconstruct_rho{rho:g}", potential.reconstruct_potential(base, rho),
                         (2 * math.pi) ** -1.5 * math.exp(-0.5 * rho * rho), 1e-6, mode="abs"))
    return rows
