"""Interaction profiles and the scalar constants derived from them.

A :class:`HatPotential` is the Fourier-side profile ``r -> phi_hat(r)`` of
the interaction potential.  The quantum collision kernels only ever see
``phi_hat``; this module computes the constants that the convergence theory
is phrased in:

* the diffusion coefficient ``M = 2 pi int_0^inf r^3 phi_hat(r)^2 dr``
  (the normalization that makes the grazing limit produce the Landau
  operator with unit coefficient),
* the linear bound ``A = sup r |phi_hat(r)|``,
* the tail and moment constants ``A*(eps)`` and ``A*_alpha(eps)`` whose
  vanishing as ``eps -> 0`` drives the limit,
* the angular remainder ``R_eps(z)``,
* and the physical-space potential ``phi(rho)`` recovered by a radial sine
  transform.

One-dimensional integrals use :func:`scipy.integrate.quad` on doubling
segments; infinite ranges are truncated once a segment contributes nothing
at double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .errors import (
    CannotNormalizeError,
    ConfigError,
    DomainError,
    InsufficientDecayError,
    NonIntegrableProfileError,
    UnboundedProfileError,
)

__all__ = [
    "HatPotential",
    "gaussian",
    "exponential",
    "compact_bump",
    "constant",
    "from_function",
    "get_profile",
    "PROFILE_NAMES",
    "diffusion_coefficient",
    "normalize",
    "sup_linear_bound",
    "tail_constant",
    "moment_constant",
    "remainder",
    "reconstruct_potential",
]

# Integer codes understood by the kernel cores.
_CORE_KIND = {"gaussian": 0, "exp": 1, "compact-bump": 2, "constant": 3}
# Radius beyond which the closed-form profile is below 1e-19 of its maximum.
_R_CUT = {"gaussian": 9.5, "exp": 45.0, "compact-bump": 2.0, "constant": math.inf}

_QUAD_REL = 1e-12


@dataclass(frozen=True)
class HatPotential:
    """Fourier-side interaction profile ``phi_hat``.

    ``eval`` must accept numpy arrays.  ``kind``/``scale`` carry optional
    closed-form metadata (``phi_hat = scale * base_kind(r)``) that lets the
    compiled kernel core evaluate the profile without calling back into
    Python; profiles built from arbitrary functions leave ``kind`` unset.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    r_monotone_from: float | None = None
    label: str = "custom"
    kind: str | None = None
    scale: float = 1.0
    normalized: bool = False

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.asarray(self.eval(r), dtype=float) * np.ones_like(r)

    def scaled(self, factor: float) -> "HatPotential":
        base = self.eval
        return replace(self, eval=lambda r: factor * np.asarray(base(r), dtype=float),
                       scale=self.scale * factor)

    @property
    def core_kind(self) -> int:
        """Integer profile code for the kernel cores (9 = Python callable)."""
        return _CORE_KIND.get(self.kind, 9)

    @property
    def r_cut(self) -> float:
        return _R_CUT.get(self.kind, math.inf)

    @property
    def phimax(self) -> float:
        """max |phi_hat|, used to scale absolute quadrature tolerances."""
        if self.kind in _CORE_KIND:
            return abs(self.scale)
        r = np.concatenate([[0.0], np.logspace(-6, 3, 2000)])
        return float(np.max(np.abs(self(r))))

    def samples(self) -> np.ndarray:
        """Profile values on a fixed radius grid (used for content hashing)."""
        r = np.concatenate([[0.0], np.logspace(-3, 2, 64)])
        return self(r)


def gaussian(c: float = 1.0) -> HatPotential:
    """``phi_hat(r) = c exp(-r^2/2)``."""
    return HatPotential(lambda r: c * np.exp(-0.5 * np.asarray(r) ** 2),
                        r_monotone_from=1.0, label="gaussian", kind="gaussian", scale=c)


def exponential(c: float = 1.0) -> HatPotential:
    """``phi_hat(r) = c exp(-r)``."""
    return HatPotential(lambda r: c * np.exp(-np.asarray(r)),
                        r_monotone_from=1.0, label="exp", kind="exp", scale=c)


def _bump_base(r):
    r = np.asarray(r, dtype=float)
    t = 0.25 * r * r
    out = np.zeros_like(r)
    inside = t < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside]))
    return out


def compact_bump(c: float = 1.0) -> HatPotential:
    """Smooth profile supported in ``[0, 2)``: ``c exp(1 - 1/(1 - r^2/4))``."""
    return HatPotential(lambda r: c * _bump_base(r), r_monotone_from=2.0,
                        label="compact-bump", kind="compact-bump", scale=c)


def constant(c: float = 1.0) -> HatPotential:
    """``phi_hat = c``; not integrable, but the kernel oracle uses it."""
    return HatPotential(lambda r: np.full_like(np.asarray(r, dtype=float), c),
                        label="constant", kind="constant", scale=c)


def from_function(fn, r_monotone_from=None, label="custom") -> HatPotential:
    """Wrap an arbitrary vectorized profile."""
    return HatPotential(fn, r_monotone_from=r_monotone_from, label=label)


_REGISTRY = {"gaussian": gaussian, "compact-bump": compact_bump, "exp": exponential}
PROFILE_NAMES = tuple(_REGISTRY)


def get_profile(name: str, normalized: bool = False, scale: float = 1.0) -> HatPotential:
    """Look up a built-in profile by its CLI name."""
    try:
        p = _REGISTRY[name](scale)
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; expected one of {PROFILE_NAMES}") from None
    return normalize(p) if normalized else p


# ---------------------------------------------------------------------------
# Radial integrals
# ---------------------------------------------------------------------------

def _quad(f, a, b):
    val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=_QUAD_REL, limit=400)
    return val, err


def _r3sq_integral(p: HatPotential, lo: float, hi: float = math.inf, alpha: float = 0.0,
                   anchor: float | None = None):
    """``int_lo^hi (r/anchor)^alpha r^3 phi_hat(r)^2 dr`` on doubling segments.

    Returns ``(value, error)``.  For ``hi = inf`` segments are added until one
    contributes less than 1e-16 of the running total; a profile whose
    segments never shrink is reported as non-integrable.
    """
    if hi <= lo:
        return 0.0, 0.0
    scale = 1.0 if anchor is None else 1.0 / anchor

    def f(r):
        v = float(p(r))
        w = r ** 3 * v * v
        if alpha:
            w *= (r * scale) ** alpha
        return w

    total = 0.0
    err = 0.0
    a = lo
    width = max(1.0, lo)
    for _ in range(80):
        b = min(a + width, hi)
        v, e = _quad(f, a, b)
        total += v
        err += e
        if b >= hi:
            return total, err
        if v <= 1e-16 * abs(total) or (total == 0.0 and b >= 64.0):
            return total, err
        a = b
        width *= 2.0
    raise NonIntegrableProfileError(
        f"r^3 phi_hat^2 is not integrable: tail segments do not decay ({p.label})")


def diffusion_coefficient(p: HatPotential, return_error: bool = False):
    """``M = 2 pi int_0^inf r^3 phi_hat(r)^2 dr``.

    With ``return_error=True`` returns ``(M, relative_error_estimate)``.
    """
    val, err = _r3sq_integral(p, 0.0)
    m = 2.0 * math.pi * val
    if return_error:
        return m, (err / val if val else 0.0)
    return m


def normalize(p: HatPotential) -> HatPotential:
    """Rescale ``phi_hat`` so that its diffusion coefficient equals 1."""
    try:
        m = diffusion_coefficient(p)
    except NonIntegrableProfileError as exc:
        raise CannotNormalizeError(str(exc)) from exc
    if not math.isfinite(m) or m <= 0.0:
        raise CannotNormalizeError(f"diffusion coefficient is {m}")
    q = p.scaled(1.0 / math.sqrt(m))
    return replace(q, normalized=True)


def sup_linear_bound(p: HatPotential) -> float:
    """``A = sup_{r >= 0} r |phi_hat(r)|`` by log-scan plus golden section."""
    r = np.logspace(-6, 6, 1201)
    g = r * np.abs(p(r))
    i = int(np.argmax(g))
    if g[i] == 0.0:
        return 0.0
    if i == len(r) - 1:
        raise UnboundedProfileError(
            f"r|phi_hat(r)| is still growing at r = {r[-1]:.3g} ({p.label})")
    lo = r[max(i - 1, 0)]
    hi = r[i + 1]

    def neg(t):
        return -abs(t * float(p(t)))

    if i == 0:
        res = optimize.minimize_scalar(neg, bounds=(0.0, hi), method="bounded",
                                       options={"xatol": 1e-14})
    else:
        res = optimize.minimize_scalar(neg, bracket=(lo, r[i], hi), method="golden",
                                       tol=1e-12)
    return max(float(-res.fun), float(g[i]))


def _scan_sup(m, lo=1e-4, hi=1e4, n=128):
    """Supremum of a continuous function of rho > 0: log scan plus refinement."""
    rho = np.logspace(math.log10(lo), math.log10(hi), n)
    vals = np.array([m(x) for x in rho])
    i = int(np.argmax(vals))
    best = float(vals[i])
    if best <= 0.0:
        return max(best, 0.0)
    a = rho[max(i - 1, 0)]
    b = rho[min(i + 1, n - 1)]
    res = optimize.minimize_scalar(lambda t: -m(t), bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-12 * b})
    return max(best, float(-res.fun))


def tail_constant(p: HatPotential, eps: float) -> float:
    """``A*(eps) = sup_rho (rho^(1/2) ^ 1) int_{rho/eps}^inf r^3 phi_hat^2 dr``."""
    if eps <= 0.0:
        raise DomainError("eps must be positive")

    def m(rho):
        return min(math.sqrt(rho), 1.0) * _r3sq_integral(p, rho / eps)[0]

    return _scan_sup(m)


def moment_constant(p: HatPotential, eps: float, alpha: float) -> float:
    """``A*_alpha(eps) = sup_rho (rho^(1/2) ^ 1) int_0^{rho/eps} (eps r/rho)^alpha r^3 phi_hat^2``."""
    if eps <= 0.0 or alpha <= 0.0:
        raise DomainError("eps and alpha must be positive")

    def m(rho):
        a = rho / eps
        return min(math.sqrt(rho), 1.0) * _r3sq_integral(p, 0.0, a, alpha, anchor=a)[0]

    return _scan_sup(m)


def remainder(p: HatPotential, eps: float, z: float) -> float:
    """Angular remainder ``R_eps(z)``.

    ``1/(2 pi z^3) - int_0^{pi/2} z cos^3 t sin t eps^-4 phi_hat(z cos t / eps)^2 dt``;
    the theta integral is split where ``z cos t / eps`` crosses 1, 2, 4, ...
    so the quadrature resolves the profile even when it is concentrated
    near ``t = pi/2``.
    """
    if z <= 0.0:
        raise DomainError("z must be positive")
    if eps <= 0.0:
        raise DomainError("eps must be positive")
    e4 = eps ** 4

    def f(t):
        c = math.cos(t)
        v = float(p(z * c / eps))
        return z * c ** 3 * math.sin(t) * v * v / e4

    pts = [0.0]
    rk = z / eps
    while rk > 0.5 ** 20:
        pts.append(math.acos(min(1.0, rk * eps / z)))
        rk /= 2.0
    pts.append(0.5 * math.pi)
    pts = sorted(set(pts))
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        total += _quad(f, a, b)[0]
    return 1.0 / (2.0 * math.pi * z ** 3) - total


def reconstruct_potential(p: HatPotential, rho: float, tol: float = 1e-10,
                          return_error: bool = False):
    """Physical-space potential ``phi(rho) = (2 pi^2 rho)^-1 int_0^inf r phi_hat sin(rho r) dr``.

    The range is cut at ``R`` (beyond ``r_monotone_from``) once the
    second-mean-value bound ``2 R |phi_hat(R)| / rho`` on the remaining
    oscillatory tail, divided by ``2 pi^2 rho``, is below ``tol``.
    """
    if rho <= 0.0:
        raise DomainError("rho must be positive")
    if p.r_monotone_from is None:
        raise DomainError("reconstruction needs r_monotone_from (monotone r*phi_hat tail)")
    norm = 2.0 * math.pi ** 2 * rho
    period = 2.0 * math.pi / rho
    big_r = max(float(p.r_monotone_from), period)
    while True:
        bound = 2.0 * abs(big_r * float(p(big_r))) / rho / norm
        if bound < tol:
            break
        big_r *= 1.5
        if big_r > 1e7:
            raise InsufficientDecayError(
                f"tail bound {bound:.3g} above tolerance {tol:.3g} at R = {big_r:.3g}")
    val, qerr = integrate.quad(lambda r: r * float(p(r)), 0.0, big_r, weight="sin",
                               wvar=rho, epsabs=0.01 * tol * norm, epsrel=1e-12,
                               limit=500)
    value = val / norm
    if return_error:
        return value, bound + qerr / norm
    return value
