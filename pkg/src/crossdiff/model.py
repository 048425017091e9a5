"""Model constants and initial-data families.

The dynamics live on all of space in principle; here everything is truncated
to a finite axis-aligned box chosen so that the initial mass outside its
central 80% is below 1e-6.  Runs monitor the boundary mass and abort if it
ever exceeds 1e-4, so the truncation never influences results beyond
tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, DomainError

MASS_TOL = 1e-8          # quadrature tolerance on total initial mass
CENTRAL_MASS_TOL = 1e-6  # tolerated initial mass outside the central 80%
BOUNDARY_MASS_LIMIT = 1e-4  # running monitor threshold; runs abort beyond it

_TABLE_NODES = 32768  # nodes of the 1d quadrature/CDF table


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, lo[i] < hi[i] per axis."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must have equal length")
        if not all(l < h for l, h in zip(self.lo, self.hi)):
            raise ValueError("box must have positive extent on every axis")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def shrunk(self, fraction: float) -> "Box":
        """Concentric sub-box covering the given fraction of each axis."""
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        margin = 0.5 * (1.0 - fraction) * (hi - lo)
        return Box(tuple(lo + margin), tuple(hi - margin))


@dataclass(frozen=True)
class ModelParams:
    """All physical constants of the coupled system."""

    n_species: int
    dim: int
    m_exponent: float
    a: tuple[float, ...]
    b: tuple[float, ...]
    sigma: float
    eps: float
    horizon: float

    def __post_init__(self):
        if self.n_species < 1:
            raise ConfigError("n_species must be a positive integer")
        if self.dim not in (1, 2):
            raise ConfigError("dim must be 1 or 2")
        if self.m_exponent < 2.0:
            raise ConfigError("m_exponent must satisfy m >= 2")
        if len(self.a) != self.n_species or len(self.b) != self.n_species:
            raise ConfigError("a and b must list one value per species")
        if not all(v > 0 for v in self.a):
            raise ConfigError("all pressure weights a_k must be positive")
        # b_k = 0 and sigma = 0 are admitted as diagnostic limits
        if not all(v >= 0 for v in self.b):
            raise ConfigError("all mobilities b_k must be nonnegative")
        if not self.sigma >= 0:
            raise ConfigError("sigma must be nonnegative")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")


@dataclass(frozen=True)
class InitialDensity:
    """One of three analytic initial-density families on a domain box.

    gaussian_mixture: isotropic components, ``means`` holds one point per
    component.  uniform_box / smoothed_box: supported on [support_lo,
    support_hi]; the smoothed variant replaces the jump by a C-infinity ramp
    of width ``ramp_width``.
    """

    kind: str
    domain_box: Box
    means: tuple[tuple[float, ...], ...] = ()
    sds: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    support_lo: tuple[float, ...] = ()
    support_hi: tuple[float, ...] = ()
    ramp_width: float = 0.0

    def __post_init__(self):
        d = self.domain_box.dim
        if self.kind == "gaussian_mixture":
            if not self.means or len(self.means) != len(self.sds) or \
                    len(self.means) != len(self.weights):
                raise ConfigError("gaussian_mixture needs matching means/sds/weights")
            if any(len(mu) != d for mu in self.means):
                raise ConfigError(f"means must have {d} coordinates")
            if any(s <= 0 for s in self.sds):
                raise ConfigError("component sds must be positive")
            if any(w <= 0 for w in self.weights):
                raise ConfigError("component weights must be positive")
            if abs(sum(self.weights) - 1.0) > 1e-12:
                raise ConfigError("component weights must sum to 1")
        elif self.kind in ("uniform_box", "smoothed_box"):
            if len(self.support_lo) != d or len(self.support_hi) != d:
                raise ConfigError("support corners must match the box dimension")
            if not all(l < h for l, h in zip(self.support_lo, self.support_hi)):
                raise ConfigError("support box must have positive extent")
            inside = Box(self.support_lo, self.support_hi)
            if not (np.all(np.asarray(inside.lo) >= np.asarray(self.domain_box.lo))
                    and np.all(np.asarray(inside.hi) <= np.asarray(self.domain_box.hi))):
                raise ConfigError("support box must lie inside the domain box")
            if self.kind == "smoothed_box":
                if not self.ramp_width > 0:
                    raise ConfigError("smoothed_box needs a positive ramp_width")
                if self.ramp_width * 2 >= min(np.asarray(self.support_hi)
                                              - np.asarray(self.support_lo)):
                    raise ConfigError("ramp_width too large for the support box")
        else:
            raise ConfigError(f"unknown initial density kind '{self.kind}'")
        total, outside_central = density_mass_diagnostics(self)
        if abs(total - 1.0) > MASS_TOL:
            raise ConfigError(
                f"initial density mass {total!r} deviates from 1 beyond {MASS_TOL}")
        if outside_central > CENTRAL_MASS_TOL:
            raise ConfigError(
                f"initial mass {outside_central:.2e} outside the central 80% "
                f"of the domain box exceeds {CENTRAL_MASS_TOL}")

    @property
    def dim(self) -> int:
        return self.domain_box.dim


def _smooth_ramp(t: np.ndarray) -> np.ndarray:
    """C-infinity transition from 0 at t<=0 to 1 at t>=1."""
    t = np.clip(t, 0.0, 1.0)
    a = np.zeros_like(t)
    b = np.zeros_like(t)
    pos = t > 0
    a[pos] = np.exp(-1.0 / t[pos])
    neg = t < 1
    b[neg] = np.exp(-1.0 / (1.0 - t[neg]))
    return a / (a + b)


def _pdf_raw(rho0: InitialDensity, pts: np.ndarray) -> np.ndarray:
    """Density values before smoothed-box normalization (others are exact)."""
    d = rho0.dim
    if rho0.kind == "gaussian_mixture":
        out = np.zeros(pts.shape[0])
        for mu, s, w in zip(rho0.means, rho0.sds, rho0.weights):
            r2 = np.sum((pts - np.asarray(mu)) ** 2, axis=-1)
            out += w * np.exp(-0.5 * r2 / s ** 2) / (2 * np.pi * s ** 2) ** (d / 2)
        return out
    lo = np.asarray(rho0.support_lo)
    hi = np.asarray(rho0.support_hi)
    if rho0.kind == "uniform_box":
        inside = np.all((pts >= lo) & (pts <= hi), axis=-1)
        return inside / float(np.prod(hi - lo))
    # smoothed_box: product of ramps per axis, normalized later
    w = rho0.ramp_width
    vals = np.ones(pts.shape[0])
    for ax in range(d):
        x = pts[:, ax]
        vals = vals * _smooth_ramp((x - lo[ax]) / w) * _smooth_ramp((hi[ax] - x) / w)
    return vals


@lru_cache(maxsize=64)
def _smoothed_box_normalizer(rho0: InitialDensity) -> float:
    lo = np.asarray(rho0.support_lo)
    hi = np.asarray(rho0.support_hi)
    if rho0.dim == 1:
        xs = np.linspace(lo[0], hi[0], _TABLE_NODES)
        vals = _pdf_raw(rho0, xs.reshape(-1, 1))
        return float(np.trapezoid(vals, xs))
    n = 1024
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    vals = _pdf_raw(rho0, np.column_stack([gx.ravel(), gy.ravel()])).reshape(n, n)
    return float(np.trapezoid(np.trapezoid(vals, ys, axis=1), xs))


def _pdf(rho0: InitialDensity, pts: np.ndarray) -> np.ndarray:
    vals = _pdf_raw(rho0, pts)
    if rho0.kind == "smoothed_box":
        vals = vals / _smoothed_box_normalizer(rho0)
    return vals


def eval_initial_density(rho0: InitialDensity, x) -> np.ndarray:
    """Density value(s) at point(s) ``x``; points must lie in the domain box."""
    pts = np.asarray(x, dtype=float)
    scalar_in = pts.ndim == 0 or (pts.ndim == 1 and rho0.dim > 1)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(1, -1) if rho0.dim > 1 else pts.reshape(-1, 1)
    if pts.shape[-1] != rho0.dim:
        raise DomainError(f"points must have {rho0.dim} coordinates")
    if not np.all(rho0.domain_box.contains(pts)):
        raise DomainError("point outside the domain box")
    vals = _pdf(rho0, pts)
    return float(vals[0]) if scalar_in else vals


@lru_cache(maxsize=64)
def _cdf_table_1d(rho0: InitialDensity) -> tuple[np.ndarray, np.ndarray]:
    """Dense (nodes, cdf) table on the domain box; cdf normalized to [0, 1]."""
    lo, hi = rho0.domain_box.lo[0], rho0.domain_box.hi[0]
    xs = np.linspace(lo, hi, _TABLE_NODES)
    pdf = _pdf(rho0, xs.reshape(-1, 1))
    inc = 0.5 * (pdf[1:] + pdf[:-1]) * np.diff(xs)
    cdf = np.concatenate([[0.0], np.cumsum(inc)])
    cdf /= cdf[-1]
    return xs, cdf


def quadrature_cdf_1d(rho0: InitialDensity, x: np.ndarray) -> np.ndarray:
    """CDF of the initial density on its quadrature table (1d only)."""
    if rho0.dim != 1:
        raise DomainError("quadrature CDF is one-dimensional")
    xs, cdf = _cdf_table_1d(rho0)
    return np.interp(np.asarray(x, dtype=float), xs, cdf)


def _gaussian_box_mass(rho0: InitialDensity, box: Box) -> float:
    from scipy.special import ndtr
    total = 0.0
    for mu, s, w in zip(rho0.means, rho0.sds, rho0.weights):
        part = w
        for ax in range(rho0.dim):
            part *= float(ndtr((box.hi[ax] - mu[ax]) / s)
                          - ndtr((box.lo[ax] - mu[ax]) / s))
        total += part
    return total


def _box_overlap(lo_a, hi_a, lo_b, hi_b) -> float:
    vol = 1.0
    for la, ha, lb, hb in zip(lo_a, hi_a, lo_b, hi_b):
        vol *= max(0.0, min(ha, hb) - max(la, lb))
    return vol


def density_mass_diagnostics(rho0: InitialDensity) -> tuple[float, float]:
    """(total mass over the box, mass outside the central 80%).

    Exact for the Gaussian and uniform families; the smoothed box integrates
    to one by construction and its outer mass is evaluated by quadrature over
    the support.
    """
    central = rho0.domain_box.shrunk(0.8)
    if rho0.kind == "gaussian_mixture":
        total = _gaussian_box_mass(rho0, rho0.domain_box)
        return total, total - _gaussian_box_mass(rho0, central)
    if rho0.kind == "uniform_box":
        support_vol = float(np.prod(np.asarray(rho0.support_hi)
                                    - np.asarray(rho0.support_lo)))
        inner = _box_overlap(rho0.support_lo, rho0.support_hi,
                             central.lo, central.hi)
        return 1.0, 1.0 - inner / support_vol
    # smoothed_box: normalized on its support, so total mass is 1; the outer
    # mass comes from quadrature restricted to the (smooth) support
    lo = np.asarray(rho0.support_lo)
    hi = np.asarray(rho0.support_hi)
    if rho0.dim == 1:
        xs = np.linspace(lo[0], hi[0], _TABLE_NODES)
        pdf = _pdf(rho0, xs.reshape(-1, 1))
        inside = (xs >= central.lo[0]) & (xs <= central.hi[0])
        outside = float(np.trapezoid(np.where(inside, 0.0, pdf), xs))
        return 1.0, outside
    n = 1024
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    pdf = _pdf(rho0, pts).reshape(n, n)
    mask = central.contains(pts).reshape(n, n)
    outside = float(np.trapezoid(np.trapezoid(np.where(mask, 0.0, pdf), ys,
                                              axis=1), xs))
    return 1.0, outside


def sample_initial(rho0: InitialDensity, count: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. samples from the initial density.

    1d uses inverse-CDF on the dense quadrature table; 2d uses rejection
    sampling against a constant bound over the domain box.  Returns an array
    of shape (count, dim).
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    if rho0.dim == 1:
        xs, cdf = _cdf_table_1d(rho0)
        u = rng.random(count)
        return np.interp(u, cdf, xs).reshape(-1, 1)

    lo = np.asarray(rho0.domain_box.lo)
    hi = np.asarray(rho0.domain_box.hi)
    n_probe = 256
    px = np.linspace(lo[0], hi[0], n_probe)
    py = np.linspace(lo[1], hi[1], n_probe)
    gx, gy = np.meshgrid(px, py, indexing="ij")
    bound = 1.05 * float(np.max(_pdf(rho0, np.column_stack([gx.ravel(), gy.ravel()]))))
    volume = rho0.domain_box.volume
    expected_rate = 1.0 / (bound * volume)
    if expected_rate < 1e-3:
        raise ConfigError(
            f"rejection acceptance rate {expected_rate:.2e} below 1e-3; "
            "shrink the domain box or smooth the density")
    out = np.empty((count, 2))
    filled = 0
    while filled < count:
        batch = max(1024, int((count - filled) / expected_rate * 1.3))
        props = lo + rng.random((batch, 2)) * (hi - lo)
        accept = rng.random(batch) * bound < _pdf(rho0, props)
        took = props[accept]
        take = min(count - filled, took.shape[0])
        out[filled:filled + take] = took[:take]
        filled += take
    return out
