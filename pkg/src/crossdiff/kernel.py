"""Smoothing kernel: the compactly supported bump, its scaled family and gradient.

The profile is the classical bump ``x -> Z^-1 exp(-1/(1-|x|^2))`` on the open
unit ball, zero outside, with ``Z`` fixed per dimension so the profile has unit
integral.  The scaled kernel at width ``eps`` is ``eps^-d * profile(x/eps)``;
its gradient follows by the chain rule and vanishes smoothly at the support
boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

_SUPPORT_TOL = 1e-14  # treat 1-|y|^2 below this as outside the support


@lru_cache(maxsize=None)
def bump_normalizer(dim: int) -> float:
    """Unit-ball integral of exp(-1/(1-|x|^2)), computed once per dimension."""
    if dim == 1:
        val, _ = quad(lambda y: np.exp(-1.0 / (1.0 - y * y)), -1.0, 1.0,
                      epsabs=1e-14, epsrel=1e-14)
    elif dim == 2:
        val, _ = quad(lambda r: 2.0 * np.pi * r * np.exp(-1.0 / (1.0 - r * r)),
                      0.0, 1.0, epsabs=1e-14, epsrel=1e-14)
    else:
        raise ValueError(f"unsupported dimension {dim}")
    return val


def _profile(r2: np.ndarray, dim: int) -> np.ndarray:
    """Bump profile as a function of |y|^2, zero outside the unit ball."""
    out = np.zeros_like(r2)
    inside = r2 < 1.0 - _SUPPORT_TOL
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside])) / bump_normalizer(dim)
    return out


@dataclass(frozen=True)
class Mollifier:
    """Scaled bump kernel of width ``eps`` in ``dim`` dimensions."""

    dim: int
    eps: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def peak(self) -> float:
        """Value at the origin, eps^-d * exp(-1)/Z."""
        return float(np.exp(-1.0) / bump_normalizer(self.dim) / self.eps ** self.dim)


def _as_points(x, dim: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        if dim != 1:
            raise ValueError("scalar point only valid in 1d")
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        if dim == 1:
            pts = pts.reshape(-1, 1)
        else:
            pts = pts.reshape(1, -1)
    if pts.shape[-1] != dim:
        raise ValueError(f"points must have {dim} coordinates, got shape {pts.shape}")
    return pts


def eval_v(mol: Mollifier, x) -> np.ndarray:
    """Scaled kernel values at points ``x``; exactly zero at radius >= eps.

    Accepts a scalar (1d), a single point, or an (n, dim) batch; returns an
    array of shape (n,).
    """
    pts = _as_points(x, mol.dim)
    r2 = np.sum((pts / mol.eps) ** 2, axis=-1)
    return _profile(r2, mol.dim) / mol.eps ** mol.dim


def eval_grad_v(mol: Mollifier, x) -> np.ndarray:
    """Gradient of the scaled kernel; odd, zero at the origin and outside eps.

    Returns an array of shape (n, dim).
    """
    pts = _as_points(x, mol.dim)
    y = pts / mol.eps
    r2 = np.sum(y * y, axis=-1)
    inside = r2 < 1.0 - _SUPPORT_TOL
    out = np.zeros_like(pts)
    if np.any(inside):
        one_m = 1.0 - r2[inside]
        base = np.exp(-1.0 / one_m) / bump_normalizer(mol.dim)
        coef = base * (-2.0 / one_m ** 2) / mol.eps ** (mol.dim + 1)
        out[inside] = coef[:, None] * y[inside]
    return out


def bump_fourier(s: np.ndarray, dim: int) -> np.ndarray:
    """Fourier transform of the unit bump at radial frequencies ``s``.

    The profile is radial, so its transform is too: a cosine transform in 1d
    and a Hankel transform in 2d, evaluated by a dense Simpson rule (the
    integrand is smooth and compactly supported).  The scaled kernel's
    transform follows as ``bump_fourier(eps * s, dim)``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    n_nodes = 4097
    r = np.linspace(0.0, 1.0, n_nodes)
    prof = np.zeros(n_nodes)
    inner = r < 1.0
    prof[inner] = np.exp(-1.0 / (1.0 - r[inner] ** 2)) / bump_normalizer(dim)
    w = np.ones(n_nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= (r[1] - r[0]) / 3.0
    out = np.empty_like(s)
    chunk = 2048
    for start in range(0, len(s), chunk):
        sc = s[start:start + chunk, None]
        if dim == 1:
            out[start:start + chunk] = 2.0 * (np.cos(sc * r) * prof * w).sum(axis=1)
        else:
            from scipy.special import j0
            out[start:start + chunk] = 2.0 * np.pi * (
                j0(sc * r) * prof * r * w).sum(axis=1)
    return out


def grad_l1_norm(mol: Mollifier) -> float:
    """Quadrature of |grad kernel| over its support; scales as 1/eps."""
    if mol.dim == 1:
        def integrand(x):
            g = eval_grad_v(mol, np.array([[x]]))
            return abs(float(g[0, 0]))
        val, _ = quad(integrand, -mol.eps, 0.0, epsabs=1e-12, limit=200)
        return 2.0 * val
    # radial in 2d: |grad| depends on r only
    def integrand(r):
        g = eval_grad_v(mol, np.array([[r, 0.0]]))
        return 2.0 * np.pi * r * abs(float(g[0, 0]))
    val, _ = quad(integrand, 0.0, mol.eps, epsabs=1e-12, limit=200)
    return val
