"""Symmetric alpha-stable models on R^d given by a spectral measure.

A model is the triple (d, alpha, mu).  Everything downstream reads the
characteristic exponent and the Levy density from here:

    Phi(u)  = int_{S^{d-1}} |u . xi|^alpha mu(dxi)
    f_nu(x) = c(alpha) f_mu(x/|x|) |x|^{-d-alpha}

where c(alpha) is fixed by  int (1 - cos(u.x)) f_nu(x) dx = Phi(u).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .errors import (
    DegenerateMeasureError,
    DimensionNotImplemented,
    ModelError,
    NoDensityError,
    SingularityError,
)

SUPPORTED_DIMENSIONS = (2, 3)
DEFAULT_QUADRATURE = {2: 512, 3: 64}
NONDEGENERACY_RTOL = 1e-10


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1}."""
    return 2.0 * np.pi ** (d / 2.0) / special.gamma(d / 2.0)


def abs_moment(alpha: float, d: int) -> float:
    """int_{S^{d-1}} |e . xi|^alpha sigma(dxi) for any unit vector e."""
    return (2.0 * np.pi ** ((d - 1) / 2.0) * special.gamma((alpha + 1) / 2.0)
            / special.gamma((d + alpha) / 2.0))


# ---------------------------------------------------------------------------
# sphere quadrature


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    nodes: np.ndarray
    weights: np.ndarray
    d: int
    shape: tuple = ()

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def __len__(self):
        return len(self.weights)


def sphere_quadrature(d: int, n: int, n_azimuth: Optional[int] = None) -> SphereQuadrature:
    """Antipodally symmetric quadrature on S^{d-1}.

    d=2: ``n`` equispaced angles (trapezoid rule).  d=3: ``n`` Gauss-Legendre
    nodes in cos(polar) times ``n_azimuth`` (default 2n) equispaced azimuths.
    """
    if d not in SUPPORTED_DIMENSIONS:
        raise DimensionNotImplemented(f"dimension {d} not implemented (supported: 2, 3)")
    if n < 4 or n % 2:
        raise ModelError("quadrature resolution must be an even integer >= 4")
    if d == 2:
        theta = 2.0 * np.pi * np.arange(n) / n
        nodes = np.column_stack([np.cos(theta), np.sin(theta)])
        # exact zeros keep the node set symmetric bit-for-bit
        nodes[np.abs(nodes) < 1e-15] = 0.0
        weights = np.full(n, 2.0 * np.pi / n)
        return SphereQuadrature(nodes, weights, 2, (n,))
    m = 2 * n if n_azimuth is None else n_azimuth
    if m % 2:
        raise ModelError("azimuthal resolution must be even")
    ct, wt = special.roots_legendre(n)
    phi = 2.0 * np.pi * np.arange(m) / m
    st = np.sqrt(1.0 - ct ** 2)
    x = np.outer(st, np.cos(phi))
    y = np.outer(st, np.sin(phi))
    z = np.repeat(ct[:, None], m, axis=1)
    nodes = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    weights = np.repeat(wt, m) * (2.0 * np.pi / m)
    return SphereQuadrature(nodes, weights, 3, (n, m))


# ---------------------------------------------------------------------------
# spectral measures


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Spectral measure mu on S^{d-1}.

    Three variants: ``density`` (f_mu w.r.t. the surface measure, with a
    declared bound m), ``isotropic`` (f_mu constant) and ``atomic`` (finite
    symmetric point masses; oracle-only, it has no Levy density).
    """

    kind: str
    density: Optional[Callable] = None
    bound: Optional[float] = None
    directions: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    value: Optional[float] = None
    expression: Optional[str] = None

    @classmethod
    def isotropic(cls, value: float) -> "SpectralMeasure":
        if not value > 0:
            raise ModelError("isotropic density must be positive")
        return cls("isotropic", value=float(value), bound=float(value))

    @classmethod
    def from_density(cls, f: Callable, bound: float, expression: str = None) -> "SpectralMeasure":
        if not bound > 0:
            raise ModelError("density bound m must be positive")
        return cls("density", density=f, bound=float(bound), expression=expression)

    @classmethod
    def atomic(cls, directions, weights) -> "SpectralMeasure":
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        weights = np.asarray(weights, dtype=float).ravel()
        if len(directions) != len(weights):
            raise ModelError("one weight per atom required")
        if np.any(weights <= 0):
            raise ModelError("atom weights must be positive")
        norms = np.linalg.norm(directions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ModelError("atom directions must be unit vectors")
        return cls("atomic", directions=directions, weights=weights)

    @property
    def oracle_only(self) -> bool:
        return self.kind == "atomic"

    @property
    def has_density(self) -> bool:
        return self.kind != "atomic"

    def density_at(self, xi) -> np.ndarray:
        """f_mu at unit vectors ``xi`` (shape (..., d))."""
        xi = np.asarray(xi, dtype=float)
        if self.kind == "isotropic":
            return np.full(xi.shape[:-1], self.value)
        if self.kind == "density":
            flat = xi.reshape(-1, xi.shape[-1])
            vals = np.asarray(self.density(flat), dtype=float)
            return np.broadcast_to(vals, flat.shape[:1]).reshape(xi.shape[:-1])
        raise NoDensityError("atomic spectral measure has no density")

    def describe(self) -> dict:
        if self.kind == "isotropic":
            return {"variant": "isotropic", "value": self.value}
        if self.kind == "density":
            name = self.expression or getattr(self.density, "__qualname__", repr(self.density))
            return {"variant": "density", "expression": name, "bound": self.bound}
        return {"variant": "atomic",
                "atoms": [[*map(float, v), float(w)] for v, w in zip(self.directions, self.weights)]}


# ---------------------------------------------------------------------------
# Levy normalisation


def _small_r_kernel(r):
    # (1 - cos r) / r^2 without cancellation
    s = np.sin(0.5 * r)
    return 2.0 * s * s / (r * r) if r > 0 else 0.5


def _cos_power_tail(s: float, R: float, terms: int = 30) -> float:
    """Asymptotic series for int_R^inf cos(r) r^{-s} dr (R >> s)."""
    total = 0j
    rising = 1.0
    for k in range(terms):
        total += (-1j) ** k * rising * R ** (-s - k)
        rising *= s + k
    return float((1j * np.exp(1j * R) * total).real)


@lru_cache(maxsize=64)
def levy_norm(alpha: float) -> float:
    """c(alpha) = 1 / int_0^inf (1 - cos r) r^{-1-alpha} dr, by quadrature.

    [0, 1] uses an algebraic weight r^{1-alpha}.  On [1, inf) the power part
    is elementary; the cosine part is integrated half-period by half-period
    up to R ~ 200 and closed with its asymptotic series.
    """
    if not 0 < alpha < 2:
        raise ModelError("alpha must lie in (0, 2)")
    s = 1.0 + alpha
    head, _ = integrate.quad(_small_r_kernel, 0.0, 1.0, weight="alg",
                             wvar=(1.0 - alpha, 0.0), epsabs=1e-15, epsrel=1e-13)
    edges = np.concatenate([[1.0], 0.5 * np.pi + np.pi * np.arange(65)])
    osc = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        osc += integrate.quad(lambda r: np.cos(r) * r ** -s, a, b,
                              epsabs=1e-16, epsrel=1e-13)[0]
    osc += _cos_power_tail(s, edges[-1])
    return 1.0 / (head + 1.0 / alpha - osc)


# ---------------------------------------------------------------------------
# the model


def _orthonormal_frame(e):
    """Two unit vectors completing e (shape (n, 3)) to an orthonormal frame."""
    a = np.zeros_like(e)
    use_x = np.abs(e[:, 0]) < 0.9
    a[use_x, 0] = 1.0
    a[~use_x, 1] = 1.0
    b1 = a - np.sum(a * e, axis=1, keepdims=True) * e
    b1 /= np.linalg.norm(b1, axis=1, keepdims=True)
    b2 = np.cross(e, b1)
    return b1, b2


def _canonical_sign(e):
    """Flip rows so the first nonzero coordinate is positive."""
    e = np.array(e, dtype=float, copy=True)
    first = np.argmax(e != 0.0, axis=1)
    lead = e[np.arange(len(e)), first]
    e[lead < 0] *= -1.0
    return e


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ModelError("ball radius must be positive")

    @property
    def d(self) -> int:
        return self.center.shape[0]

    def distance_to_center(self, x) -> np.ndarray:
        return np.linalg.norm(np.asarray(x, dtype=float) - self.center, axis=-1)

    def contains(self, x) -> np.ndarray:
        """Closed-ball membership."""
        return self.distance_to_center(x) <= self.radius

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)


class StableModel:
    """(d, alpha, mu) together with cached normalisations.

    Construction validates the measure (symmetry, bound, mass) on the
    quadrature nodes and rejects degenerate measures.
    """

    def __init__(self, d: int, alpha: float, mu: SpectralMeasure,
                 quadrature: SphereQuadrature = None, n_quad: int = None,
                 n_rule: int = 48):
        if d not in SUPPORTED_DIMENSIONS:
            raise DimensionNotImplemented(f"dimension {d} not implemented (supported: 2, 3)")
        if not 0 < alpha < 2:
            raise ModelError("alpha must lie in the open interval (0, 2)")
        if mu.kind == "atomic" and mu.directions.shape[1] != d:
            raise ModelError("atom directions do not match the dimension")
        self.d = int(d)
        self.alpha = float(alpha)
        self.mu = mu
        if quadrature is None:
            quadrature = sphere_quadrature(d, n_quad or DEFAULT_QUADRATURE[d])
        if quadrature.d != d:
            raise ModelError("quadrature dimension mismatch")
        self.quadrature = quadrature
        self.n_rule = int(n_rule)
        self._validate_measure()
        self.levy_norm = levy_norm(self.alpha)
        self.certificate = check_nondegenerate(self)

    # -- validation -------------------------------------------------------

    def _validate_measure(self):
        mu = self.mu
        if mu.kind == "atomic":
            dirs, w = mu.directions, mu.weights
            for v, wv in zip(dirs, w):
                match = np.all(np.abs(dirs + v) < 1e-12, axis=1)
                if not np.any(match) or not np.any(np.abs(w[match] - wv) <= 1e-12 * wv):
                    raise ModelError("atomic measure is not symmetric under xi -> -xi")
            return
        if mu.kind == "isotropic":
            return
        nodes = self.quadrature.nodes
        f_plus = mu.density_at(nodes)
        f_minus = mu.density_at(-nodes)
        if not np.all(np.isfinite(f_plus)):
            raise ModelError("spectral density is not finite on the quadrature nodes")
        scale = max(1.0, float(np.max(np.abs(f_plus))))
        if np.max(np.abs(f_plus - f_minus)) > 1e-12 * scale:
            raise ModelError("spectral density is not symmetric: f(xi) != f(-xi)")
        if np.min(f_plus) < 0:
            raise ModelError("spectral density takes negative values")
        if np.max(f_plus) > mu.bound * (1 + 1e-12):
            raise ModelError(f"spectral density exceeds its declared bound m={mu.bound}")
        if not self.quadrature.integrate(f_plus) > 0:
            raise ModelError("spectral measure has zero mass")

    # -- measure summaries --------------------------------------------------

    @cached_property
    def total_mass(self) -> float:
        mu = self.mu
        if mu.kind == "isotropic":
            return mu.value * sphere_area(self.d)
        if mu.kind == "atomic":
            return float(np.sum(mu.weights))
        return self.quadrature.integrate(mu.density_at(self.quadrature.nodes))

    @cached_property
    def second_moment(self) -> np.ndarray:
        """int xi xi^T mu(dxi)."""
        mu = self.mu
        if mu.kind == "isotropic":
            return np.eye(self.d) * mu.value * sphere_area(self.d) / self.d
        if mu.kind == "atomic":
            return np.einsum("n,ni,nj->ij", mu.weights, mu.directions, mu.directions)
        q = self.quadrature
        w = q.weights * mu.density_at(q.nodes)
        return np.einsum("n,ni,nj->ij", w, q.nodes, q.nodes)

    @cached_property
    def phi_max(self) -> float:
        return self.certificate["max_value"]

    @cached_property
    def phi_min(self) -> float:
        return self.certificate["min_value"]

    def describe(self) -> dict:
        return {"dimension": self.d, "alpha": self.alpha, "spectral": self.mu.describe(),
                "quadrature": list(self.quadrature.shape)}

    @cached_property
    def key(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # -- angular symbol -------------------------------------------------------

    @cached_property
    def _rule2(self):
        a = self.alpha
        x, w = special.roots_jacobi(self.n_rule, a, a)
        psi = 0.5 * np.pi * x
        coef = np.pi * w * (np.cos(psi) / (1.0 - x * x)) ** a
        return psi, coef

    @cached_property
    def _rule3(self):
        a = self.alpha
        x, w = special.roots_jacobi(self.n_rule // 2 + 8, 0.0, a)
        t = 0.5 * (1.0 + x)
        wt = w * 0.5 ** (1.0 + a)
        m = 2 * self.n_rule
        phi = 2.0 * np.pi * np.arange(m) / m
        return t, wt, phi, 2.0 * np.pi / m

    def angular_symbol(self, e, chunk: int = 4096) -> np.ndarray:
        """Psi(e) = Phi(e) for unit vectors e (shape (n, d))."""
        e = np.atleast_2d(np.asarray(e, dtype=float))
        mu = self.mu
        if mu.kind == "isotropic":
            return np.full(len(e), mu.value * abs_moment(self.alpha, self.d))
        if mu.kind == "atomic":
            return np.abs(e @ mu.directions.T) ** self.alpha @ mu.weights
        e = _canonical_sign(e)
        out = np.empty(len(e))
        for s in range(0, len(e), chunk):
            out[s:s + chunk] = self._psi_density(e[s:s + chunk])
        return out

    def _psi_density(self, e):
        f = self.mu.density_at
        if self.d == 2:
            psi, coef = self._rule2
            ang = np.arctan2(e[:, 1], e[:, 0])[:, None] + psi[None, :]
            xi = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
            return f(xi) @ coef
        t, wt, phi, dphi = self._rule3
        b1, b2 = _orthonormal_frame(e)
        s = np.sqrt(1.0 - t * t)
        ring = (np.cos(phi)[:, None, None] * b1[None] + np.sin(phi)[:, None, None] * b2[None])
        total = np.zeros(len(e))
        for tk, sk, wk in zip(t, s, wt):
            xi = tk * e[None] + sk * ring          # (m, n, 3)
            total += wk * dphi * f(xi).sum(axis=0)
        return 2.0 * total

    # tabulated symbol for bulk evaluation on Fourier lattices

    @cached_property
    def _symbol_table(self):
        if self.d == 2:
            n = 1024
            th = np.pi * np.arange(n + 1) / n
            vals = self.angular_symbol(np.column_stack([np.cos(th), np.sin(th)]))
            vals[-1] = vals[0]
            return CubicSpline(th, vals, bc_type="periodic")
        nt, nphi, pad = 97, 128, 4
        th = 0.5 * np.pi * np.arange(nt) / (nt - 1)           # upper hemisphere
        ph = 2.0 * np.pi * np.arange(-pad, nphi + pad) / nphi
        T, P = np.meshgrid(th, ph[pad:nphi + pad], indexing="ij")
        dirs = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
        vals = self.angular_symbol(dirs.reshape(-1, 3)).reshape(nt, nphi)
        vals = np.concatenate([vals[:, -pad:], vals, vals[:, :pad]], axis=1)
        return RectBivariateSpline(th, ph, vals, kx=3, ky=3)

    def angular_symbol_fast(self, e) -> np.ndarray:
        """Psi(e) from a cubic-spline table (density variant); exact otherwise."""
        e = np.asarray(e, dtype=float)
        if self.mu.kind != "density":
            return self.angular_symbol(e.reshape(-1, self.d)).reshape(e.shape[:-1])
        tab = self._symbol_table
        if self.d == 2:
            th = np.mod(np.arctan2(e[..., 1], e[..., 0]), np.pi)
            return tab(th)
        flip = e[..., 2] < 0
        e = np.where(flip[..., None], -e, e)
        th = np.arccos(np.clip(e[..., 2], -1.0, 1.0))
        ph = np.mod(np.arctan2(e[..., 1], e[..., 0]), 2.0 * np.pi)
        return tab.ev(th, ph)


# ---------------------------------------------------------------------------
# operations


def char_exponent(model: StableModel, u, fast: bool = False) -> np.ndarray:
    """Phi(u) for points u of shape (..., d); returns shape (...).

    The exact path uses a Gauss-Jacobi rule aligned with u, which absorbs
    the |cos|^alpha kink; ``fast=True`` reads the tabulated angular symbol.
    """
    u = np.asarray(u, dtype=float)
    d = model.d
    if u.shape[-1] != d:
        raise ModelError(f"expected points in R^{d}")
    flat = u.reshape(-1, d)
    mu = model.mu
    if mu.kind == "atomic":
        vals = np.abs(flat @ mu.directions.T) ** model.alpha @ mu.weights
        return vals.reshape(u.shape[:-1])
    r = np.linalg.norm(flat, axis=1)
    out = np.zeros(len(flat))
    nz = r > 0
    if np.any(nz):
        e = flat[nz] / r[nz, None]
        psi = model.angular_symbol_fast(e) if fast else model.angular_symbol(e)
        out[nz] = r[nz] ** model.alpha * psi
    return out.reshape(u.shape[:-1])


def levy_density(model: StableModel, x) -> np.ndarray:
    """f_nu(x) = c(alpha) f_mu(x/|x|) |x|^{-d-alpha}."""
    if not model.mu.has_density:
        raise NoDensityError("atomic spectral measure has no Levy density")
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise SingularityError("Levy density is singular at x = 0")
    xi = x / r[..., None]
    return model.levy_norm * model.mu.density_at(xi) * r ** (-model.d - model.alpha)


def check_nondegenerate(model: StableModel) -> dict:
    """Minimum of Phi over a dense set of unit directions.

    Raises DegenerateMeasureError (carrying the witnessing direction) when
    min Phi < 1e-10 * max Phi.
    """
    d = model.d
    dirs = model.quadrature.nodes
    if d == 2:
        n = max(len(dirs), 256)
        n += (-n) % 4        # keep the coordinate axes in the sample
        th = np.pi * np.arange(n // 2) / (n // 2)
        dirs = np.column_stack([np.cos(th), np.sin(th)])
        dirs[np.abs(dirs) < 1e-15] = 0.0
    else:
        dirs = np.vstack([np.eye(3), dirs[dirs[:, 2] >= 0]])
    vals = model.angular_symbol(dirs)
    i = int(np.argmin(vals))
    cert = {"min_value": float(vals[i]), "arg_direction": dirs[i].tolist(),
            "max_value": float(np.max(vals))}
    if not cert["min_value"] > NONDEGENERACY_RTOL * cert["max_value"]:
        raise DegenerateMeasureError(
            f"spectral measure is degenerate: Phi vanishes along {dirs[i].tolist()}",
            min_value=cert["min_value"], direction=dirs[i])
    return cert


def isotropic_model(d: int, alpha: float, value: float = 1.0, **kw) -> StableModel:
    return StableModel(d, alpha, SpectralMeasure.isotropic(value), **kw)


def cauchy_model(d: int = 2) -> StableModel:
    """Isotropic alpha=1 model normalised so that Phi(u) = |u|."""
    return isotropic_model(d, 1.0, 1.0 / abs_moment(1.0, d))
