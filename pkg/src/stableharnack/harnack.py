"""Harmonic extensions, the weak Harnack inequality and oscillation decay.

A function harmonic in B_r(x0) is produced from exterior data g as
u(x) = E^x[g(X_tau)], tau the exit time of B_r(x0); every check below uses
this mean-value form of harmonicity.  Lattice nodes share their Monte Carlo
paths (translated copies of one path per sample), which keeps differences
between nearby nodes almost free of noise and lets one exit bank serve any
number of exterior functions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .errors import Inconclusive, PreconditionError
from .model import Ball, StableModel, levy_density, sphere_area
from .simulate import DEFAULT_EPS_FRACTION, build_scheme, sample_exit_coupled, task_rng

TAIL_POINTS = 256
NODES_PER_RADIUS = 6
DEFAULT_PATHS = 2000


@dataclass(frozen=True)
class HarnackParams:
    x0: tuple
    r: float = 1.0
    r0: float = 1.0
    lambda_: float = 4.0 / 3.0
    theta: float = 2.0
    sigma_ratio: float = 3.0
    a: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if not self.theta > self.lambda_ > 1:
            raise PreconditionError("need theta > lambda > 1")
        if not 2 * self.theta > self.sigma_ratio > 1:
            raise PreconditionError("need 2 theta > sigma_ratio > 1")
        if not 1.0 / self.lambda_ < self.a < 1.0:
            raise PreconditionError("need 1/lambda < a < 1")
        if not 0 < self.r <= self.r0:
            raise PreconditionError("need 0 < r <= r0")

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.x0)

    @property
    def ball(self) -> Ball:
        return Ball(self.center, self.r)

    def to_dict(self):
        d = asdict(self)
        d["x0"] = list(self.x0)
        # the radius c0 = r / (2 theta) used when bounding u^- sits next to r / sigma
        d["c0"] = self.r / (2 * self.theta)
        return d


# ---------------------------------------------------------------------------
# exterior data


@dataclass(frozen=True)
class _Piece:
    kind: str                 # "shell" | "bump"
    height: float
    center: tuple
    size: tuple               # (rho1, rho2) for shells, (width,) for bumps

    def __call__(self, y):
        c = np.asarray(self.center)
        rho = np.linalg.norm(y - c, axis=-1)
        if self.kind == "shell":
            lo, hi = self.size
            return self.height * ((rho > lo) & (rho < hi))
        q = 1.0 - (rho / self.size[0]) ** 2
        return self.height * np.where(q > 0, q * q, 0.0)

    def inner_radius(self, x0):
        """Smallest |y - x0| over the support."""
        if self.kind == "shell":
            return self.size[0] - np.linalg.norm(np.asarray(self.center) - x0)
        return np.linalg.norm(np.asarray(self.center) - x0) - self.size[0]

    def quadrature(self, n_r=24, n_a=64):
        """Nodes and weights covering the support (polar about the piece centre)."""
        d = len(self.center)
        lo, hi = (self.size if self.kind == "shell" else (0.0, self.size[0]))
        x, w = special.roots_legendre(n_r)
        rho = lo + 0.5 * (hi - lo) * (x + 1)
        wr = 0.5 * (hi - lo) * w * rho ** (d - 1)
        if d == 2:
            th = 2 * np.pi * (np.arange(n_a) + 0.5) / n_a
            dirs = np.column_stack([np.cos(th), np.sin(th)])
            wa = np.full(n_a, 2 * np.pi / n_a)
        else:
            ct, wt = special.roots_legendre(n_a // 2)
            ph = 2 * np.pi * (np.arange(n_a) + 0.5) / n_a
            C, P = np.meshgrid(ct, ph, indexing="ij")
            s = np.sqrt(1 - C * C)
            dirs = np.stack([s * np.cos(P), s * np.sin(P), C], -1).reshape(-1, 3)
            wa = (wt[:, None] * np.full(n_a, 2 * np.pi / n_a)).reshape(-1)
        nodes = np.asarray(self.center) + rho[:, None, None] * dirs[None]
        return nodes.reshape(-1, d), (wr[:, None] * wa[None]).reshape(-1)


@dataclass(frozen=True)
class ExteriorFunction:
    """Closed-form bounded data: a constant plus shell indicators and C^1 bumps."""

    d: int
    constant: float = 0.0
    pieces: tuple = ()

    @classmethod
    def const(cls, d, value=1.0):
        return cls(d, float(value))

    @classmethod
    def shell(cls, center, rho1, rho2, height=1.0):
        c = tuple(float(v) for v in center)
        if not 0 <= rho1 < rho2:
            raise PreconditionError("need 0 <= rho1 < rho2")
        return cls(len(c), 0.0, (_Piece("shell", float(height), c, (float(rho1), float(rho2))),))

    @classmethod
    def bump(cls, center, width, height=1.0):
        c = tuple(float(v) for v in center)
        return cls(len(c), 0.0, (_Piece("bump", float(height), c, (float(width),)),))

    def __add__(self, other):
        return ExteriorFunction(self.d, self.constant + other.constant, self.pieces + other.pieces)

    def scale(self, s: float):
        return ExteriorFunction(self.d, s * self.constant,
                                tuple(_Piece(p.kind, s * p.height, p.center, p.size)
                                      for p in self.pieces))

    def shift(self, v):
        v = np.asarray(v, dtype=float)
        return ExteriorFunction(self.d, self.constant,
                                tuple(_Piece(p.kind, p.height, tuple(np.asarray(p.center) + v),
                                             p.size) for p in self.pieces))

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape[:-1], self.constant)
        for p in self.pieces:
            out = out + p(y)
        return out

    @property
    def bound(self) -> float:
        """Declared sup |g|."""
        return abs(self.constant) + sum(abs(p.height) for p in self.pieces)

    @property
    def value_range(self):
        """Bounds (inf g, sup g) over R^d; exact when supports do not overlap."""
        neg = sum(p.height for p in self.pieces if p.height < 0)
        pos = sum(p.height for p in self.pieces if p.height > 0)
        return self.constant + min(neg, 0.0), self.constant + max(pos, 0.0)

    @property
    def support_radius(self) -> float:
        if self.constant != 0:
            return np.inf
        r = [np.linalg.norm(p.center) + (p.size[-1]) for p in self.pieces]
        return max(r, default=0.0)

    def negative_pieces(self):
        return [p for p in self.pieces if p.height < 0]

    def nonnegative_on(self, ball: Ball) -> bool:
        if self.constant < 0:
            return False
        return all(p.inner_radius(ball.center) >= ball.radius for p in self.negative_pieces())

    def negative_part_quadrature(self):
        """Quadrature nodes/weights for integrals of g^- (negative supports disjoint)."""
        neg = self.negative_pieces()
        if self.constant < 0:
            raise PreconditionError("negative constant part has unbounded support")
        if not neg:
            return np.zeros((0, self.d)), np.zeros(0)
        parts = [p.quadrature() for p in neg]
        nodes = np.concatenate([n for n, _ in parts])
        weights = np.concatenate([w for _, w in parts])
        return nodes, weights * np.maximum(-self(nodes), 0.0)

    def to_dict(self):
        return {"constant": self.constant,
                "pieces": [{"kind": p.kind, "height": p.height, "center": list(p.center),
                            "size": list(p.size)} for p in self.pieces]}


# ---------------------------------------------------------------------------
# lattices, exit banks, harmonic fields


def ball_lattice(center, radius: float, h: float) -> np.ndarray:
    """Points of the cubic lattice h Z^d (shifted to the centre) in the open ball."""
    center = np.asarray(center, dtype=float)
    m = int(np.floor(radius / h))
    ax = h * np.arange(-m, m + 1)
    g = np.stack(np.meshgrid(*([ax] * len(center)), indexing="ij"), -1).reshape(-1, len(center))
    return center + g[np.linalg.norm(g, axis=1) < radius * (1 - 1e-12)]


def nested_lattice(params: HarnackParams, n_levels: int, nodes_per_radius: int = 4):
    """Union of lattices in B_{r theta^-n}(x0), n = 0..n_levels, finer towards x0."""
    pts, lev = [], []
    for n in range(n_levels + 1):
        rad = params.r * params.theta ** (-n)
        p = ball_lattice(params.center, rad * 0.95, rad / nodes_per_radius)
        if n < n_levels:
            inner = params.r * params.theta ** (-n - 1)
            p = p[np.linalg.norm(p - params.center, axis=1) >= inner * (1 - 1e-12)]
        pts.append(p)
        lev.append(np.full(len(p), n))
    return np.concatenate(pts), np.concatenate(lev)


# Conditional exit estimator.  Given the position P just before the exiting
# jump, the landing point has density f_nu(y - P) on the exterior of the
# ball, normalized by nu(B^c - P).  Replacing g(X_tau) by
# int g(y) f_nu(y - P) dy / nu(B^c - P) keeps the mean and removes the
# landing noise, so localized data (spikes) reach every lattice node.
# Both integrals are taken along rays from P: the radial part is in closed
# form and the angular rule is graded toward the direction where the
# integrand is sharp.

RB_PANELS = 8
RB_ORDER = 5
RB_CHUNK = 20000


def _graded_rule(scale, span, n_panels=RB_PANELS, order=RB_ORDER):
    """Per-row Gauss-Legendre rule on [0, span] with panels geometric from ``scale``."""
    scale = np.minimum(np.maximum(scale, 1e-14 * span), span)
    k = np.arange(n_panels + 1) / n_panels
    edges = scale[:, None] * (span / scale)[:, None] ** k[None]
    edges = np.concatenate([np.zeros((len(scale), 1)), edges], axis=1)
    x, w = special.roots_legendre(order)
    lo, hi = edges[:, :-1, None], edges[:, 1:, None]
    nodes = lo + 0.5 * (hi - lo) * (x + 1)
    weights = 0.5 * (hi - lo) * w
    return nodes.reshape(len(scale), -1), weights.reshape(len(scale), -1)


def _frame(axis):
    """Two unit vectors orthogonal to each row of ``axis`` (d = 3)."""
    t = np.where(np.abs(axis[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e1 = t - np.sum(t * axis, axis=1, keepdims=True) * axis
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    return e1, np.cross(axis, e1)


def _cone_rule(model, axis, psi, wpsi):
    """Polar angles about ``axis`` with weights c(alpha) f_mu(w) dw folded in.

    In d = 2 each psi stands for the two directions at +-psi; in d = 3 the
    azimuth is integrated with 16 nodes (one when f_mu is constant).
    """
    c = model.levy_norm
    iso = model.mu.kind == "isotropic"
    if model.d == 2:
        if iso:
            return psi, 2.0 * c * model.mu.value * wpsi
        ang = np.arctan2(axis[:, 1], axis[:, 0])[:, None]
        f = sum(model.mu.density_at(np.stack([np.cos(ang + sg * psi), np.sin(ang + sg * psi)], -1))
                for sg in (1.0, -1.0))
        return psi, c * wpsi * f
    if iso:
        return psi, 2 * np.pi * c * model.mu.value * wpsi * np.sin(psi)
    n_az = 16
    ph = 2 * np.pi * (np.arange(n_az) + 0.5) / n_az
    e1, e2 = _frame(axis)
    f = np.zeros_like(psi)
    for p_ in ph:
        ring = np.cos(p_) * e1 + np.sin(p_) * e2
        dirs = np.cos(psi)[..., None] * axis[:, None, :] + np.sin(psi)[..., None] * ring[:, None, :]
        f += model.mu.density_at(dirs)
    return psi, c * wpsi * np.sin(psi) * f * (2 * np.pi / n_az)


def exterior_mass(model: StableModel, P, center, R: float) -> np.ndarray:
    """nu(B_R(center)^c - P) for points P inside the ball."""
    P = np.atleast_2d(P)
    out = np.empty(len(P))
    a = model.alpha
    for s in range(0, len(P), RB_CHUNK):
        p = P[s:s + RB_CHUNK] - center
        rho = np.linalg.norm(p, axis=1)
        axis = np.where(rho[:, None] > 0, p / np.maximum(rho, 1e-300)[:, None],
                        np.eye(model.d)[0])
        # near the boundary t ~ delta / cos(psi) up to the tangent direction,
        # where the chord length changes over an angle of order sqrt(delta / R)
        sharp = np.sqrt(np.maximum(R - rho, 0.0) / R)
        half = np.full(len(rho), 0.5 * np.pi)
        v, wv = _graded_rule(sharp, half)
        psi = np.concatenate([0.5 * np.pi - v, 0.5 * np.pi + v], axis=1)
        psi, w = _cone_rule(model, axis, psi, np.concatenate([wv, wv], axis=1))
        r_ = rho[:, None]
        t = -r_ * np.cos(psi) + np.sqrt(np.maximum(R * R - (r_ * np.sin(psi)) ** 2, 0.0))
        out[s:s + RB_CHUNK] = np.sum(w * t ** (-a), axis=1) / a
    return out


def _power_integral(n, a, lo, hi):
    """int_lo^hi t^{n-1-a} dt."""
    e = n - a
    if abs(e) < 1e-12:
        return np.log(hi / lo)
    return (hi ** e - lo ** e) / e


def bump_mass(model: StableModel, P, center, width: float, height: float = 1.0) -> np.ndarray:
    """int height (1 - |y-c|^2/w^2)_+^2 f_nu(y - P) dy for P outside the bump support."""
    P = np.atleast_2d(P)
    out = np.empty(len(P))
    a, w2 = model.alpha, width * width
    for s in range(0, len(P), RB_CHUNK):
        q = P[s:s + RB_CHUNK] - center
        rho = np.linalg.norm(q, axis=1)
        if np.any(rho <= width):
            raise PreconditionError("point inside the bump support")
        axis = -q / rho[:, None]
        beta = np.arcsin(width / rho)
        gap = rho - width
        # angular width of the sharp region around the axis, in units of beta
        sharp = np.sqrt(2 * width * gap / (rho * (rho + width))) / beta
        u, wu = _graded_rule(sharp, np.ones(len(rho)))
        psi = beta[:, None] * np.sin(0.5 * np.pi * u)
        wpsi = wu * beta[:, None] * 0.5 * np.pi * np.cos(0.5 * np.pi * u)
        psi, wd = _cone_rule(model, axis, psi, wpsi)
        b = -rho[:, None] * np.cos(psi)
        disc = np.sqrt(np.maximum(b * b - (rho * rho - w2)[:, None], 0.0))
        lo, hi = -b - disc, -b + disc
        lo = np.maximum(lo, 1e-300)
        A = (1.0 - rho * rho / w2)[:, None]
        B = -2.0 * b / w2
        C = -1.0 / w2
        coef = (A * A, 2 * A * B, B * B + 2 * A * C, 2 * B * C, np.full_like(B, C * C))
        radial = sum(cn * _power_integral(n, a, lo, hi) for n, cn in enumerate(coef))
        radial = np.where(hi > lo, radial, 0.0)
        out[s:s + RB_CHUNK] = height * np.sum(wd * radial, axis=1)
    return out


@dataclass(eq=False)
class ExitBank:
    """Exit positions from ``ball`` of coupled paths started at each node.

    ``pre`` holds the position just before the exiting jump (NaN when the
    exit came from the Gaussian part).
    """

    nodes: np.ndarray
    positions: np.ndarray        # (n_paths, k, d)
    ball: Ball
    seed: int
    pre: np.ndarray = field(default=None, repr=False)
    _masses: dict = field(default_factory=dict, repr=False)

    @property
    def n_paths(self) -> int:
        return self.positions.shape[0]

    def exterior_norm(self, model) -> np.ndarray:
        """nu(B^c - P) at every pre-exit position."""
        return self.exterior_mass(model, self.ball.center, self.ball.radius)

    def exterior_mass(self, model, center, R) -> np.ndarray:
        """nu(B_R(center)^c - P) at the pre-exit positions, NaN where P is missing (cached)."""
        key = (tuple(np.asarray(center, dtype=float)), float(R))
        if key not in self._masses:
            ok = ~np.isnan(self.pre[..., 0])
            out = np.full(ok.shape, np.nan)
            out[ok] = exterior_mass(model, self.pre[ok], np.asarray(center, dtype=float), R)
            self._masses[key] = out
        return self._masses[key]


def build_exit_bank(model: StableModel, ball: Ball, nodes, n_paths: int = DEFAULT_PATHS,
                    seed: int = 0, task: int = 0, scheme=None, chunk: int = 1000) -> ExitBank:
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    scheme = scheme or build_scheme(model, DEFAULT_EPS_FRACTION * ball.radius)
    pos, pre = [], []
    for i, s in enumerate(range(0, n_paths, chunk)):
        m = min(chunk, n_paths - s)
        x, p = sample_exit_coupled(scheme, ball, nodes, task_rng(seed, 10, task, i), m,
                                   with_pre=True)
        pos.append(x)
        pre.append(p)
    return ExitBank(nodes, np.concatenate(pos), ball, seed, np.concatenate(pre))


@dataclass(eq=False)
class HarmonicField:
    nodes: np.ndarray
    values: np.ndarray
    std_err: np.ndarray
    ball: Ball
    samples: np.ndarray = field(repr=False)      # per-path estimates, (n_paths, k)

    def mask(self, center, radius) -> np.ndarray:
        return np.linalg.norm(self.nodes - np.asarray(center), axis=1) < radius * (1 + 1e-12)

    def max_principle_ok(self, g: ExteriorFunction) -> bool:
        return bool(np.all(np.abs(self.values) <= g.bound + 3 * self.std_err.max() + 1e-15))


def _conditional_samples(model, g: ExteriorFunction, bank: ExitBank) -> np.ndarray:
    """Per-path values with the landing integrated out where possible."""
    out = np.full(bank.positions.shape[:-1], g.constant)
    ok = ~np.isnan(bank.pre[..., 0])
    pre = bank.pre[ok]
    norm = bank.exterior_norm(model)[ok]
    x0, R = bank.ball.center, bank.ball.radius
    for piece in g.pieces:
        inside_shell = (piece.kind == "shell"
                        and np.linalg.norm(np.asarray(piece.center) - x0) + R <= piece.size[0])
        outside_bump = piece.kind == "bump" and piece.inner_radius(x0) >= R
        vals = piece(bank.positions)
        if inside_shell:
            inner = bank.exterior_mass(model, piece.center, piece.size[0])[ok]
            outer = bank.exterior_mass(model, piece.center, piece.size[1])[ok]
            vals[ok] = piece.height * (inner - outer) / norm
        elif outside_bump:
            vals[ok] = bump_mass(model, pre, np.asarray(piece.center), piece.size[0],
                                 piece.height) / norm
        out = out + vals
    return out


def harmonic_extend(model: StableModel, g: ExteriorFunction, B: Ball, lattice=None,
                    n_paths: int = DEFAULT_PATHS, seed: int = 0, bank: ExitBank = None,
                    conditional: bool = True) -> HarmonicField:
    """u(x) = E^x[g(X_tau_B)] at the lattice nodes, with per-node standard errors.

    With ``conditional`` (and a Levy density) the landing point of each exit
    is integrated out given the position before the exiting jump.
    """
    if bank is None:
        if lattice is None:
            raise PreconditionError("give a lattice or an exit bank")
        bank = build_exit_bank(model, B, lattice, n_paths, seed)
    elif lattice is not None and not np.array_equal(np.asarray(lattice), bank.nodes):
        raise PreconditionError("lattice does not match the exit bank")
    if conditional and model.mu.has_density and bank.pre is not None:
        vals = _conditional_samples(model, g, bank)
    else:
        vals = g(bank.positions)
    n = vals.shape[0]
    return HarmonicField(bank.nodes, vals.mean(axis=0), vals.std(axis=0, ddof=1) / np.sqrt(n),
                         bank.ball, vals)


# ---------------------------------------------------------------------------
# weak Harnack inequality


def _tail_centers(params: HarnackParams, radius: float, n: int = TAIL_POINTS):
    d = len(params.x0)
    h = radius * (sphere_area(d) / d / n) ** (1.0 / d)
    pts = ball_lattice(params.center, radius, h)
    while len(pts) < n:
        h *= 0.9
        pts = ball_lattice(params.center, radius, h)
    if d == 2:
        th = 2 * np.pi * np.arange(64) / 64
        rim = params.center + radius * np.column_stack([np.cos(th), np.sin(th)])
        pts = np.concatenate([pts, rim])
    return pts


def tail_term(model: StableModel, g: ExteriorFunction, params: HarnackParams,
              radius: float = None) -> float:
    """sup over z in B_{r/sigma}(x0) of int u^-(y) f_nu(y - z) dy (u^- = g^- off B_r)."""
    nodes, w = g.negative_part_quadrature()
    if not len(w) or not np.any(w > 0):
        return 0.0
    radius = params.r / params.sigma_ratio if radius is None else radius
    z = _tail_centers(params, radius)
    vals = np.array([np.dot(w, levy_density(model, nodes - zi)) for zi in z])
    return float(vals.max())


@dataclass
class HarnackReport:
    avg_term: float
    inf_term: float
    tail_term: float
    c_est: float
    avg_err: float
    inf_err: float
    tail_err: float
    c_err: float
    status: str = "ok"
    params: dict = field(default_factory=dict)

    def holds(self, c1: float, n_sigma: float = 2.0) -> dict:
        """avg <= c1 (inf + tail), with the margin in units of the combined error."""
        margin = c1 * (self.inf_term + self.tail_term) - self.avg_term
        sig = float(np.sqrt(self.avg_err ** 2 + c1 ** 2 * (self.inf_err ** 2 + self.tail_err ** 2)))
        return {"margin": float(margin), "sigma": sig, "holds": bool(margin >= 0),
                "within_noise": bool(margin >= -n_sigma * sig)}

    def to_dict(self):
        return asdict(self)


def verify_weak_harnack(model: StableModel, field: HarmonicField, g: ExteriorFunction,
                        params: HarnackParams) -> HarnackReport:
    """The three terms of the weak Harnack inequality and c_est = avg / (inf + tail)."""
    if not g.nonnegative_on(params.ball):
        raise PreconditionError("exterior data must be nonnegative on B_r(x0)")
    x0, r = params.center, params.r
    a_mask = field.mask(x0, r / params.lambda_)
    i_mask = field.mask(x0, r / params.theta)
    if not a_mask.any() or not i_mask.any():
        raise PreconditionError("lattice has no nodes in the inner balls")
    per_path = field.samples[:, a_mask].mean(axis=1)
    avg = float(per_path.mean())
    avg_err = float(per_path.std(ddof=1) / np.sqrt(len(per_path)))
    inner = np.flatnonzero(i_mask)
    j = inner[np.argmin(field.values[inner])]
    inf, inf_err = float(field.values[j]), float(field.std_err[j])
    tail = tail_term(model, g, params)
    denom = inf + tail
    status = "ok"
    if avg > 0 and denom <= 2 * inf_err:
        status = "vacuous"
        c_est, c_err = np.inf, np.inf
    else:
        c_est = avg / denom
        c_err = float(abs(c_est) * np.hypot(avg_err / avg if avg else 0.0, inf_err / denom))
    if np.any(field.values[field.mask(x0, r)] < -2 * field.std_err[field.mask(x0, r)]):
        status = "negative_inside"
    return HarnackReport(avg, inf, tail, float(c_est), avg_err, inf_err, 0.0, float(c_err),
                         status, params.to_dict())


def harnack_lattice(params: HarnackParams, nodes_per_radius: int = NODES_PER_RADIUS):
    """Lattice over B_{r/lambda}(x0), which contains B_{r/theta}(x0)."""
    rad = params.r / params.lambda_
    return ball_lattice(params.center, rad, rad / nodes_per_radius)


def _random_direction(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_exterior(kind: str, params: HarnackParams, rng) -> ExteriorFunction:
    """One member of the nonnegative families used to probe the constant."""
    x0, r, d = params.center, params.r, len(params.x0)
    if kind == "shell":
        lo = r * rng.uniform(1.0, 8.0)
        return ExteriorFunction.shell(x0, lo, lo + r * rng.uniform(0.2, 2.0))
    if kind == "bump":
        w = r * rng.uniform(0.3, 1.5)
        return ExteriorFunction.bump(x0 + rng.uniform(r + w, 10 * r) * _random_direction(rng, d), w)
    if kind == "spike":
        w = r * rng.uniform(0.1, 0.25)
        return ExteriorFunction.bump(x0 + (r + w + r * rng.uniform(0.0, 0.5))
                                     * _random_direction(rng, d), w)
    raise ValueError(f"unknown family {kind!r}")


FAMILIES = ("shell", "bump", "spike")


def estimate_harnack_constant(model: StableModel, params: HarnackParams, ensemble_size: int = 50,
                              seed: int = 0, n_paths: int = DEFAULT_PATHS,
                              bank: ExitBank = None) -> dict:
    """c1 = max of c_est over g = 1 and random shells, bumps and spikes."""
    bank = bank or build_exit_bank(model, params.ball, harnack_lattice(params), n_paths, seed)
    rng = task_rng(seed, 20)
    members = [("constant", ExteriorFunction.const(len(params.x0)))]
    for i in range(ensemble_size - 1):
        kind = FAMILIES[i % 3]
        members.append((kind, random_exterior(kind, params, rng)))
    dist = []
    for kind, g in members:
        rep = verify_weak_harnack(model, harmonic_extend(model, g, params.ball, bank=bank), g, params)
        dist.append({"family": kind, "c_est": rep.c_est, "c_err": rep.c_err,
                     "avg": rep.avg_term, "inf": rep.inf_term, "status": rep.status,
                     "g": g.to_dict()})
    i = int(np.argmax([m["c_est"] for m in dist]))
    return {"c1": dist[i]["c_est"], "c1_err": dist[i]["c_err"], "argmax": i,
            "distribution": dist, "n_paths": bank.n_paths}


def signed_harnack_trials(model: StableModel, params: HarnackParams, c1: float,
                          n_trials: int = 20, seed: int = 0, n_paths: int = DEFAULT_PATHS,
                          bank: ExitBank = None) -> dict:
    """Data with a negative far bump; checks avg <= c1 (inf + tail) per trial.

    The positive part is a shell starting at r plus a random family member,
    so u stays nonnegative on B_r; the negative bump sits at distance
    [3r, 10r].  If the lattice shows u < 0 the bump height is halved.
    """
    bank = bank or build_exit_bank(model, params.ball, harnack_lattice(params), n_paths, seed)
    rng = task_rng(seed, 21)
    x0, r, d = params.center, params.r, len(params.x0)
    trials = []
    for i in range(n_trials):
        outer = r * rng.uniform(1.5, 3.0)
        pos = ExteriorFunction.shell(x0, r, outer) + random_exterior(FAMILIES[i % 3], params, rng)
        w = r * rng.uniform(0.5, 1.5)
        dist = max(outer + w, r * rng.uniform(3.0, 10.0))
        centre = x0 + dist * _random_direction(rng, d)
        height = rng.uniform(0.5, 2.0)
        while True:
            g = pos + ExteriorFunction.bump(centre, w, -height)
            fld = harmonic_extend(model, g, params.ball, bank=bank)
            if np.all(fld.values >= 0):
                break
            height *= 0.5
        rep = verify_weak_harnack(model, fld, g, params)
        chk = rep.holds(c1)
        trials.append({"trial": i, "avg": rep.avg_term, "inf": rep.inf_term,
                       "tail": rep.tail_term, "c_est": rep.c_est, "bump_height": height,
                       **chk})
    n_hold = sum(t["holds"] for t in trials)
    return {"c1": c1, "trials": trials, "fraction_holding": n_hold / len(trials),
            "failures_within_noise": all(t["within_noise"] for t in trials if not t["holds"])}


# ---------------------------------------------------------------------------
# Hoelder iteration


def hoelder_constants(c1: float, theta: float) -> dict:
    """kappa = 1/(4 c1) and beta = log(2/(2 - kappa)) / log(theta)."""
    if not c1 > 0.25:
        raise PreconditionError("need c1 > 1/4 so that kappa < 1")
    if not theta > 1:
        raise PreconditionError("need theta > 1")
    kappa = 1.0 / (4.0 * c1)
    return {"kappa": kappa, "beta_theory": float(np.log(2.0 / (2.0 - kappa)) / np.log(theta))}


@dataclass
class HoelderIteration:
    c1_in: float
    kappa: float
    beta_theory: float
    K: float
    m: list
    M: list
    case_log: list
    sandwich: list
    envelope: list
    status: str = "ok"

    def __post_init__(self):
        if not 0 < self.kappa < 1:
            raise PreconditionError("kappa must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)


def run_oscillation_iteration(model: StableModel, field: HarmonicField, g: ExteriorFunction,
                              params: HarnackParams, c1: float, n_levels: int = 4,
                              n_sigma: float = 3.0) -> HoelderIteration:
    """Constructive (m_n, M_n) update with lattice checks of the sandwich.

    At level k the rescaled v = (u - (m+M)/2) 2 theta^{(k-1) beta} / K is
    tested on the lattice of B_{r theta^{-(k-1)}/lambda}: if v <= 0 on at
    least half of it the upper bound drops (M_k = m_{k-1} + K theta^{-k beta}),
    otherwise the lower bound rises.  m_k <= u <= M_k is then checked on the
    nodes of B_{r theta^{-k}} and the exterior growth envelope of v on nodes
    and exterior points outside B_{r theta^{-(k-1)}}.
    """
    hc = hoelder_constants(c1, params.theta)
    beta, theta, x0, r = hc["beta_theory"], params.theta, params.center, params.r
    lo, hi = g.value_range
    m0 = min(lo, float(field.values.min()))
    M0 = max(hi, float(field.values.max()))
    K = M0 - m0
    m, M, cases, sandwich, envelope = [m0], [M0], [], [], []
    status = "ok"
    ext = _exterior_probe(params, g, n_levels)
    for k in range(1, n_levels + 1):
        if K == 0:
            m.append(m0)
            M.append(M0)
            cases.append("constant")
            sandwich.append({"level": k, "pass": True, "worst_margin": 0.0})
            continue
        scale = 2 * theta ** ((k - 1) * beta) / K
        mid = 0.5 * (m[-1] + M[-1])
        rho = r * theta ** (-(k - 1))
        sel = field.mask(x0, rho / params.lambda_)
        v = (field.values[sel] - mid) * scale
        if np.mean(v <= 0) >= 0.5:
            cases.append("upper")
            m.append(m[-1])
            M.append(m[-1] + K * theta ** (-k * beta))
        else:
            cases.append("lower")
            M.append(M[-1])
            m.append(M[-1] - K * theta ** (-k * beta))
        inner = field.mask(x0, r * theta ** (-k))
        u, s = field.values[inner], field.std_err[inner]
        worst = float(np.min(np.minimum(u - m[-1], M[-1] - u)))
        ok = bool(np.all((u >= m[-1] - n_sigma * s) & (u <= M[-1] + n_sigma * s)))
        bad = np.flatnonzero(~((u >= m[-1] - n_sigma * s) & (u <= M[-1] + n_sigma * s)))
        sandwich.append({"level": k, "pass": ok, "worst_margin": worst,
                         "n_nodes": int(inner.sum()),
                         "failing_nodes": field.nodes[inner][bad].tolist()})
        # exterior envelope of v on nodes and exterior points outside B_rho
        out = ~field.mask(x0, rho) & (np.linalg.norm(field.nodes - x0, axis=1) >= rho)
        zs = np.concatenate([field.nodes[out], ext])
        uz = np.concatenate([field.values[out], g(ext)])
        sz = np.concatenate([field.std_err[out], np.zeros(len(ext))])
        env = 2 * (theta * np.linalg.norm(zs - x0, axis=1) / rho) ** beta - 1
        vz = (uz - mid) * scale
        tol = n_sigma * sz * scale
        env_ok = bool(np.all((vz <= env + tol + 1e-12) & (vz >= -env - tol - 1e-12)))
        envelope.append({"level": k, "pass": env_ok, "n_points": int(len(zs)),
                         "worst_gap": float(np.min(env - np.abs(vz))) if len(zs) else None})
        if not (ok and env_ok):
            status = "violation"
    it = HoelderIteration(c1, hc["kappa"], beta, K, m, M, cases, sandwich, envelope, status)
    for n in range(len(m)):
        if not np.isclose(M[n] - m[n], K * theta ** (-n * beta), rtol=1e-12, atol=1e-15):
            raise AssertionError("sandwich width law broken")
    return it


def _exterior_probe(params: HarnackParams, g, n_levels, n: int = 64):
    """Deterministic points outside B_r(x0) at radii r theta^{j}, j = 0..3."""
    d = len(params.x0)
    rng = task_rng(0, 30)
    pts = []
    for j in range(4):
        rad = params.r * params.theta ** j * 1.0001
        dirs = rng.standard_normal((n, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        pts.append(params.center + rad * dirs)
    return np.concatenate(pts)


def estimate_hoelder_exponent(field: HarmonicField, params: HarnackParams,
                              n_levels: int = 4) -> dict:
    """Least-squares slope of log osc_n against -n log theta."""
    x0, r, theta = params.center, params.r, params.theta
    osc, err = [], []
    for n in range(n_levels + 1):
        sel = field.mask(x0, r * theta ** (-n))
        u, s = field.values[sel], field.std_err[sel]
        osc.append(float(u.max() - u.min()))
        err.append(float(s[np.argmax(u)] + s[np.argmin(u)]))
    if osc[0] <= 3 * max(err[0], 0.0) or osc[0] == 0:
        raise Inconclusive("oscillation at the top level is within noise: "
                           "constant function, exponent undefined")
    osc_arr = np.asarray(osc)
    if np.any(osc_arr <= 0):
        raise Inconclusive("zero oscillation at a finer level")
    x = -np.arange(n_levels + 1) * np.log(theta)
    slope = np.polyfit(x, np.log(osc_arr), 1)[0]
    return {"beta_fit": float(slope), "osc_sequence": osc, "osc_err": err}


# ---------------------------------------------------------------------------
# annulus tail decay


def _annulus_mass(model, x, rho1, rho2, dirs, wdir):
    """int over rho1 < |z - x0| < rho2 of f_nu(x - z) dz for x inside B_rho1(x0) (x0 = 0)."""
    a = model.alpha
    b = x @ dirs.T
    xx = np.sum(x * x, axis=1)[:, None]
    t1 = -b + np.sqrt(b * b - xx + rho1 ** 2)
    t2 = -b + np.sqrt(b * b - xx + rho2 ** 2)
    return (t1 ** (-a) - t2 ** (-a)) @ wdir / a


@dataclass
class TailDecayReport:
    eta: list
    zeta_fit: float
    c_fit: float
    residuals: list
    flagged: bool
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def annulus_tail_decay(model: StableModel, params: HarnackParams, k: int = 1, J: int = 8,
                       n_dirs: int = None) -> TailDecayReport:
    """eta_j = sup over x in B_{r theta^{-(k-1)}/sigma} of the f_nu-mass of the j-th annulus.

    Fits eta_j = c zeta^{-j-1} by log-linear regression; residuals above
    10% flag the data as non-geometric.
    """
    if J < 3:
        raise PreconditionError("need J >= 3")
    d, r, theta = model.d, params.r, params.theta
    if d == 2:
        n = n_dirs or 2048
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
        dirs = np.column_stack([np.cos(th), np.sin(th)])
        wdir = np.full(n, 2 * np.pi / n)
    else:
        dirs, wdir = model.quadrature.nodes, model.quadrature.weights
    wdir = model.levy_norm * wdir * model.mu.density_at(dirs)
    rad = r * theta ** (-(k - 1)) / params.sigma_ratio
    xs = _tail_centers(HarnackParams((0.0,) * d, params.r, params.r0, params.lambda_,
                                     params.theta, params.sigma_ratio, params.a), rad)
    eta = []
    for j in range(1, J + 1):
        rho1 = r * theta ** (-(k - j))
        eta.append(float(_annulus_mass(model, xs, rho1, theta * rho1, dirs, wdir).max()))
    j = np.arange(1, J + 1)
    slope, icpt = np.polyfit(j + 1, np.log(eta), 1)
    zeta, c = float(np.exp(-slope)), float(np.exp(icpt))
    fit = c * zeta ** (-(j + 1))
    res = (np.asarray(eta) - fit) / fit
    return TailDecayReport(eta, zeta, c, res.tolist(), bool(np.max(np.abs(res)) > 0.1),
                           {**params.to_dict(), "k": k, "J": J})


def write_rows_csv(path, rows: list):
    if not rows:
        open(path, "w").close()
        return
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for row in rows:
            w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v
                        for k, v in row.items()})
