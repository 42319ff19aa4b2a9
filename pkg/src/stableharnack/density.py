"""Transition density p(t, x) by discrete Fourier inversion of exp(-t Phi).

An FFT on [-L, L]^d returns the periodisation sum_n p(x + 2Ln).  Stable
tails are heavy, so the images have to be removed:

* images with |n|_inf <= 3 are read off a coarser inversion on a box eight
  times larger (whose own images are removed the same way, recursively);
* farther images follow the one-big-jump picture: t f_nu summed directly
  for measures with a density, and the Fourier series of the paths with at
  least one far jump for atomic measures, whose far field lies on lines.

Coarse levels that are not band-limited at their spacing are smoothed by a
kernel with vanishing second moment; they are read only far from the origin
where p varies on the scale |x|.

Only the unit-time grid is inverted in production paths; other times use
p(t, x) = t^{-d/alpha} p(1, t^{-1/alpha} x).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft as sfft
from scipy import integrate, special
from scipy import ndimage
from scipy.interpolate import CubicSpline

from .errors import GridResolutionError, PreconditionError
from .model import StableModel, _cos_power_tail, char_exponent, levy_density, levy_norm

TRUNCATION_TOL = 1e-12
TAIL_MASS_TOL = 1e-4
MASS_TOL = 1e-3
LEVEL_RATIO = 8
MAX_LEVELS = 5
SMOOTHING = 2.5          # coarse-level kernel width in units of the level spacing
COARSE_TOL = 1e-8        # coarse levels skip smoothing when already band-limited
FAR_IMAGES = {2: 24, 3: 6}
FAR_SUBGRID = {2: 64, 3: 16}
DEFAULTS = {2: dict(L=40.0, N=2048), 3: dict(L=12.0, N=256)}


def fft_workers() -> int:
    return int(os.environ.get("STABLEHARNACK_THREADS", "1"))


@dataclass(eq=False)
class DensityLevel:
    L: float
    N: int
    values: np.ndarray
    smoothing: float

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    def coords(self, x) -> np.ndarray:
        """Fractional node index of points x (shape (n, d)) -> (d, n)."""
        return ((np.asarray(x, dtype=float) + self.L) / self.h).T


@dataclass(eq=False)
class TransitionDensityGrid:
    """p(t_ref, .) on a lattice plus its coarse companion levels.

    ``values`` is the level-0 array after clamping tiny negative ringing.
    ``mass`` integrates level 0 and adds the mass the coarse levels (and the
    Levy measure beyond them) place outside the level-0 box.
    """

    d: int
    alpha: float
    t_ref: float
    levels: list
    mass: float
    ringing: float
    trusted: float
    model_key: str
    tail_constant: float = float("nan")
    outer_tail_mass: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def L(self) -> float:
        return self.levels[0].L

    @property
    def h(self) -> float:
        return self.levels[0].h

    @property
    def N(self) -> int:
        return self.levels[0].N

    @property
    def values(self) -> np.ndarray:
        return self.levels[0].values

    def axis(self, level: int = 0) -> np.ndarray:
        lv = self.levels[level]
        return -lv.L + lv.h * np.arange(lv.N)

    def nodes(self, level: int = 0) -> np.ndarray:
        ax = self.axis(level)
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    def trusted_radius(self, level: int = 0) -> float:
        """Sup-norm radius inside which level ``level`` is read."""
        return self.trusted * self.levels[level].L

    def evaluate(self, x, return_level: bool = False):
        """Multilinear interpolation of p(t_ref, x); NaN beyond every level."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(len(x), np.nan)
        which = np.full(len(x), -1)
        r_inf = np.max(np.abs(x), axis=1)
        todo = np.ones(len(x), dtype=bool)
        for k, lv in enumerate(self.levels):
            sel = todo & (r_inf <= self.trusted_radius(k))
            if np.any(sel):
                out[sel] = ndimage.map_coordinates(lv.values, lv.coords(x[sel]), order=1,
                                                   mode="nearest")
                which[sel] = k
                todo &= ~sel
        np.maximum(out, 0.0, out=out, where=~np.isnan(out))
        return (out, which) if return_level else out


# ---------------------------------------------------------------------------
# frequency-side helpers


def _half_spectrum_symbol(model: StableModel, L: float, N: int) -> np.ndarray:
    """Phi on the rfft frequency lattice, shape (N,)*(d-1) + (N//2+1,)."""
    d = model.d
    dk = np.pi / L
    full = np.fft.fftfreq(N, d=1.0 / N) * dk
    half = np.arange(N // 2 + 1) * dk
    axes = [full] * (d - 1) + [half]
    shape = tuple(len(a) for a in axes)
    mu = model.mu
    if mu.kind == "atomic":
        phi = np.zeros(shape)
        for xi, w in zip(mu.directions, mu.weights):
            proj = sum(np.reshape(a * c, [-1 if i == j else 1 for j in range(d)])
                       for i, (a, c) in enumerate(zip(axes, xi)))
            phi += w * np.abs(proj) ** model.alpha
        return phi
    grids = np.meshgrid(*axes, indexing="ij", sparse=True)
    r = np.sqrt(sum(g * g for g in grids))
    if mu.kind == "isotropic":
        return r ** model.alpha * model.angular_symbol(np.eye(d)[:1])[0]
    phi = np.zeros(shape)
    # row blocks keep the temporary direction arrays small
    for s in range(0, shape[0], 64):
        sl = [np.broadcast_to(g, shape)[s:s + 64] for g in grids]
        k = np.stack(sl, axis=-1)
        phi[s:s + 64] = char_exponent(model, k, fast=True)
    return phi


def _sign_pattern(N: int, d: int) -> np.ndarray:
    """(-1)^(m_1 + ... + m_d) shifting the lattice origin to -L."""
    full = 1.0 - 2.0 * (np.arange(N) % 2)
    half = full[: N // 2 + 1]
    axes = [full] * (d - 1) + [half]
    out = np.ones(1)
    for i, a in enumerate(axes):
        out = np.multiply.outer(out, a) if i else a
    return out


def _invert_level(model, t, L, N, smoothing):
    d = model.d
    phi = _half_spectrum_symbol(model, L, N)
    spec = np.exp(-t * phi)
    if smoothing > 0:
        dk = np.pi / L
        full = np.fft.fftfreq(N, d=1.0 / N) * dk
        half = np.arange(N // 2 + 1) * dk
        axes = [full] * (d - 1) + [half]
        grids = np.meshgrid(*axes, indexing="ij", sparse=True)
        q = 0.5 * smoothing ** 2 * sum(g * g for g in grids)
        spec *= np.exp(-q) * (1.0 + q)
    spec *= _sign_pattern(N, d)
    h = 2.0 * L / N
    vals = sfft.irfftn(spec, s=(N,) * d, workers=fft_workers()) / h ** d
    return vals


def levy_mass_outside_cube(model: StableModel, R: float, t: float = 1.0) -> float:
    """t * nu({x : |x|_inf > R}), exact for the stable Levy measure."""
    a = model.alpha
    mu = model.mu
    if mu.kind == "atomic":
        ang = np.dot(mu.weights, np.max(np.abs(mu.directions), axis=1) ** a)
    else:
        q = model.quadrature
        ang = q.integrate(mu.density_at(q.nodes) * np.max(np.abs(q.nodes), axis=1) ** a)
    return t * model.levy_norm * ang * R ** (-a) / a


def cosine_tail_factor(alpha: float, y) -> np.ndarray:
    """J(y) = int_1^inf cos(y u) u^{-1-alpha} du for y >= 0."""
    y = np.abs(np.asarray(y, dtype=float))
    uniq, inv = np.unique(y, return_inverse=True)
    out = np.empty(len(uniq))
    c = levy_norm(alpha)
    s = 1.0 + alpha
    for i, v in enumerate(uniq):
        if v == 0.0:
            out[i] = 1.0 / alpha
        elif v < 8.0:
            k = np.arange(1, 24)
            terms = (-1.0) ** (k + 1) * v ** (2 * k) / (special.factorial(2 * k) * (2 * k - alpha))
            out[i] = 1.0 / alpha - v ** alpha / c + terms.sum()
        else:
            R = max(v, 40.0)
            body = 0.0
            if v < R:
                edges = np.concatenate([[v], np.arange(np.ceil(v / np.pi), R / np.pi) * np.pi, [R]])
                for a, b in zip(edges[:-1], edges[1:]):
                    if b > a:
                        body += integrate.quad(lambda r: np.cos(r) * r ** -s, a, b,
                                               epsabs=1e-15, epsrel=1e-12)[0]
            out[i] = v ** alpha * (body + _cos_power_tail(s, R))
    return out[inv].reshape(y.shape)


def _far_image_term(model, t, L, N, M):
    """sum over |n|_inf > M of p(x + 2 L n), from the one-big-jump picture.

    With a Levy density, p(t, y) ~ t f_nu(y) far out; images up to
    FAR_IMAGES are summed explicitly on a coarse subgrid (the sum is smooth
    in x) and the rest is spread evenly.  Atomic measures put the far field
    on lines, so t * (nu_far * p_per) is formed from its Fourier series.
    """
    d = model.d
    mu = model.mu
    R = (2 * M + 1) * L
    if mu.kind != "atomic":
        M2 = FAR_IMAGES[d]
        S = FAR_SUBGRID[d]
        ax = np.linspace(-L, L, S + 1)
        pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
        rng = np.arange(-M2, M2 + 1)
        offs = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), axis=-1).reshape(-1, d)
        offs = offs[np.max(np.abs(offs), axis=1) > M] * (2.0 * L)
        total = np.zeros(len(pts))
        for block in np.array_split(offs, max(1, len(offs) // 256)):
            y = pts[:, None, :] + block[None, :, :]
            total += levy_density(model, y).sum(axis=1)
        total = t * total + levy_mass_outside_cube(model, (2 * M2 + 1) * L, t) / (2.0 * L) ** d
        total = total.reshape((S + 1,) * d)
        fine = -L + (2.0 * L / N) * np.arange(N)
        for axis in range(d):
            total = CubicSpline(ax, total, axis=axis)(fine)
        return total
    dk = np.pi / L
    full = np.fft.fftfreq(N, d=1.0 / N) * dk
    half = np.arange(N // 2 + 1) * dk
    axes = [full] * (d - 1) + [half]
    shape = tuple(len(a) for a in axes)
    nu_hat = np.zeros(shape)
    for xi, w in zip(mu.directions, mu.weights):
        Rj = R / np.max(np.abs(xi))
        q = sum(np.reshape(a * c, [-1 if i == j else 1 for j in range(d)])
                for i, (a, c) in enumerate(zip(axes, xi)))
        q = np.broadcast_to(q, shape)
        nu_hat += w * Rj ** (-model.alpha) * cosine_tail_factor(model.alpha, q * Rj)
    nu_hat *= model.levy_norm * t
    # paths with at least one far jump, to all orders
    spec = -np.expm1(-nu_hat) * np.exp(-t * _half_spectrum_symbol(model, L, N))
    spec *= _sign_pattern(N, d)
    h = 2.0 * L / N
    return sfft.irfftn(spec, s=(N,) * d, workers=fft_workers()) / h ** d


def _image_offsets(d, M):
    rng = np.arange(-M, M + 1)
    mesh = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return mesh[np.any(mesh != 0, axis=1)]


def _image_correction(level, upper, model, t, M):
    """sum_{0 < |n|_inf <= M} p(x + 2 L n) on the level nodes, plus a far remainder.

    The shifts 2 L n are whole multiples of the upper spacing, so the image
    sum is formed on upper nodes covering the closed box [-L, L]^d and then
    upsampled with separable cubic splines.
    """
    d = level.values.ndim
    m = int(round(2.0 * level.L / upper.h))
    i0 = int(round((upper.L - level.L) / upper.h))
    total = np.zeros((m + 1,) * d)
    for n in _image_offsets(d, M):
        sl = tuple(slice(i0 + m * k, i0 + m * k + m + 1) for k in n)
        total += upper.values[sl]
    coarse = -level.L + upper.h * np.arange(m + 1)
    fine = -level.L + level.h * np.arange(level.N)
    for axis in range(d):
        total = CubicSpline(coarse, total, axis=axis)(fine)
    return total + _far_image_term(model, t, level.L, level.N, M)


def _inside_weights(level, L_inner):
    """Product trapezoid weights of the box [-L_inner, L_inner]^d on level nodes."""
    ax = -level.L + level.h * np.arange(level.N)
    w1 = np.where(np.abs(ax) < L_inner - 1e-9 * level.h, 1.0, 0.0)
    w1[np.isclose(np.abs(ax), L_inner, rtol=0, atol=1e-9 * level.h)] = 0.5
    out = w1
    for _ in range(level.values.ndim - 1):
        out = np.multiply.outer(out, w1)
    return out


def check_resolution(model: StableModel, t: float, L: float, N: int) -> dict:
    h = 2.0 * L / N
    U = np.pi / h
    trunc = float(np.exp(-t * model.phi_min * U ** model.alpha))
    if not trunc < TRUNCATION_TOL:
        raise GridResolutionError(
            f"grid too coarse: exp(-t*Phi_min*(pi/h)^alpha) = {trunc:.3g} >= {TRUNCATION_TOL:g} "
            f"(h={h:.4g}); decrease h")
    return {"h": h, "cutoff": U, "truncation": trunc}


def choose_levels(model, t, L, ratio=LEVEL_RATIO, tail_tol=TAIL_MASS_TOL) -> int:
    for extra in range(MAX_LEVELS + 1):
        if levy_mass_outside_cube(model, L * ratio ** extra, t) < tail_tol:
            return extra
    raise GridResolutionError(
        f"grid too small: tail mass beyond {L * ratio ** MAX_LEVELS:.3g} still exceeds "
        f"{tail_tol:g}; increase L")


def invert_density(model: StableModel, t: float = 1.0, L: float = None, h: float = None,
                   N: int = None, n_levels: Optional[int] = None,
                   trusted: float = 0.75, coarse_N: Optional[int] = None) -> TransitionDensityGrid:
    """Independent inversion of p(t, .) on [-L, L]^d (N nodes per axis)."""
    if not t > 0:
        raise PreconditionError("time must be positive")
    d = model.d
    L = float(L if L is not None else DEFAULTS[d]["L"])
    if N is None:
        N = int(round(2 * L / h)) if h is not None else DEFAULTS[d]["N"]
    N += N % 2
    if N % (2 * LEVEL_RATIO):
        N += 2 * LEVEL_RATIO - N % (2 * LEVEL_RATIO)
    info = check_resolution(model, t, L, N)
    atomic = model.mu.kind == "atomic"
    ratio = LEVEL_RATIO
    extra = choose_levels(model, t, L, ratio) if n_levels is None else int(n_levels)
    if coarse_N is None:
        coarse_N = 2 * N if atomic and d == 2 else N
    levels = []
    for k in range(extra + 1):
        Lk = L * ratio ** k
        Nk = N if k == 0 else coarse_N
        U = np.pi * Nk / (2.0 * Lk)
        sharp = np.exp(-t * model.phi_min * U ** model.alpha) < COARSE_TOL
        if k and not sharp and atomic:
            # smoothing would wash out the line-shaped far field
            break
        s = 0.0 if k == 0 or sharp else SMOOTHING * (2.0 * Lk / Nk)
        levels.append(DensityLevel(Lk, Nk, _invert_level(model, t, Lk, Nk, s), s))
    extra = len(levels) - 1

    # remove periodic images, coarsest level first
    M = (ratio - 1) // 2
    top = levels[-1]
    top.values -= _far_image_term(model, t, top.L, top.N, 0)
    for k in range(extra - 1, -1, -1):
        upper = levels[k + 1]
        levels[k].values -= _image_correction(levels[k], upper, model, t, M)

    # mass outside each box from the next level up
    outside = levy_mass_outside_cube(model, levels[-1].L, t)
    outer = outside
    for k in range(extra - 1, -1, -1):
        upper = levels[k + 1]
        w = 1.0 - _inside_weights(upper, levels[k].L)
        outside += upper.h ** d * float(np.sum(w * upper.values))
    ringing = max(0.0, -float(levels[0].values.min()))
    np.maximum(levels[0].values, 0.0, out=levels[0].values)
    mass = levels[0].h ** d * float(np.sum(levels[0].values)) + outside

    grid = TransitionDensityGrid(d, model.alpha, float(t), levels, mass, ringing, trusted,
                                 model.key, outer_tail_mass=outer,
                                 meta={**info, "levels": extra + 1})
    return grid


def unit_density_grid(model: StableModel, L: float = None, h: float = None, N: int = None,
                      n_levels: Optional[int] = None) -> TransitionDensityGrid:
    """p(1, .) on [-L, L]^d; all other times follow by scaling."""
    grid = invert_density(model, 1.0, L=L, h=h, N=N, n_levels=n_levels)
    if abs(grid.mass - 1.0) > MASS_TOL:
        raise GridResolutionError(f"inverted density has mass {grid.mass:.6f}; "
                                  "grid too coarse / too small")
    grid.tail_constant = verify_heat_kernel_bound(model, grid)["C_est"]
    return grid


def density_at(model: StableModel, grid: TransitionDensityGrid, t, x, with_flag: bool = False):
    """p(t, x) = t^{-d/alpha} p(1, t^{-1/alpha} x).

    Beyond the outermost trusted level the heat-kernel tail bound
    C t |x|^{-d-alpha} is returned instead and flagged "bound".
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:1])
    if np.any(t <= 0):
        raise PreconditionError("time must be positive")
    a, d = model.alpha, model.d
    scaled = x * t[:, None] ** (-1.0 / a)
    vals = grid.evaluate(scaled) * t ** (-d / a)
    flag = np.where(np.isnan(vals), "bound", "value")
    miss = np.isnan(vals)
    if np.any(miss):
        r = np.linalg.norm(x[miss], axis=1)
        vals[miss] = grid.tail_constant * t[miss] * r ** (-d - a)
    if squeeze:
        vals, flag = vals[0], flag[0]
    return (vals, flag) if with_flag else vals


def verify_heat_kernel_bound(model: StableModel, grid: TransitionDensityGrid) -> dict:
    """C_est = max p(1, x) / min(1, |x|^{-d-alpha}) over trusted nodes of all levels."""
    best, where = -np.inf, None
    a, d = model.alpha, model.d
    for k, lv in enumerate(grid.levels):
        nodes = grid.nodes(k)
        rinf = np.max(np.abs(nodes), axis=-1)
        keep = rinf <= grid.trusted_radius(k)
        if k:
            keep &= rinf > grid.trusted_radius(k - 1)
        r = np.linalg.norm(nodes[keep], axis=-1)
        env = np.minimum(1.0, np.where(r > 0, r, 1.0) ** (-d - a))
        ratio = np.maximum(lv.values[keep], 0.0) / env
        i = int(np.argmax(ratio))
        if ratio[i] > best:
            best, where = float(ratio[i]), nodes[keep][i].tolist()
    return {"C_est": best, "worst_node": where}


def radial_slice_csv(grid: TransitionDensityGrid, path, direction=None, n: int = 400):
    d = grid.d
    e = np.zeros(d)
    e[0] = 1.0
    if direction is not None:
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)
    rmax = grid.trusted_radius(len(grid.levels) - 1)
    r = np.concatenate([[0.0], np.geomspace(grid.h, rmax, n - 1)])
    vals = grid.evaluate(r[:, None] * e)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "p"])
        for ri, vi in zip(r, vals):
            w.writerow([f"{ri:.10g}", f"{vi:.10g}"])


def save_grid(grid: TransitionDensityGrid, path):
    arrays = {f"level{k}": lv.values for k, lv in enumerate(grid.levels)}
    header = dict(model_key=grid.model_key, d=grid.d, alpha=grid.alpha, t_ref=grid.t_ref,
                  L=[lv.L for lv in grid.levels], N=grid.N,
                  smoothing=[lv.smoothing for lv in grid.levels], mass=grid.mass,
                  ringing=grid.ringing, trusted=grid.trusted, tail_constant=grid.tail_constant,
                  outer_tail_mass=grid.outer_tail_mass)
    np.savez_compressed(path, header=np.array(repr(header)), **arrays)


def load_grid(path, model: StableModel = None) -> TransitionDensityGrid:
    import ast

    with np.load(path) as data:
        header = ast.literal_eval(str(data["header"]))
        levels = [DensityLevel(L, header["N"], data[f"level{k}"].copy(), s)
                  for k, (L, s) in enumerate(zip(header["L"], header["smoothing"]))]
    if model is not None and model.key != header["model_key"]:
        raise PreconditionError("cached grid belongs to a different model")
    return TransitionDensityGrid(header["d"], header["alpha"], header["t_ref"], levels,
                                 header["mass"], header["ringing"], header["trusted"],
                                 header["model_key"], header["tail_constant"],
                                 header["outer_tail_mass"])
