"""Increments and first exits from balls of the stable process.

Jumps larger than eps are simulated exactly as a compound Poisson process
(Pareto radius, direction drawn from mu); jumps below eps are replaced by a
Gaussian with the same covariance.  Exit paths are advanced in steps whose
length shrinks with the distance to the boundary, and every jump is checked
against the boundary as it is applied, so the overshoot is exact.

Randomness comes from numpy generators derived from a root seed and a task
key, so a bank of paths is reproducible regardless of what else runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import BudgetExceeded, PreconditionError
from .model import Ball, StableModel, sphere_area

DIRECTION_CELLS = {2: 4096, 3: (128, 256)}
DEFAULT_EPS_FRACTION = 0.01
DEFAULT_MAX_STEPS = 10 ** 6


def task_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one task, derived by counter splitting."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


# ---------------------------------------------------------------------------
# direction sampling


class DirectionSampler:
    """Draws unit vectors from mu / |mu|.

    Atomic measures are sampled exactly.  A density is discretised into
    equal-area cells with probability proportional to f_mu at the cell
    centre, and the draw is uniform inside its cell.
    """

    def __init__(self, model: StableModel):
        self.d = model.d
        mu = model.mu
        self.kind = mu.kind
        if mu.kind == "atomic":
            self.atoms = mu.directions
            p = mu.weights
        elif mu.kind == "isotropic":
            return
        elif self.d == 2:
            n = DIRECTION_CELLS[2]
            self.width = 2.0 * np.pi / n
            centres = self.width * (np.arange(n) + 0.5)
            p = mu.density_at(np.column_stack([np.cos(centres), np.sin(centres)]))
        else:
            nz, nphi = DIRECTION_CELLS[3]
            self.shape = (nz, nphi)
            z = -1.0 + 2.0 * (np.arange(nz) + 0.5) / nz
            ph = 2.0 * np.pi * (np.arange(nphi) + 0.5) / nphi
            Z, P = np.meshgrid(z, ph, indexing="ij")
            s = np.sqrt(1.0 - Z * Z)
            xyz = np.stack([s * np.cos(P), s * np.sin(P), Z], axis=-1).reshape(-1, 3)
            p = mu.density_at(xyz)
        p = np.asarray(p, dtype=float)
        self.cdf = np.cumsum(p) / p.sum()
        self.cdf[-1] = 1.0

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        d = self.d
        if self.kind == "isotropic":
            g = rng.standard_normal((n, d))
            return g / np.linalg.norm(g, axis=1, keepdims=True)
        idx = np.searchsorted(self.cdf, rng.random(n), side="right")
        if self.kind == "atomic":
            return self.atoms[idx]
        if d == 2:
            th = self.width * (idx + rng.random(n))
            return np.column_stack([np.cos(th), np.sin(th)])
        nz, nphi = self.shape
        iz, ip = np.divmod(idx, nphi)
        z = -1.0 + 2.0 * (iz + rng.random(n)) / nz
        ph = 2.0 * np.pi * (ip + rng.random(n)) / nphi
        s = np.sqrt(1.0 - z * z)
        return np.column_stack([s * np.cos(ph), s * np.sin(ph), z])


# ---------------------------------------------------------------------------
# increments


@dataclass(eq=False)
class IncrementScheme:
    model: StableModel
    eps_cut: float
    big_jump_rate: float
    gauss_cov: np.ndarray
    directions: DirectionSampler = field(repr=False)

    def rate(self, eps) -> np.ndarray:
        """Lambda(eps) for any cutoff, by homogeneity."""
        return self.big_jump_rate * (np.asarray(eps, dtype=float) / self.eps_cut) ** (-self.model.alpha)

    def cov_scale(self, eps) -> np.ndarray:
        """Sigma(eps) / Sigma(eps_cut)."""
        return (np.asarray(eps, dtype=float) / self.eps_cut) ** (2.0 - self.model.alpha)

    def char_exponent(self, u) -> np.ndarray:
        """Exponent of the approximating law: Gaussian part plus big jumps.

        The big-jump part is integrated radially in closed form per
        direction (cosine tail integral) and over directions by quadrature.
        """
        from .density import cosine_tail_factor

        u = np.atleast_2d(np.asarray(u, dtype=float))
        model = self.model
        a, eps = model.alpha, self.eps_cut
        gauss = 0.5 * np.einsum("ni,ij,nj->n", u, self.gauss_cov, u)
        mu = model.mu
        if mu.kind == "atomic":
            dirs, w = mu.directions, mu.weights
        else:
            q = model.quadrature
            dirs = q.nodes
            w = q.weights * (mu.density_at(dirs) if mu.kind == "density"
                             else np.full(len(dirs), mu.value))
        proj = np.abs(u @ dirs.T) * eps
        jumps = model.levy_norm * eps ** (-a) * (
            (1.0 / a - cosine_tail_factor(a, proj)) @ w)
        return gauss + jumps


def build_scheme(model: StableModel, eps_cut: float) -> IncrementScheme:
    if not eps_cut > 0:
        raise PreconditionError("eps_cut must be positive")
    a, c = model.alpha, model.levy_norm
    rate = c * model.total_mass * eps_cut ** (-a) / a
    cov = c * eps_cut ** (2.0 - a) / (2.0 - a) * model.second_moment
    cov = 0.5 * (cov + cov.T)
    return IncrementScheme(model, float(eps_cut), float(rate), cov, DirectionSampler(model))


def sample_increment(scheme: IncrementScheme, dt: float, rng: np.random.Generator,
                     size: int = 1) -> np.ndarray:
    """size draws of X_dt under the scheme, shape (size, d)."""
    if not dt > 0:
        raise PreconditionError("dt must be positive")
    d = scheme.model.d
    a = scheme.model.alpha
    chol = np.linalg.cholesky(dt * scheme.gauss_cov + 1e-300 * np.eye(d))
    out = rng.standard_normal((size, d)) @ chol.T
    counts = rng.poisson(dt * scheme.big_jump_rate, size)
    total = int(counts.sum())
    if total:
        radii = scheme.eps_cut * (1.0 - rng.random(total)) ** (-1.0 / a)
        jumps = radii[:, None] * scheme.directions.sample(rng, total)
        owner = np.repeat(np.arange(size), counts)
        np.add.at(out, owner, jumps)
    return out


# ---------------------------------------------------------------------------
# exits


@dataclass(eq=False)
class ExitSample:
    """A batch of first-exit records from one ball and one start point."""

    positions: np.ndarray
    times: np.ndarray
    n_steps: np.ndarray
    ball: Ball
    start: np.ndarray

    def __len__(self):
        return len(self.times)

    def radii(self) -> np.ndarray:
        return self.ball.distance_to_center(self.positions)

    def boundary_fraction(self, tol: float = 1e-9) -> float:
        return float(np.mean(self.radii() - self.ball.radius <= tol))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            d = self.positions.shape[1]
            w.writerow(["path"] + ["exit_" + "xyz"[i] for i in range(d)] + ["time", "steps"])
            for i, (p, t, s) in enumerate(zip(self.positions, self.times, self.n_steps)):
                w.writerow([i] + [f"{v:.12g}" for v in p] + [f"{t:.12g}", int(s)])


def _segment_first(flags, seg, n_seg):
    """Index of the first True in each segment of a flat array, or -1."""
    first = np.full(n_seg, -1)
    hit = np.flatnonzero(flags)
    if len(hit):
        s, where = np.unique(seg[hit], return_index=True)
        first[s] = hit[where]
    return first


def sample_exit(scheme: IncrementScheme, D: Ball, start, rng: np.random.Generator,
                n_paths: int = 1, max_steps: int = DEFAULT_MAX_STEPS,
                eps_cut: float = None) -> ExitSample:
    """Exit positions of n_paths independent paths started at ``start``.

    Each step has length dt = (dist/4)^alpha / Phi_max and small-jump
    cutoff min(eps_cut, dist/4), where dist is the current distance to the
    boundary, so the Gaussian part moves a path by a fraction of dist and
    exits are driven by jumps.
    """
    d = scheme.model.d
    start = np.broadcast_to(np.asarray(start, dtype=float), (d,)).copy()
    if not D.distance_to_center(start) < D.radius:
        raise PreconditionError("start point must lie strictly inside the ball")
    pos, times, steps = _run_exits(scheme, D, np.tile(start, (n_paths, 1)), rng,
                                   max_steps, eps_cut)
    return ExitSample(pos, times, steps, D, start)


def sample_exit_uniform_start(scheme: IncrementScheme, D: Ball, inner: Ball,
                              rng: np.random.Generator, n_paths: int,
                              max_steps: int = DEFAULT_MAX_STEPS,
                              eps_cut: float = None) -> ExitSample:
    """Exits from D with start points uniform in the ball ``inner``.

    Averages over a ball of x -> E^x[g(X_tau)] are plain means over this
    sample.  ``start`` of the result holds the drawn start points.
    """
    d = scheme.model.d
    if not D.distance_to_center(inner.center) + inner.radius < D.radius:
        raise PreconditionError("inner ball must lie strictly inside D")
    g = rng.standard_normal((n_paths, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = inner.radius * rng.random(n_paths) ** (1.0 / d)
    starts = inner.center + r[:, None] * g
    pos, times, steps = _run_exits(scheme, D, starts, rng, max_steps, eps_cut)
    return ExitSample(pos, times, steps, D, starts)


def exits_from_many(scheme, D: Ball, starts, seed: int, n_paths: int, task: int = 0,
                    **kw) -> list:
    """One ExitSample per start point, each from its own seeded stream."""
    return [sample_exit(scheme, D, s, task_rng(seed, task, i), n_paths, **kw)
            for i, s in enumerate(np.atleast_2d(starts))]


def sample_exit_coupled(scheme: IncrementScheme, D: Ball, starts, rng: np.random.Generator,
                        n_paths: int, max_steps: int = DEFAULT_MAX_STEPS,
                        eps_cut: float = None, with_pre: bool = False):
    """Exit positions of translated copies x_i + S of shared paths S.

    Returns an array (n_paths, k, d).  Each copy is a path of the process
    started at x_i, so per-node means are unbiased, while differences
    between nearby nodes have far less noise than with independent paths.
    With ``with_pre`` the positions just before the exiting jump are
    returned as well (NaN for the rare exits by the Gaussian part).
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    if np.any(D.distance_to_center(starts) >= D.radius):
        raise PreconditionError("start points must lie strictly inside the ball")
    base = np.zeros((n_paths, starts.shape[1]))
    pos, _, _, pre = _run_exits(scheme, D, base, rng, max_steps, eps_cut, offsets=starts,
                                with_pre=True)
    return (pos, pre) if with_pre else pos


def _run_exits(scheme, D, starts, rng, max_steps=DEFAULT_MAX_STEPS, eps_cut=None,
               offsets=None, with_pre=False):
    """Advance shared paths S (one per row of ``starts``) carrying copies S + offset.

    Returns exit positions (n, k, d) and times (n, k) per copy, or (n, d)
    and (n,) when no offsets are given, plus the step count per path.
    """
    model = scheme.model
    d, a = model.d, model.alpha
    eps_cut = scheme.eps_cut if eps_cut is None else float(eps_cut)
    # Gaussian factor and jump rate per unit eps^(2-alpha) and eps^(-alpha)
    chol1 = np.linalg.cholesky(scheme.gauss_cov / scheme.eps_cut ** (2.0 - a)
                               + 1e-300 * np.eye(d))
    rate1 = scheme.big_jump_rate * scheme.eps_cut ** a
    single = offsets is None
    off = np.zeros((1, d)) if single else np.asarray(offsets, dtype=float)
    k = len(off)
    c, R = D.center, D.radius

    n_paths = len(starts)
    S = np.array(starts, dtype=float)
    out_pos = np.zeros((n_paths, k, d))
    out_time = np.zeros((n_paths, k))
    out_pre = np.full((n_paths, k, d), np.nan) if with_pre else None
    inside = np.ones((n_paths, k), dtype=bool)
    times = np.zeros(n_paths)
    steps = np.zeros(n_paths, dtype=np.int64)
    alive = np.arange(n_paths)
    for _ in range(max_steps):
        if not len(alive):
            break
        x = S[alive]
        live = inside[alive]
        n = len(alive)
        dist = R - np.linalg.norm(x[:, None, :] + off - c, axis=2)
        dmin = np.where(live, dist, np.inf).min(axis=1)
        dt = (0.25 * dmin) ** a / model.phi_max
        eps = np.minimum(eps_cut, 0.25 * dmin)
        gauss = np.sqrt(dt * eps ** (2.0 - a))[:, None] * (rng.standard_normal((n, d)) @ chol1.T)
        frac = np.ones(n)
        before = np.full((n, d), np.nan)
        counts = rng.poisson(dt * rate1 * eps ** (-a))
        total = int(counts.sum())
        if total:
            seg = np.repeat(np.arange(n), counts)
            radii = eps[seg] * (1.0 - rng.random(total)) ** (-1.0 / a)
            jumps = radii[:, None] * scheme.directions.sample(rng, total)
            # jump epochs inside the step, increasing within each path
            u = rng.random(total)
            u = u[np.lexsort((u, seg))]
            csum = np.cumsum(jumps, axis=0)
            first_jump = np.cumsum(counts) - counts
            has = counts > 0
            offset = np.zeros((n, d))
            offset[has] = csum[first_jump[has]] - jumps[first_jump[has]]
            path_pos = x[seg] + csum - offset[seg]
            # The step ends early at a jump that takes a live copy out or
            # halves its distance to the boundary; dt and eps are then refreshed.
            new_dist = R - np.linalg.norm(path_pos[:, None, :] + off - c, axis=2)
            near = (new_dist < 0.5 * dist[seg]) & live[seg]
            first = _segment_first(near.any(axis=1), seg, n)
            stop = first >= 0
            run = has & ~stop
            x[stop] = path_pos[first[stop]]
            before[stop] = x[stop] - jumps[first[stop]]
            frac[stop] = u[first[stop]]
            x[run] = path_pos[(first_jump + counts - 1)[run]]
        x += np.sqrt(frac)[:, None] * gauss
        t_new = times[alive] + frac * dt
        copies = x[:, None, :] + off
        gone = live & (np.linalg.norm(copies - c, axis=2) > R)
        pi, ci = np.nonzero(gone)
        out_pos[alive[pi], ci] = copies[pi, ci]
        out_time[alive[pi], ci] = t_new[pi]
        if with_pre:
            # a copy exits by the stopping jump when the jump alone takes it out
            landed = np.linalg.norm(x[pi] - np.sqrt(frac[pi])[:, None] * gauss[pi]
                                    + off[ci] - c, axis=1) > R
            ok = landed & ~np.isnan(before[pi, 0])
            out_pre[alive[pi[ok]], ci[ok]] = before[pi[ok]] + off[ci[ok]]
        inside[alive] = live & ~gone
        S[alive] = x
        times[alive] = t_new
        steps[alive] += 1
        alive = alive[inside[alive].any(axis=1)]
    if len(alive):
        raise BudgetExceeded(f"{len(alive)} of {n_paths} paths still inside after "
                             f"{max_steps} steps (ball radius {R})")
    if single:
        return out_pos[:, 0], out_time[:, 0], steps
    if with_pre:
        return out_pos, out_time, steps, out_pre
    return out_pos, out_time, steps


# ---------------------------------------------------------------------------
# isotropic oracles


def _kernel_mass(alpha: float, d: int, r: float, a: float) -> float:
    """Integral over |y| > r of ((r^2-a^2)/(|y|^2-r^2))^{alpha/2} |x-y|^{-d}, |x| = a.

    The sphere mean of |x - y|^{-d} over |y| = rho is 1/(rho^{d-2}(rho^2-a^2)),
    which leaves a one-dimensional integral in v = rho^2 - r^2.
    """
    b = r * r - a * a
    f = lambda v: v ** (-alpha / 2) / (v + b)
    head, _ = integrate.quad(f, 0.0, b, limit=200)
    tail, _ = integrate.quad(f, b, np.inf, limit=200)
    return sphere_area(d) * 0.5 * b ** (alpha / 2) * (head + tail)


def poisson_kernel_isotropic(alpha: float, d: int, r: float, x, y) -> np.ndarray:
    """Exit density at y for the isotropic process started at x in B_r(0).

    C ((r^2-|x|^2)/(|y|^2-r^2))^{alpha/2} |x-y|^{-d}, with C chosen so
    the density integrates to one over the exterior of the ball.
    """
    x = np.asarray(x, dtype=float)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    a = float(np.linalg.norm(x))
    ry = np.linalg.norm(y, axis=1)
    if not a < r or np.any(ry <= r):
        raise PreconditionError("need |x| < r < |y|")
    C = 1.0 / _kernel_mass(alpha, d, r, a)
    return C * ((r * r - a * a) / (ry * ry - r * r)) ** (alpha / 2) \
        * np.linalg.norm(x - y, axis=1) ** (-d)


def isotropic_exit_radius_cdf(alpha: float, d: int, r: float, rho) -> np.ndarray:
    """P(|X_tau| <= rho) for exits from B_r(0) started at the centre.

    Integrates the normalized exit density over shells.  With x = 0 the
    shell density in s = |y| is C (r^2/(s^2-r^2))^{alpha/2} / s, and
    w = 1 - r^2/s^2 turns it into w^{-alpha/2} (1-w)^{alpha/2-1} on [0, 1),
    both endpoint singularities being handled by algebraic-weight rules.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    k = 0.5 * sphere_area(d) / _kernel_mass(alpha, d, r, 0.0)
    a2 = alpha / 2
    out = np.zeros_like(rho)
    for i, p in enumerate(rho):
        if p <= r:
            continue
        w = 1.0 - (r / p) ** 2
        if w <= 0.5:
            val, _ = integrate.quad(lambda v: (1 - v) ** (a2 - 1), 0.0, w,
                                    weight="alg", wvar=(-a2, 0.0))
            out[i] = k * val
        else:
            val, _ = integrate.quad(lambda v: v ** (-a2), w, 1.0,
                                    weight="alg", wvar=(0.0, a2 - 1))
            out[i] = 1.0 - k * val
    return np.clip(out, 0.0, 1.0)
