"""Nonlocal functionals: tails, parabolic Riesz potentials, excess, slant ODE,
energy forms, and drift oscillation seminorms.

Tail integrals over the complement of a ball are truncated at R_max <= L/2 on
the torus and evaluated in polar coordinates: composite Gauss-Legendre panels
in radius, uniform (trapezoid) angles, with the field sampled by periodic
bilinear interpolation.  Radial grids for the parabolic potentials insert the
exact entry radii of atoms so that the piecewise-constant atom masses are
integrated in closed form between breakpoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.ndimage import map_coordinates

from .fields import (
    GridSpec,
    ScalarField,
    VectorField,
    grid_coordinates,
    torus_distance,
)
from .measures import (
    Cylinder,
    MeasureData,
    SlantPath,
    SlantedCylinder,
    cylinder_mass,
    slanted_cylinder_mass,
)
from .operators import KernelSpec, gradient

__all__ = [
    "TailOptions",
    "ExcessReport",
    "PotentialProfile",
    "tail",
    "tail_time_lq",
    "riesz_potential",
    "slanted_potential_majorant",
    "slant_ode",
    "excess",
    "energy_form",
    "bmo_seminorm",
    "ball_mask",
    "interpolate_periodic",
]


@dataclass(frozen=True)
class TailOptions:
    truncation_radius: float
    quadrature_order: int = 12


@dataclass
class ExcessReport:
    interior: float
    tail_part: float
    q: float
    cylinder: Cylinder

    @property
    def total(self) -> float:
        return self.interior + self.tail_part


@dataclass
class PotentialProfile:
    radii: np.ndarray
    masses: np.ndarray
    value: float
    order: float
    divergent: bool = False


def interpolate_periodic(f: ScalarField | np.ndarray, grid: GridSpec, points: np.ndarray) -> np.ndarray:
    """Bilinear periodic interpolation; points has shape (..., d)."""
    values = f.values if isinstance(f, ScalarField) else f
    idx = (np.asarray(points) / grid.spacing) % grid.n
    coords = [idx[..., j] for j in range(grid.d)]
    return map_coordinates(values, coords, order=1, mode="grid-wrap")


@lru_cache(maxsize=8)
def _panel_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    return leggauss(order)


def _radial_grid(r: float, R: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite GL nodes/weights on [r, R], panels split per octave."""
    xg, wg = _panel_nodes(order)
    edges = [r]
    while edges[-1] * 2.0 < R:
        edges.append(edges[-1] * 2.0)
    edges.append(R)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
        nodes.append(mid + half * xg)
        weights.append(half * wg)
    return np.concatenate(nodes), np.concatenate(weights)


def _angular_average_abs(
    field: ScalarField, center: np.ndarray, radii: np.ndarray, grid: GridSpec
) -> np.ndarray:
    """Mean of |v| over spheres of the given radii around center."""
    d = grid.d
    out = np.empty(radii.size)
    if d == 2:
        for i, rho in enumerate(radii):
            m = max(32, int(np.ceil(2.0 * np.pi * rho / grid.spacing)) * 2)
            theta = 2.0 * np.pi * np.arange(m) / m
            pts = center + rho * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
            out[i] = np.abs(interpolate_periodic(field, grid, pts)).mean()
    else:
        xg, wg = _panel_nodes(12)  # cos(theta) Gauss nodes
        for i, rho in enumerate(radii):
            m = max(16, int(np.ceil(2.0 * np.pi * rho / grid.spacing)))
            phi = 2.0 * np.pi * np.arange(m) / m
            ct = xg
            st = np.sqrt(1.0 - ct**2)
            pts = center + rho * np.stack(
                [
                    np.outer(st, np.cos(phi)),
                    np.outer(st, np.sin(phi)),
                    np.outer(ct, np.ones(m)),
                ],
                axis=-1,
            )
            vals = np.abs(interpolate_periodic(field, grid, pts))
            out[i] = (vals.mean(axis=1) * wg).sum() / 2.0
    return out


def _sphere_area(d: int) -> float:
    return 2.0 * np.pi if d == 2 else 4.0 * np.pi


def tail(v: ScalarField, x0, r: float, kernel: KernelSpec, opts: TailOptions) -> float:
    """tail(v; x0, r) = r^(2s) * integral over {r < |y-x0| < R_max} of
    |v(y)| |x0-y|^(-d-2s) dy, truncated at opts.truncation_radius."""
    grid = v.grid
    s = kernel.s
    R_max = opts.truncation_radius
    if r >= R_max:
        raise ValueError(f"tail radius r = {r} must be below R_max = {R_max}")
    if R_max > grid.domain_length / 2.0 + 1e-12:
        raise ValueError("tail truncation radius exceeds L/2")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    radii, weights = _radial_grid(r, R_max, opts.quadrature_order)
    sphere_means = _angular_average_abs(v, x0, radii, grid)
    d = grid.d
    integrand = _sphere_area(d) * radii ** (d - 1.0) * radii ** (-d - 2.0 * s) * sphere_means
    return float(r ** (2.0 * s) * (integrand * weights).sum())


def tail_time_lq(
    traj,
    x0,
    r: float,
    q: float,
    interval: tuple[float, float],
    kernel: KernelSpec,
    opts: TailOptions,
    offset: float = 0.0,
    slant: SlantPath | None = None,
    t0: float | None = None,
) -> float:
    """(time-average of tail^q over the interval)^(1/q), trapezoid in time.

    With a slant path, the tail of each slice is taken around the translated
    center x0 + r * z_r((t - t0)/r).
    """
    if q <= 1.0:
        raise ValueError("the Lq-in-time tail requires q > 1")
    t_lo, t_hi = interval
    idx = traj.window(t_lo, t_hi)
    if len(idx) < 2:
        raise ValueError("tail time average needs at least two snapshots in the interval")
    times = np.array([traj.times[i] for i in idx])
    vals = np.empty(times.size)
    for j, i in enumerate(idx):
        u = traj.snapshots[i]
        if offset:
            u = u.with_values(u.values - offset)
        center = np.atleast_1d(np.asarray(x0, dtype=float))
        if slant is not None:
            ref = t_hi if t0 is None else t0
            center = center + r * slant.at((times[j] - ref) / r)
        vals[j] = tail(u, center, r, kernel, opts)
    avg_q = np.trapezoid(vals**q, times) / (times[-1] - times[0])
    return float(avg_q ** (1.0 / q))


def riesz_potential(
    mu: MeasureData,
    t0: float,
    x0,
    R: float,
    kernel: KernelSpec,
    a: float,
    slant: SlantPath | Callable[[float], SlantPath] | None = None,
    rho_min: float | None = None,
    points_per_octave: int = 24,
) -> PotentialProfile:
    """Parabolic Riesz potential of order a via a breakpoint-aware radial sum.

    The value approximates the integral over (rho_min, R] of
    |mu|(Q_rho) * rho^(-(d+2s-a)) drho/rho.  Atom entry radii are inserted as
    exact breakpoints so purely atomic measures integrate in closed form; a
    positive mass already present at rho_min marks the profile divergent and
    the value is reported as +inf.
    """
    d = mu.atom_positions.shape[-1] if mu.num_atoms else (
        mu.density.grid.d if mu.density is not None else 2
    )
    s = kernel.s
    beta = d + 2.0 * s - a
    if not 0.0 < a < d + 2.0 * s:
        raise ValueError(f"potential order must lie in (0, d+2s), got {a}")
    if rho_min is None:
        rho_min = 1e-4 * R
    length = mu.domain_length
    if length is None:
        raise ValueError("measure needs a domain length for torus geometry")

    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    def path_for(rho: float) -> SlantPath | None:
        if slant is None:
            return None
        return slant(rho) if callable(slant) else slant

    def mass_at(rho: float) -> float:
        Q = Cylinder(t0, tuple(x0), rho, s)
        p = path_for(rho)
        if p is None:
            return cylinder_mass(mu, Q)
        return slanted_cylinder_mass(mu, SlantedCylinder(Q, p))

    # Radial grid: log-spaced plus exact atom breakpoints (straight case only).
    n_log = max(8, int(np.ceil(points_per_octave * np.log2(R / rho_min))))
    radii = np.geomspace(rho_min, R, n_log)
    if mu.num_atoms and slant is None:
        dt_atoms = t0 - mu.atom_times
        dist = torus_distance(mu.atom_positions, x0, length)
        valid = dt_atoms > 0
        entry = np.maximum(
            np.where(valid, dt_atoms, np.inf) ** (1.0 / (2.0 * s)), dist
        )
        entry = entry[valid & (entry > rho_min) & (entry < R)]
        radii = np.unique(np.concatenate([radii, entry]))
    masses = np.array([mass_at(rho) for rho in radii])

    # atoms already inside the smallest cylinder make the integral diverge;
    # a density contributes mass ~ rho^(d+2s) there and stays integrable
    if mu.num_atoms:
        dt_atoms = t0 - mu.atom_times
        dist = torus_distance(mu.atom_positions, x0, length)
        entry = np.maximum(
            np.where(dt_atoms > 0, dt_atoms, np.inf) ** (1.0 / (2.0 * s)), dist
        )
        if np.any((dt_atoms > 0) & (entry <= rho_min)):
            return PotentialProfile(radii, masses, np.inf, a, divergent=True)

    # Per-interval closed-form weight times the geometric-midpoint mass.
    lo, hi = radii[:-1], radii[1:]
    mid_mass = np.array([mass_at(np.sqrt(l * h)) for l, h in zip(lo, hi)])
    weights = (lo ** (-beta) - hi ** (-beta)) / beta
    value = float((mid_mass * weights).sum())
    # head below rho_min under the density scaling law mass ~ rho^(d+2s)
    head_mass = float(masses[0])
    if head_mass > 0.0:
        value += head_mass * rho_min ** (-beta) / a
    return PotentialProfile(radii, masses, value, a)


def slanted_potential_majorant(
    mu: MeasureData,
    t0: float,
    x0,
    R: float,
    C1: float,
    C2: float,
    c: float,
    kernel: KernelSpec,
    rho_min: float | None = None,
    points_per_octave: int = 24,
) -> float:
    """Straight-cylinder majorant of the slanted potential with dilated balls
    B_f(rho), f(rho) = c * rho * (C1 + C2 |log rho|)."""
    if C1 <= 0 or C2 < 0 or c <= 0:
        raise ValueError("majorant constants must be positive")
    length = mu.domain_length
    if length is None:
        raise ValueError("measure needs a domain length")
    s = kernel.s
    d = mu.atom_positions.shape[-1] if mu.num_atoms else (
        mu.density.grid.d if mu.density is not None else 2
    )
    if rho_min is None:
        rho_min = 1e-4 * R
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    def f(rho: float) -> float:
        return c * rho * (C1 + C2 * abs(np.log(rho)))

    check = np.geomspace(rho_min, R, 64)
    if max(f(r) for r in check) > length / 2.0:
        raise ValueError("dilated ball radius exceeds L/2 inside the integration range")

    def mass_at(rho: float) -> float:
        total = 0.0
        if mu.num_atoms:
            in_time = (mu.atom_times > t0 - rho ** (2.0 * s)) & (mu.atom_times < t0)
            dist = torus_distance(mu.atom_positions, x0, length)
            total += float(np.abs(mu.atom_masses[in_time & (dist < f(rho))]).sum())
        if mu.density is not None:
            coords = np.stack(grid_coordinates(mu.density.grid), axis=-1)
            dist = torus_distance(coords, x0, length)
            mask = dist < f(rho)
            total += mu.density.windowed_spatial_mass(
                t0 - rho ** (2.0 * s), t0, lambda t: mask
            )
        return total

    n_log = max(8, int(np.ceil(points_per_octave * np.log2(R / rho_min))))
    radii = np.geomspace(rho_min, R, n_log)
    lo, hi = radii[:-1], radii[1:]
    mid_mass = np.array([mass_at(np.sqrt(l * h)) for l, h in zip(lo, hi)])
    weights = (lo ** (-d) - hi ** (-d)) / d
    return float((mid_mass * weights).sum())


@lru_cache(maxsize=4)
def _disk_quadrature(d: int, n_rad: int = 8, n_ang: int = 16):
    """Points/weights averaging a function over the unit ball."""
    xg, wg = leggauss(n_rad)
    u = 0.5 * (xg + 1.0)  # radius^d variable on [0, 1]
    w_rad = 0.5 * wg
    if d == 2:
        rho = np.sqrt(u)
        theta = 2.0 * np.pi * (np.arange(n_ang) + 0.5) / n_ang
        pts = np.stack(
            [
                np.outer(rho, np.cos(theta)).ravel(),
                np.outer(rho, np.sin(theta)).ravel(),
            ],
            axis=-1,
        )
        wts = np.repeat(w_rad / n_ang, n_ang)
        return pts, wts
    rho = u ** (1.0 / 3.0)
    ct, wct = leggauss(n_rad)
    phi = 2.0 * np.pi * (np.arange(n_ang) + 0.5) / n_ang
    st = np.sqrt(1.0 - ct**2)
    pts, wts = [], []
    for i, r in enumerate(rho):
        for j in range(n_rad):
            for p in phi:
                pts.append([r * st[j] * np.cos(p), r * st[j] * np.sin(p), r * ct[j]])
                wts.append(w_rad[i] * (wct[j] / 2.0) / n_ang)
    return np.array(pts), np.array(wts)


def slant_ode(
    b,
    r: float,
    t0: float = 0.0,
    x0=None,
    num_steps: int = 64,
) -> SlantPath:
    """Backward RK4 integration of the ball-averaged drift ODE on [-1, 0].

    ``b`` is an autonomous VectorField or a callable t -> VectorField.  The
    right-hand side at rescaled time t is the average of b(t0 + r t, .) over
    the ball of radius r centered at x0 + r z(t).
    """
    if not 0.0 < r <= 1.0:
        raise ValueError("slant scale must lie in (0, 1]")
    b0 = b(t0) if callable(b) else b
    grid = b0.grid
    d = grid.d
    if x0 is None:
        x0 = np.zeros(d)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    pts_unit, wts = _disk_quadrature(d)

    def drift_at(t_phys: float) -> VectorField:
        if callable(b):
            return b(t_phys)
        return b

    def rhs(t: float, z: np.ndarray) -> np.ndarray:
        bf = drift_at(t0 + r * t)
        centers = x0 + r * z
        pts = centers + r * pts_unit
        return np.array(
            [
                float((interpolate_periodic(c, grid, pts) * wts).sum())
                for c in bf.components
            ]
        )

    h = -1.0 / num_steps
    times = [0.0]
    zs = [np.zeros(d)]
    derivs = [rhs(0.0, zs[0])]
    t, z = 0.0, zs[0]
    for _ in range(num_steps):
        k1 = rhs(t, z)
        k2 = rhs(t + h / 2.0, z + h / 2.0 * k1)
        k3 = rhs(t + h / 2.0, z + h / 2.0 * k2)
        k4 = rhs(t + h, z + h * k3)
        z = z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t + h
        times.append(t)
        zs.append(z)
        derivs.append(rhs(t, z))
    times = np.array(times[::-1])
    samples = np.array(zs[::-1])
    derivs = np.array(derivs[::-1])
    sup_z = float(np.abs(np.linalg.norm(samples, axis=1)).max())
    sup_dz = float(np.abs(np.linalg.norm(derivs, axis=1)).max())
    return SlantPath(r, times, samples, sup_z + sup_dz)


def ball_mask(grid: GridSpec, center, radius: float) -> np.ndarray:
    coords = np.stack(grid_coordinates(grid), axis=-1)
    return torus_distance(coords, np.atleast_1d(np.asarray(center, dtype=float)), grid.domain_length) < radius


def excess(
    traj,
    t0: float,
    x0,
    r: float,
    q: float,
    kernel: KernelSpec,
    opts: TailOptions,
    slant: SlantPath | None = None,
) -> ExcessReport:
    """Interior oscillation plus weighted tail of the recentered solution."""
    s = kernel.s
    Q = Cylinder(t0, tuple(np.atleast_1d(x0)), r, s)
    idx = traj.window(Q.t_start, Q.t0)
    if len(idx) < 2:
        raise ValueError("cylinder not resolved by the trajectory snapshots")
    grid = traj.grid
    times = np.array([traj.times[i] for i in idx])
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    def center_at(t: float) -> np.ndarray:
        if slant is None:
            return x0
        return x0 + r * slant.at((t - t0) / r)

    ball_means = np.empty(times.size)
    masks = []
    for j, i in enumerate(idx):
        mask = ball_mask(grid, center_at(times[j]), r)
        masks.append(mask)
        ball_means[j] = traj.snapshots[i].values[mask].mean()
    span = times[-1] - times[0]
    mean_Q = float(np.trapezoid(ball_means, times) / span)

    osc = np.empty(times.size)
    for j, i in enumerate(idx):
        osc[j] = np.abs(traj.snapshots[i].values[masks[j]] - mean_Q).mean()
    interior = float((np.trapezoid(osc**q, times) / span) ** (1.0 / q))

    tails = np.empty(times.size)
    for j, i in enumerate(idx):
        u = traj.snapshots[i]
        tails[j] = tail(
            u.with_values(u.values - mean_Q), center_at(times[j]), r, kernel, opts
        )
    tail_part = float((np.trapezoid(tails**q, times) / span) ** (1.0 / q))
    return ExcessReport(interior, tail_part, q, Q)


@lru_cache(maxsize=16)
def _touching_pair_integrals(d: int, beta: float, m: int = 48) -> dict:
    """Dimensionless unit-cell pair integrals of |x - y|^(-beta) for the
    self pair and touching-neighbor offsets, by midpoint subsampling with a
    self-similar correction for the coincident subcell pairs."""
    ax = (np.arange(m) + 0.5) / m
    pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
    out = {}
    offsets = [off for off in np.ndindex(*([3] * d))]
    for off in offsets:
        shift = np.array(off) - 1
        if np.abs(shift).max() > 1:
            continue
        delta = pts[None, :, :] + shift[None, None, :] - pts[:, None, :]
        dist = np.sqrt((delta**2).sum(axis=-1))
        if np.all(shift == 0):
            nz = dist > 0
            total = (dist[nz] ** (-beta)).sum() / m ** (2 * d)
            # coincident subcell pairs contribute m^(beta-d) times the whole
            # integral by self-similarity, so solve for it
            out[tuple(shift)] = total / (1.0 - float(m) ** (beta - d))
        else:
            out[tuple(shift)] = (dist ** (-beta)).sum() / m ** (2 * d)
    return out


def energy_form(
    w: ScalarField, center, radius: float, kernel: KernelSpec
) -> float:
    """Localized energy: double integral over B x B of
    (w(x) - w(y))^2 |x - y|^(-d-2s), cell-midpoint quadrature with a
    gradient-based local model on cells touching the diagonal."""
    grid = w.grid
    if radius > grid.domain_length / 2.0:
        raise ValueError("ball must fit in the torus")
    d, s = grid.d, kernel.s
    beta = d + 2.0 * s
    h = grid.spacing
    mask = ball_mask(grid, center, radius)
    idx = np.argwhere(mask)
    if idx.size == 0:
        return 0.0
    coords = idx * h
    vals = w.values[mask]
    pair_ints = _touching_pair_integrals(d, beta - 2.0)
    grads = gradient(w)
    grad2 = sum(g**2 for g in grads)[mask]
    near_scale = h ** (2 * d) * h ** (2.0 - beta)

    total = 0.0
    block = 256
    for start in range(0, len(coords), block):
        sl = slice(start, start + block)
        delta = coords[None, :, :] - coords[sl, None, :]
        delta -= grid.domain_length * np.round(delta / grid.domain_length)
        dist2 = (delta**2).sum(axis=-1)
        touching = (np.abs(delta).max(axis=-1) <= h * 1.5)
        far = ~touching
        diff2 = (vals[None, :] - vals[sl, None]) ** 2
        total += float((diff2[far] * dist2[far] ** (-beta / 2.0)).sum()) * h ** (2 * d)
        # touching pairs: |w(x)-w(y)|^2 ~ |grad w(x)|^2 |x-y|^2
        bi, bj = np.nonzero(touching)
        offs = np.round(delta[bi, bj] / h).astype(int) + 1
        lut = np.zeros((3,) * d)
        for off, val in pair_ints.items():
            lut[tuple(np.array(off) + 1)] = val
        total += float(
            (grad2[start + bi] * lut[tuple(offs[:, j] for j in range(d))]).sum()
        ) * near_scale
    return float(total)


def bmo_seminorm(
    b: VectorField, scales: list[float], center_stride: int = 4
) -> tuple[float, float]:
    """(C1, C2) estimates: sup of unit-ball means of |b| and sup over balls of
    the mean oscillation of b."""
    grid = b.grid
    for r in scales:
        if not grid.spacing < r <= grid.domain_length / 2.0:
            raise ValueError(f"scale {r} outside (spacing, L/2]")
    speed = np.sqrt(sum(c.values**2 for c in b.components))
    comp_vals = [c.values for c in b.components]
    centers = [
        tuple(i * center_stride * grid.spacing for i in idx)
        for idx in np.ndindex(*([grid.n // center_stride] * grid.d))
    ]

    c1 = 0.0
    if grid.domain_length > 2.0:
        for ct in centers:
            m = ball_mask(grid, ct, 1.0)
            c1 = max(c1, float(speed[m].mean()))
    else:
        c1 = float(speed.mean())

    c2 = 0.0
    for r in scales:
        for ct in centers:
            m = ball_mask(grid, ct, r)
            means = [v[m].mean() for v in comp_vals]
            osc = np.sqrt(
                sum((v[m] - mu) ** 2 for v, mu in zip(comp_vals, means))
            ).mean()
            c2 = max(c2, float(osc))
    return c1, c2
