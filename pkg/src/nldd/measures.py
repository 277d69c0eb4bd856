"""Finite space-time measures and the parabolic cylinders that slice them.

A measure is a finite list of atoms (t_i, x_i, m_i) plus an optional
time-indexed density.  All geometry is periodic: ball membership uses the
minimum-image torus distance, and the time interval of the backward cylinder
Q_r(t0, x0) = (t0 - r^(2s), t0) x B_r(x0) is open at both ends.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import GridSpec, ScalarField, grid_coordinates, torus_distance

__all__ = [
    "MeasureData",
    "DensityTrack",
    "Cylinder",
    "SlantPath",
    "SlantedCylinder",
    "cylinder_mass",
    "slanted_cylinder_mass",
    "restrict",
]


@dataclass
class DensityTrack:
    """|rho| sampled on a grid at increasing times; d mu = rho dx dt."""

    grid: GridSpec
    times: np.ndarray
    values: list[np.ndarray]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("density times must be strictly increasing")
        if len(self.values) != self.times.size:
            raise ValueError("one density slice per time is required")
        self.values = [np.asarray(v, dtype=float).reshape(self.grid.shape) for v in self.values]

    def sample(self, t: float) -> np.ndarray:
        """Piecewise-linear interpolation in time, zero outside the track."""
        ts = self.times
        if t < ts[0] or t > ts[-1]:
            return np.zeros(self.grid.shape)
        i = int(np.searchsorted(ts, t, side="right") - 1)
        if i >= ts.size - 1:
            return self.values[-1].copy()
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]

    def total_mass(self) -> float:
        if self.times.size < 2:
            return 0.0
        slice_masses = np.array(
            [np.abs(v).sum() * self.grid.cell_volume for v in self.values]
        )
        return float(np.trapezoid(slice_masses, self.times))

    def windowed_spatial_mass(self, t0: float, t1: float, mask_fn) -> float:
        """Integral of |rho| over (t0, t1) x {mask}, trapezoid in time.

        ``mask_fn(t)`` returns a boolean array selecting cells at time t.
        """
        lo, hi = max(t0, self.times[0]), min(t1, self.times[-1])
        if hi <= lo:
            return 0.0
        interior = self.times[(self.times > lo) & (self.times < hi)]
        ts = np.concatenate(([lo], interior, [hi]))
        vals = np.array(
            [
                (np.abs(self.sample(t)) * mask_fn(t)).sum() * self.grid.cell_volume
                for t in ts
            ]
        )
        return float(np.trapezoid(vals, ts))


@dataclass
class MeasureData:
    """Atoms plus optional density; total variation is what the potentials use."""

    atom_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    atom_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    atom_masses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    density: DensityTrack | None = None
    domain_length: float | None = None

    def __post_init__(self):
        self.atom_times = np.asarray(self.atom_times, dtype=float).reshape(-1)
        self.atom_masses = np.asarray(self.atom_masses, dtype=float).reshape(-1)
        self.atom_positions = np.atleast_2d(np.asarray(self.atom_positions, dtype=float))
        if self.atom_times.size == 0:
            self.atom_positions = self.atom_positions.reshape(0, self.atom_positions.shape[-1])
        if not (self.atom_times.size == self.atom_masses.size == len(self.atom_positions)):
            raise ValueError("atom arrays must have matching lengths")
        length = self.domain_length
        if length is None and self.density is not None:
            length = self.density.grid.domain_length
            self.domain_length = length
        if length is not None and self.atom_times.size:
            self.atom_positions = np.mod(self.atom_positions, length)
        if not np.all(np.isfinite(self.atom_masses)):
            raise ValueError("atom masses must be finite")

    @classmethod
    def from_atoms(cls, atoms, domain_length: float | None = None) -> "MeasureData":
        """atoms: iterable of (t, x, mass) with x a point."""
        atoms = list(atoms)
        if not atoms:
            return cls(domain_length=domain_length)
        return cls(
            atom_times=np.array([a[0] for a in atoms]),
            atom_positions=np.array([np.atleast_1d(a[1]) for a in atoms]),
            atom_masses=np.array([a[2] for a in atoms]),
            domain_length=domain_length,
        )

    @classmethod
    def empty(cls, domain_length: float | None = None) -> "MeasureData":
        return cls(domain_length=domain_length)

    @property
    def num_atoms(self) -> int:
        return self.atom_times.size

    @property
    def total_mass(self) -> float:
        total = float(np.abs(self.atom_masses).sum())
        if self.density is not None:
            total += self.density.total_mass()
        return total

    def scaled(self, factor: float) -> "MeasureData":
        density = self.density
        if density is not None:
            density = DensityTrack(
                density.grid, density.times.copy(), [abs(factor) * v for v in density.values]
            )
        return MeasureData(
            self.atom_times.copy(),
            self.atom_positions.copy(),
            factor * self.atom_masses,
            density,
            self.domain_length,
        )


@dataclass(frozen=True)
class Cylinder:
    """Backward parabolic cylinder Q_r(t0, x0) with time depth r^(2s)."""

    t0: float
    x0: tuple[float, ...]
    r: float
    s: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("cylinder radius must be positive")
        object.__setattr__(self, "x0", tuple(float(c) for c in np.atleast_1d(self.x0)))

    @property
    def time_depth(self) -> float:
        return self.r ** (2.0 * self.s)

    @property
    def t_start(self) -> float:
        return self.t0 - self.time_depth

    def with_radius(self, r: float) -> "Cylinder":
        return Cylinder(self.t0, self.x0, r, self.s)


@dataclass
class SlantPath:
    """Sampled solution z_r of the drift-averaging ODE on [-1, 0]."""

    r: float
    times: np.ndarray
    samples: np.ndarray  # shape (nt, d)
    c1_norm: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[0] != self.times.size:
            raise ValueError("one path sample per time node is required")
        at_zero = self.samples[np.argmin(np.abs(self.times))]
        if np.abs(at_zero).max() > 1e-10:
            raise ValueError("slant path must vanish at t = 0")

    @classmethod
    def zero(cls, r: float, d: int = 2, num: int = 33) -> "SlantPath":
        ts = np.linspace(-1.0, 0.0, num)
        return cls(r, ts, np.zeros((num, d)), 0.0)

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation of z_r at rescaled time t in [-1, 0]."""
        t = float(np.clip(t, self.times.min(), self.times.max()))
        out = np.empty(self.samples.shape[1])
        for j in range(self.samples.shape[1]):
            out[j] = np.interp(t, self.times, self.samples[:, j])
        return out


@dataclass
class SlantedCylinder:
    """Cylinder whose spatial section rides along r * z_r(t / r)."""

    base: Cylinder
    path: SlantPath

    def center_at(self, t: float) -> np.ndarray:
        r = self.base.r
        return np.asarray(self.base.x0) + r * self.path.at((t - self.base.t0) / r)


def _atoms_in_cylinder(mu: MeasureData, Q: Cylinder, length: float) -> np.ndarray:
    if mu.num_atoms == 0:
        return np.zeros(0, dtype=bool)
    in_time = (mu.atom_times > Q.t_start) & (mu.atom_times < Q.t0)
    dist = torus_distance(mu.atom_positions, np.asarray(Q.x0), length)
    return in_time & (dist < Q.r)


def _require_length(mu: MeasureData) -> float:
    if mu.domain_length is None:
        raise ValueError("measure has no domain length; set it to fix the torus period")
    return mu.domain_length


def cylinder_mass(mu: MeasureData, Q: Cylinder) -> float:
    """|mu|(Q): atom masses in the open cylinder plus the density integral."""
    length = _require_length(mu)
    total = 0.0
    if mu.num_atoms:
        sel = _atoms_in_cylinder(mu, Q, length)
        total += float(np.abs(mu.atom_masses[sel]).sum())
    if mu.density is not None:
        coords = np.stack(grid_coordinates(mu.density.grid), axis=-1)
        dist = torus_distance(coords, np.asarray(Q.x0), length)
        mask = dist < Q.r
        total += mu.density.windowed_spatial_mass(Q.t_start, Q.t0, lambda t: mask)
    return total


def slanted_cylinder_mass(mu: MeasureData, Qs: SlantedCylinder) -> float:
    """As cylinder_mass, with the ball center translated along the slant path."""
    length = _require_length(mu)
    Q = Qs.base
    if Qs.path.times.min() > -1.0 + 1e-12:
        raise ValueError("slant path does not cover the cylinder time interval")
    total = 0.0
    if mu.num_atoms:
        in_time = (mu.atom_times > Q.t_start) & (mu.atom_times < Q.t0)
        for i in np.flatnonzero(in_time):
            center = Qs.center_at(mu.atom_times[i])
            if torus_distance(mu.atom_positions[i], center, length) < Q.r:
                total += abs(float(mu.atom_masses[i]))
    if mu.density is not None:
        coords = np.stack(grid_coordinates(mu.density.grid), axis=-1)

        def mask_fn(t):
            return torus_distance(coords, Qs.center_at(t), length) < Q.r

        total += mu.density.windowed_spatial_mass(Q.t_start, Q.t0, mask_fn)
    return total


def restrict(mu: MeasureData, t_interval: tuple[float, float], box: tuple) -> MeasureData:
    """Keep only mass inside [t0, t1] x box; box is ((lo_i, hi_i) per axis)."""
    t_lo, t_hi = t_interval
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    keep = np.ones(mu.num_atoms, dtype=bool)
    if mu.num_atoms:
        keep &= (mu.atom_times >= t_lo) & (mu.atom_times <= t_hi)
        keep &= np.all((mu.atom_positions >= lo) & (mu.atom_positions <= hi), axis=1)
    density = mu.density
    if density is not None:
        coords = np.stack(grid_coordinates(density.grid), axis=-1)
        space_mask = np.all((coords >= lo) & (coords <= hi), axis=-1)
        kept_values = []
        for t, v in zip(density.times, density.values):
            inside_t = t_lo <= t <= t_hi
            kept_values.append(v * space_mask if inside_t else np.zeros_like(v))
        density = DensityTrack(density.grid, density.times.copy(), kept_values)
    return MeasureData(
        mu.atom_times[keep],
        mu.atom_positions[keep] if mu.num_atoms else mu.atom_positions,
        mu.atom_masses[keep],
        density,
        mu.domain_length,
    )
