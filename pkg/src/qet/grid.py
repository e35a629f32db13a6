"""Discretized (1+1)D spacetime lattice and event wavefunctions.

The lattice carries a uniform (t, x) grid together with its discrete-Fourier
dual (E, p) grid.  Event wavefunctions live on the lattice in either the
spacetime or the energy-momentum representation; the two are connected by a
unitary transform with synthesis kernel exp(-i(Et - px)/hbar).

The x axis is treated as periodic (spectral momentum is exact on the grid);
the t axis is a finite window.  The energy representation is the DFT of the
t axis, so non-smooth time profiles suffer the usual spectral leakage.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

TWO_PI = 2.0 * np.pi

SPACETIME = "spacetime"
ENERGY_MOMENTUM = "energy-momentum"


class GridError(ValueError):
    """Invalid lattice parameters or mismatched lattices."""


class RepresentationError(ValueError):
    """Operation applied to a wavefunction in the wrong representation."""


@dataclass(frozen=True)
class SpacetimeGrid:
    """Uniform (t, x) lattice with its (E, p) dual grid.

    Cell i of the time axis covers [t_i, t_i + dt) with t_i = t_min + i*dt,
    dt = (t_max - t_min)/n_t; same layout for x.  Dual frequencies are the
    DFT frequencies scaled by hbar, reported in ascending order.
    """

    t_min: float
    t_max: float
    n_t: int
    x_min: float
    x_max: float
    n_x: int
    hbar: float = 1.0

    def __post_init__(self):
        if self.n_t < 2 or self.n_x < 2:
            raise GridError(f"need n_t, n_x >= 2, got n_t={self.n_t}, n_x={self.n_x}")
        if not (self.t_max > self.t_min):
            raise GridError(f"need t_max > t_min, got [{self.t_min}, {self.t_max}]")
        if not (self.x_max > self.x_min):
            raise GridError(f"need x_max > x_min, got [{self.x_min}, {self.x_max}]")
        if not (self.hbar > 0):
            raise GridError(f"need hbar > 0, got {self.hbar}")

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / self.n_t

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def d_energy(self) -> float:
        return TWO_PI * self.hbar / (self.n_t * self.dt)

    @property
    def d_momentum(self) -> float:
        return TWO_PI * self.hbar / (self.n_x * self.dx)

    @property
    def times(self) -> np.ndarray:
        return self.t_min + self.dt * np.arange(self.n_t)

    @property
    def xs(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_x)

    @property
    def energies(self) -> np.ndarray:
        """Dual energies, ascending (fftshift of 2*pi*hbar*fftfreq)."""
        return np.fft.fftshift(TWO_PI * self.hbar * np.fft.fftfreq(self.n_t, self.dt))

    @property
    def momenta(self) -> np.ndarray:
        """Dual momenta, ascending."""
        return np.fft.fftshift(TWO_PI * self.hbar * np.fft.fftfreq(self.n_x, self.dx))

    def shape(self) -> tuple[int, int]:
        return (self.n_t, self.n_x)

    def weight(self, representation: str) -> float:
        """Quadrature weight of one lattice cell in the given representation."""
        if representation == SPACETIME:
            return self.dt * self.dx
        if representation == ENERGY_MOMENTUM:
            return self.d_energy * self.d_momentum
        raise RepresentationError(f"unknown representation {representation!r}")

    def time_index(self, t: float, tol: float = 1e-9) -> int:
        """Index of the grid time equal to t; error if t is off-grid."""
        i = int(round((t - self.t_min) / self.dt))
        if i < 0 or i >= self.n_t or abs(self.t_min + i * self.dt - t) > tol * max(1.0, abs(t)):
            raise GridError(f"time {t} is not on the grid")
        return i


def make_grid(t_min, t_max, n_t, x_min, x_max, n_x, hbar=1.0) -> SpacetimeGrid:
    return SpacetimeGrid(float(t_min), float(t_max), int(n_t),
                         float(x_min), float(x_max), int(n_x), float(hbar))


@dataclass(frozen=True)
class EventWavefunction:
    """Complex field on the lattice, representing one detection event.

    `improper` marks non-normalizable fields (sharp-time slices, plane waves)
    for which unit-norm checks do not apply.
    """

    grid: SpacetimeGrid
    values: np.ndarray
    representation: str = SPACETIME
    improper: bool = False

    def __post_init__(self):
        if self.values.shape != self.grid.shape():
            raise GridError(f"field shape {self.values.shape} does not match "
                            f"grid shape {self.grid.shape()}")
        if self.representation not in (SPACETIME, ENERGY_MOMENTUM):
            raise RepresentationError(f"unknown representation {self.representation!r}")

    def norm(self) -> float:
        w = self.grid.weight(self.representation)
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * w))


def inner_product(psi: EventWavefunction, phi: EventWavefunction) -> complex:
    """<psi|phi>, conjugate-linear in the first argument."""
    if psi.grid != phi.grid:
        raise GridError("inner product between wavefunctions on different grids")
    if psi.representation != phi.representation:
        raise RepresentationError("inner product across representations")
    w = psi.grid.weight(psi.representation)
    return complex(np.sum(np.conj(psi.values) * phi.values) * w)


def gaussian_event(grid: SpacetimeGrid, t0: float, sigma_t: float,
                   x0: float, sigma_x: float, E0: float = 0.0, p0: float = 0.0,
                   mass_tol: float = 1e-6) -> EventWavefunction:
    """Normalized Gaussian envelope with a plane-wave carrier.

    The envelope is exp(-(t-t0)^2/(4 sigma_t^2) - (x-x0)^2/(4 sigma_x^2)), so
    the |Psi|^2 standard deviations are exactly sigma_t and sigma_x.  Raises
    if more than `mass_tol` of the analytic mass falls outside the grid.
    """
    if sigma_t <= 0 or sigma_x <= 0:
        raise GridError("gaussian widths must be positive")
    t = grid.times[:, None]
    x = grid.xs[None, :]
    hbar = grid.hbar
    env = np.exp(-((t - t0) ** 2) / (4 * sigma_t ** 2)
                 - ((x - x0) ** 2) / (4 * sigma_x ** 2))
    mass_on_grid = np.sum(env ** 2) * grid.dt * grid.dx
    mass_analytic = TWO_PI * sigma_t * sigma_x
    lost = abs(1.0 - mass_on_grid / mass_analytic)
    if lost > mass_tol:
        raise GridError(f"gaussian event leaks {lost:.2e} of its mass outside "
                        f"the grid (tolerance {mass_tol:.1e})")
    carrier = np.exp(-1j * (E0 * t - p0 * x) / hbar)
    values = env * carrier
    values = values / np.sqrt(np.sum(np.abs(values) ** 2) * grid.dt * grid.dx)
    return EventWavefunction(grid, values)


def sharp_time_event(grid: SpacetimeGrid, t0: float,
                     spatial: np.ndarray) -> EventWavefunction:
    """Improper event concentrated on one time slice (discrete delta, weight 1/dt).

    The spatial profile is normalized to unit L2 norm over x before embedding.
    """
    spatial = np.asarray(spatial, dtype=complex)
    if spatial.shape != (grid.n_x,):
        raise GridError(f"spatial profile must have {grid.n_x} points")
    n = np.sqrt(np.sum(np.abs(spatial) ** 2) * grid.dx)
    if n == 0:
        raise GridError("spatial profile is identically zero")
    i0 = int(round((t0 - grid.t_min) / grid.dt))
    if i0 < 0 or i0 >= grid.n_t:
        raise GridError(f"time {t0} outside the grid")
    values = np.zeros(grid.shape(), dtype=complex)
    values[i0, :] = spatial / n / grid.dt
    return EventWavefunction(grid, values, improper=True)


def plane_wave(grid: SpacetimeGrid, E: float, p: float) -> EventWavefunction:
    """Improper plane-wave event exp(-i(Et - px)/hbar)/(2 pi hbar).

    Warns when (E, p) is not close to a dual-grid point; such a wave is not
    periodic on the lattice and loses its exact orthogonality properties.
    """
    for value, duals, name in ((E, grid.energies, "E"), (p, grid.momenta, "p")):
        step = duals[1] - duals[0]
        if np.min(np.abs(duals - value)) > 1e-6 * step:
            warnings.warn(f"plane wave {name}={value} is not on the dual grid",
                          stacklevel=2)
    t = grid.times[:, None]
    x = grid.xs[None, :]
    values = np.exp(-1j * (E * t - p * x) / grid.hbar) / (TWO_PI * grid.hbar)
    return EventWavefunction(grid, values, improper=True)


def _dual_phases(grid: SpacetimeGrid) -> tuple[np.ndarray, np.ndarray]:
    # fftfreq-ordered phase factors accounting for t_min/x_min offsets
    e_fft = TWO_PI * grid.hbar * np.fft.fftfreq(grid.n_t, grid.dt)
    p_fft = TWO_PI * grid.hbar * np.fft.fftfreq(grid.n_x, grid.dx)
    phase_t = np.exp(1j * e_fft * grid.t_min / grid.hbar)
    phase_x = np.exp(-1j * p_fft * grid.x_min / grid.hbar)
    return phase_t, phase_x


def to_energy_momentum(psi: EventWavefunction) -> EventWavefunction:
    """Analysis transform: Psi(t,x) -> Psi~(E,p), unitary under grid quadrature.

    Psi~(E,p) = (dt dx / 2 pi hbar) * sum_{t,x} Psi(t,x) exp(+i(Et - px)/hbar),
    returned on the ascending (E, p) grid.
    """
    if psi.representation != SPACETIME:
        raise RepresentationError("to_energy_momentum needs a spacetime field")
    g = psi.grid
    f = np.fft.ifft(psi.values, axis=0) * g.n_t   # sum with e^{+2 pi i k n / N}
    f = np.fft.fft(f, axis=1)                     # sum with e^{-2 pi i k n / N}
    phase_t, phase_x = _dual_phases(g)
    f = f * phase_t[:, None] * phase_x[None, :]
    f *= g.dt * g.dx / (TWO_PI * g.hbar)
    f = np.fft.fftshift(f, axes=(0, 1))
    return replace(psi, values=f, representation=ENERGY_MOMENTUM)


def from_energy_momentum(psit: EventWavefunction) -> EventWavefunction:
    """Synthesis transform, exact inverse of `to_energy_momentum`."""
    if psit.representation != ENERGY_MOMENTUM:
        raise RepresentationError("from_energy_momentum needs an energy-momentum field")
    g = psit.grid
    f = np.fft.ifftshift(psit.values, axes=(0, 1))
    f = f / (g.dt * g.dx / (TWO_PI * g.hbar))
    phase_t, phase_x = _dual_phases(g)
    f = f / (phase_t[:, None] * phase_x[None, :])
    f = np.fft.ifft(f, axis=1)
    f = np.fft.fft(f, axis=0) / g.n_t
    return replace(psit, values=f, representation=SPACETIME)


def save_event_csv(path, event: EventWavefunction) -> None:
    """Write `t,x,re,im` rows plus a `<path>.meta.txt` sidecar with grid metadata."""
    if event.representation != SPACETIME:
        raise RepresentationError("CSV serialization is defined for spacetime fields")
    g = event.grid
    t = np.repeat(g.times, g.n_x)
    x = np.tile(g.xs, g.n_t)
    flat = event.values.ravel()
    data = np.column_stack([t, x, flat.real, flat.imag])
    np.savetxt(path, data, delimiter=",", header="t,x,re,im", comments="",
               fmt="%.17g")
    meta = {
        "t_min": g.t_min, "t_max": g.t_max, "n_t": g.n_t,
        "x_min": g.x_min, "x_max": g.x_max, "n_x": g.n_x,
        "hbar": g.hbar, "representation": event.representation,
        "improper": event.improper,
    }
    with open(str(path) + ".meta.txt", "w") as fh:
        for k, v in meta.items():
            fh.write(f"{k}: {v}\n")


def load_event_csv(path) -> EventWavefunction:
    """Read an event written by `save_event_csv`."""
    meta = {}
    with open(str(path) + ".meta.txt") as fh:
        for line in fh:
            k, _, v = line.partition(":")
            meta[k.strip()] = v.strip()
    grid = make_grid(float(meta["t_min"]), float(meta["t_max"]), int(meta["n_t"]),
                     float(meta["x_min"]), float(meta["x_max"]), int(meta["n_x"]),
                     float(meta["hbar"]))
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    values = (data[:, 2] + 1j * data[:, 3]).reshape(grid.shape())
    return EventWavefunction(grid, values,
                             representation=meta.get("representation", SPACETIME),
                             improper=meta.get("improper", "False") == "True")
