"""Canonical operators on the lattice, densities, marginals, and uncertainties.

Operators act on spacetime fields.  Derivatives along x default to the
spectral scheme (x is periodic); derivatives along t default to centered
finite differences with second-order one-sided stencils at the edges, since
the time axis is a finite, non-periodic window.  The scheme is selectable
per operation so tests can match the integrator's discretization.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grid import TWO_PI, GridError, SpacetimeGrid

FD = "fd"
SPECTRAL = "spectral"

# ---------------------------------------------------------------------------
# derivative stencils


def _fd_time(values: np.ndarray, dt: float) -> np.ndarray:
    """Centered d/dt, second-order one-sided at both edges."""
    out = np.empty_like(values, dtype=complex)
    out[1:-1] = (values[2:] - values[:-2]) / (2 * dt)
    out[0] = (-3 * values[0] + 4 * values[1] - values[2]) / (2 * dt)
    out[-1] = (3 * values[-1] - 4 * values[-2] + values[-3]) / (2 * dt)
    return out


def _spectral_time(values: np.ndarray, grid: SpacetimeGrid) -> np.ndarray:
    w = TWO_PI * np.fft.fftfreq(grid.n_t, grid.dt)
    f = np.fft.fft(values, axis=0)
    return np.fft.ifft(1j * w[:, None] * f, axis=0)


def _fd_x(values: np.ndarray, dx: float) -> np.ndarray:
    """Centered d/dx with periodic wrap."""
    return (np.roll(values, -1, axis=1) - np.roll(values, 1, axis=1)) / (2 * dx)


def _spectral_x(values: np.ndarray, grid: SpacetimeGrid) -> np.ndarray:
    k = TWO_PI * np.fft.fftfreq(grid.n_x, grid.dx)
    f = np.fft.fft(values, axis=1)
    return np.fft.ifft(1j * k[None, :] * f, axis=1)


def _fd_xx(values: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(values, -1, axis=1) - 2 * values
            + np.roll(values, 1, axis=1)) / dx ** 2


def _spectral_xx(values: np.ndarray, grid: SpacetimeGrid) -> np.ndarray:
    k = TWO_PI * np.fft.fftfreq(grid.n_x, grid.dx)
    f = np.fft.fft(values, axis=1)
    return np.fft.ifft(-(k ** 2)[None, :] * f, axis=1)


def time_derivative(values, grid, scheme=FD):
    if scheme == FD:
        return _fd_time(values, grid.dt)
    if scheme == SPECTRAL:
        return _spectral_time(values, grid)
    raise ValueError(f"unknown derivative scheme {scheme!r}")


def space_derivative(values, grid, scheme=SPECTRAL):
    if scheme == FD:
        return _fd_x(values, grid.dx)
    if scheme == SPECTRAL:
        return _spectral_x(values, grid)
    raise ValueError(f"unknown derivative scheme {scheme!r}")


def space_second_derivative(values, grid, scheme=SPECTRAL):
    if scheme == FD:
        return _fd_xx(values, grid.dx)
    if scheme == SPECTRAL:
        return _spectral_xx(values, grid)
    raise ValueError(f"unknown derivative scheme {scheme!r}")


# ---------------------------------------------------------------------------
# potentials and Hamiltonians


@dataclass(frozen=True)
class Potential:
    """Real, instantaneous, local potential V(t, x).

    Wraps a callable f(t, xs) -> array(n_x).  `x_only` marks potentials with
    no explicit time dependence (enables the split-step integrator).
    """

    func: Callable[[float, np.ndarray], np.ndarray]
    x_only: bool = False
    label: str = "custom"

    def at(self, t: float, xs: np.ndarray) -> np.ndarray:
        v = np.asarray(self.func(t, xs), dtype=float)
        return np.broadcast_to(v, xs.shape).copy()

    def sample(self, grid: SpacetimeGrid) -> np.ndarray:
        xs = grid.xs
        return np.stack([self.at(t, xs) for t in grid.times])

    @staticmethod
    def zero() -> "Potential":
        return Potential(lambda t, xs: np.zeros_like(xs), x_only=True, label="zero")

    @staticmethod
    def harmonic(k: float, x0: float = 0.0) -> "Potential":
        return Potential(lambda t, xs: 0.5 * k * (xs - x0) ** 2,
                         x_only=True, label=f"harmonic(k={k},x0={x0})")

    @staticmethod
    def gaussian_barrier(amplitude: float, width: float, center: float = 0.0) -> "Potential":
        return Potential(
            lambda t, xs: amplitude * np.exp(-((xs - center) ** 2) / (2 * width ** 2)),
            x_only=True,
            label=f"gaussian(amplitude={amplitude},width={width},center={center})")

    @staticmethod
    def driven_harmonic(k: float, drive_amplitude: float, drive_frequency: float,
                        x0: float = 0.0) -> "Potential":
        """Harmonic well whose center oscillates: explicitly time-dependent."""
        def f(t, xs):
            c = x0 + drive_amplitude * np.sin(drive_frequency * t)
            return 0.5 * k * (xs - c) ** 2
        return Potential(f, x_only=False,
                         label=f"driven-harmonic(k={k},A={drive_amplitude},"
                               f"Omega={drive_frequency},x0={x0})")

    @staticmethod
    def from_field(grid: SpacetimeGrid, values: np.ndarray) -> "Potential":
        """Grid-sampled V(t_i, x_j); linear interpolation between time slices."""
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape():
            raise GridError("potential field shape does not match grid")

        def f(t, xs):
            s = (t - grid.t_min) / grid.dt
            i = int(np.clip(np.floor(s), 0, grid.n_t - 2))
            w = s - i
            return (1 - w) * values[i] + w * values[i + 1]

        return Potential(f, x_only=False, label="field")


@dataclass(frozen=True)
class HamiltonianSpec:
    """H = p^2/(2m) + V(t, x) with real V (self-adjointness)."""

    mass: float
    potential: Potential = field(default_factory=Potential.zero)

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")

    def apply(self, grid: SpacetimeGrid, values: np.ndarray,
              scheme: str = SPECTRAL) -> np.ndarray:
        lap = space_second_derivative(values, grid, scheme)
        v = self.potential.sample(grid)
        return -(grid.hbar ** 2) / (2 * self.mass) * lap + v * values

    def matrix(self, grid: SpacetimeGrid, t: Optional[float] = None) -> np.ndarray:
        """Dense n_x by n_x matrix of H at fixed t (FD periodic Laplacian)."""
        n, dx = grid.n_x, grid.dx
        lap = (np.eye(n, k=1) + np.eye(n, k=-1) - 2 * np.eye(n))
        lap[0, -1] = lap[-1, 0] = 1.0
        lap /= dx ** 2
        tt = grid.t_min if t is None else t
        v = self.potential.at(tt, grid.xs)
        return -(grid.hbar ** 2) / (2 * self.mass) * lap + np.diag(v)


# ---------------------------------------------------------------------------
# operator specs


@dataclass(frozen=True)
class OperatorSpec:
    """One of the operator kinds acting on spacetime fields.

    kinds: identity, time, position, energy, momentum, hamiltonian,
    multiplicative (real/complex field), projector (callable field -> field).
    """

    kind: str
    field_values: Optional[np.ndarray] = None
    hamiltonian: Optional[HamiltonianSpec] = None
    projector: Optional[Callable[[np.ndarray], np.ndarray]] = None
    scheme: Optional[str] = None

    KINDS = ("identity", "time", "position", "energy", "momentum",
             "hamiltonian", "multiplicative", "projector")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kind == "multiplicative" and self.field_values is None:
            raise ValueError("multiplicative operator needs a field")
        if self.kind == "hamiltonian" and self.hamiltonian is None:
            raise ValueError("hamiltonian operator needs a HamiltonianSpec")
        if self.kind == "projector" and self.projector is None:
            raise ValueError("projector operator needs a callable")


IDENTITY = OperatorSpec("identity")
TIME = OperatorSpec("time")
POSITION = OperatorSpec("position")


def energy_op(scheme: str = FD) -> OperatorSpec:
    return OperatorSpec("energy", scheme=scheme)


def momentum_op(scheme: str = SPECTRAL) -> OperatorSpec:
    return OperatorSpec("momentum", scheme=scheme)


def hamiltonian_op(spec: HamiltonianSpec, scheme: str = SPECTRAL) -> OperatorSpec:
    return OperatorSpec("hamiltonian", hamiltonian=spec, scheme=scheme)


def apply(op: OperatorSpec, grid: SpacetimeGrid, values: np.ndarray) -> np.ndarray:
    """Spacetime action of the operator on the field."""
    if values.shape != grid.shape():
        raise GridError("field shape does not match grid")
    kind = op.kind
    if kind == "identity":
        return values.astype(complex, copy=True)
    if kind == "time":
        return grid.times[:, None] * values
    if kind == "position":
        return grid.xs[None, :] * values
    if kind == "energy":
        return 1j * grid.hbar * time_derivative(values, grid, op.scheme or FD)
    if kind == "momentum":
        return -1j * grid.hbar * space_derivative(values, grid, op.scheme or SPECTRAL)
    if kind == "hamiltonian":
        return op.hamiltonian.apply(grid, values, op.scheme or SPECTRAL)
    if kind == "multiplicative":
        if op.field_values.shape != values.shape:
            raise GridError("multiplicative field shape does not match")
        return op.field_values * values
    if kind == "projector":
        return op.projector(values)
    raise ValueError(f"unknown operator kind {kind!r}")


def operator_density(op: OperatorSpec, grid: SpacetimeGrid,
                     values: np.ndarray) -> np.ndarray:
    """Re{psi* (A psi)} at every lattice point; real but not sign-definite
    for non-multiplicative operators."""
    return np.real(np.conj(values) * apply(op, grid, values))


def marginal_density(op: OperatorSpec, grid: SpacetimeGrid, values: np.ndarray,
                     t_index: Optional[int] = None):
    """Integral over x of the operator density: one value per time slice,
    or a single value when t_index is given."""
    dens = operator_density(op, grid, values)
    marg = np.sum(dens, axis=1) * grid.dx
    if t_index is None:
        return marg
    if not (0 <= t_index < grid.n_t):
        raise GridError(f"time index {t_index} out of range")
    return float(marg[t_index])


def current_density(grid: SpacetimeGrid, values: np.ndarray, mass: float,
                    scheme: str = SPECTRAL) -> np.ndarray:
    """Velocity density j = (hbar/m) Im{psi* d_x psi}."""
    dpsi = space_derivative(values, grid, scheme)
    return grid.hbar / mass * np.imag(np.conj(values) * dpsi)


def continuity_residual(grid: SpacetimeGrid, values: np.ndarray,
                        hamiltonian: HamiltonianSpec,
                        scheme: str = FD) -> np.ndarray:
    """d rho/dt + d j/dx by centered differences (one-sided at the t edges).

    The max-norm of the returned field is the test statistic; it shrinks
    second-order for orbits generated by the matching Hamiltonian.
    """
    rho = np.abs(values) ** 2
    j = current_density(grid, values, hamiltonian.mass, scheme)
    drho = np.real(time_derivative(rho.astype(complex), grid, FD))
    dj = np.real(space_derivative(j.astype(complex), grid, scheme))
    return drho + dj


def masked_expectation(op: OperatorSpec, grid: SpacetimeGrid, values: np.ndarray,
                       mask: Optional[np.ndarray] = None) -> float:
    """Window expectation (1/W) * sum_mask Re{psi* A psi} * dt*dx.

    With mask=None the whole grid is the window.  W is the masked particle
    density; raises if it is non-positive or non-finite.
    """
    if mask is None:
        mask = np.ones(grid.shape(), dtype=bool)
    w = float(np.sum(np.abs(values[mask]) ** 2) * grid.dt * grid.dx)
    if not np.isfinite(w) or w <= 0:
        raise ValueError(f"improper window: W={w}")
    dens = operator_density(op, grid, values)
    return float(np.sum(dens[mask]) * grid.dt * grid.dx / w)


def uncertainty(op: OperatorSpec, grid: SpacetimeGrid, values: np.ndarray,
                mask: Optional[np.ndarray] = None) -> float:
    """Standard deviation sqrt(<A^2> - <A>^2) over the window.

    Tiny negative variances (round-off, above -1e-10) are clamped to zero;
    anything more negative is an error.
    """
    if mask is None:
        mask = np.ones(grid.shape(), dtype=bool)
    w = float(np.sum(np.abs(values[mask]) ** 2) * grid.dt * grid.dx)
    if not np.isfinite(w) or w <= 0:
        raise ValueError(f"improper window: W={w}")
    a_psi = apply(op, grid, values)
    mean = np.sum(np.real(np.conj(values) * a_psi)[mask]) * grid.dt * grid.dx / w
    a2_psi = apply(op, grid, a_psi)
    mean2 = np.sum(np.real(np.conj(values) * a2_psi)[mask]) * grid.dt * grid.dx / w
    var = mean2 - mean ** 2
    scale = max(abs(mean2), mean ** 2, 1.0)
    if var < -1e-10 * scale:
        raise ValueError(f"negative variance {var} beyond round-off tolerance")
    return float(np.sqrt(max(var, 0.0)))
