"""Observation windows, window statistics, complete measurements, histories.

Windows are unions of disjoint boxes snapped to whole grid cells; fractional
overlap is not interpolated, so window weights stay exactly consistent with
the grid quadrature.  A complete measurement pairs a window with a projector
partition; sampling a sequence of measurements yields a quantum history.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import EventWavefunction, GridError, SpacetimeGrid
from .observables import HamiltonianSpec
from .evolution import RETARDED, EvolutionKernel, Orbit, orbit as build_orbit


class WindowError(ValueError):
    """Improper, empty, or overlapping observation window."""


class PartitionError(ValueError):
    """Projector set fails the completeness/orthogonality requirements."""


class HistoryError(RuntimeError):
    def __init__(self, stage: int, message: str):
        super().__init__(f"history stage {stage}: {message}")
        self.stage = stage


# ---------------------------------------------------------------------------
# observation windows


@dataclass(frozen=True)
class Box:
    """Inclusive index ranges [it0, it1] x [ix0, ix1] of grid cells."""
    it0: int
    it1: int
    ix0: int
    ix1: int


def _snap(lo: float, hi: float, axis_min: float, step: float, count: int,
          what: str) -> tuple[int, int]:
    eps = 1e-9 * step
    i0 = int(np.ceil((lo - axis_min) / step - eps))
    i1 = int(np.floor((hi - axis_min) / step - 1 + eps))
    i0 = max(i0, 0)
    i1 = min(i1, count - 1)
    if i1 < i0:
        raise WindowError(f"{what} range [{lo}, {hi}] contains no whole grid cell")
    return i0, i1


@dataclass(frozen=True)
class ObservationWindow:
    """Union of pairwise disjoint spacetime boxes used as statistical reference."""

    boxes: tuple[Box, ...]

    def __post_init__(self):
        if not self.boxes:
            raise WindowError("window must contain at least one box")
        for i, a in enumerate(self.boxes):
            for b in self.boxes[i + 1:]:
                if (a.it0 <= b.it1 and b.it0 <= a.it1
                        and a.ix0 <= b.ix1 and b.ix0 <= a.ix1):
                    raise WindowError("window boxes overlap")

    @staticmethod
    def box(grid: SpacetimeGrid, t1: float, t2: float,
            x1: float, x2: float) -> "ObservationWindow":
        it0, it1 = _snap(t1, t2, grid.t_min, grid.dt, grid.n_t, "time")
        ix0, ix1 = _snap(x1, x2, grid.x_min, grid.dx, grid.n_x, "space")
        return ObservationWindow((Box(it0, it1, ix0, ix1),))

    @staticmethod
    def time_slab(grid: SpacetimeGrid, t1: float, t2: float) -> "ObservationWindow":
        """[t1, t2] spanning all of x."""
        it0, it1 = _snap(t1, t2, grid.t_min, grid.dt, grid.n_t, "time")
        return ObservationWindow((Box(it0, it1, 0, grid.n_x - 1),))

    @staticmethod
    def sharp_slice(grid: SpacetimeGrid, t: float) -> "ObservationWindow":
        """The single time slice nearest t, spanning all of x."""
        i = int(round((t - grid.t_min) / grid.dt))
        if i < 0 or i >= grid.n_t:
            raise WindowError(f"time {t} outside the grid")
        return ObservationWindow((Box(i, i, 0, grid.n_x - 1),))

    @staticmethod
    def union(windows: Sequence["ObservationWindow"]) -> "ObservationWindow":
        boxes = tuple(b for w in windows for b in w.boxes)
        return ObservationWindow(boxes)

    def mask(self, grid: SpacetimeGrid) -> np.ndarray:
        m = np.zeros(grid.shape(), dtype=bool)
        for b in self.boxes:
            if b.it1 >= grid.n_t or b.ix1 >= grid.n_x:
                raise WindowError("window box exceeds the grid")
            m[b.it0:b.it1 + 1, b.ix0:b.ix1 + 1] = True
        return m

    def time_span(self) -> tuple[int, int]:
        return (min(b.it0 for b in self.boxes), max(b.it1 for b in self.boxes))


def window_weight(orb: Orbit, window: ObservationWindow) -> float:
    """W = sum over the window of the particle density, times dt*dx."""
    m = window.mask(orb.grid)
    w = float(np.sum(np.abs(orb.values[m]) ** 2) * orb.grid.dt * orb.grid.dx)
    if not np.isfinite(w) or w <= 0:
        raise WindowError(f"improper window on this orbit: W={w}")
    return w


def expectation(op, orb: Orbit, window: ObservationWindow) -> float:
    """(1/W) * integral over the window of the operator density of `op`."""
    from .observables import masked_expectation
    m = window.mask(orb.grid)
    try:
        return masked_expectation(op, orb.grid, orb.values, m)
    except ValueError as exc:
        raise WindowError(str(exc)) from exc


# ---------------------------------------------------------------------------
# projectors


@dataclass(frozen=True)
class Projector:
    """Idempotent self-adjoint map on spacetime fields, acting slice-wise."""

    label: str
    func: Callable[[np.ndarray], np.ndarray]

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.func(values)


def identity_projector() -> Projector:
    return Projector("all", lambda v: v.copy())


def position_bin_projectors(grid: SpacetimeGrid,
                            edges: Sequence[float]) -> list[Projector]:
    """Indicator projectors on x bins [e0,e1), [e1,e2), ... over grid cells."""
    edges = list(edges)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise PartitionError("position bin edges must be strictly increasing")
    xs = grid.xs
    projs = []
    covered = np.zeros(grid.n_x, dtype=bool)
    for a, b in zip(edges, edges[1:]):
        ind = (xs >= a) & (xs < b)
        covered |= ind
        projs.append(Projector(f"x in [{a},{b})",
                               lambda v, ind=ind: v * ind[None, :]))
    if not covered.all():
        raise PartitionError("position bins do not cover the grid")
    return projs


def momentum_bin_projectors(grid: SpacetimeGrid,
                            edges: Sequence[float]) -> list[Projector]:
    """Spectral indicator projectors on p bins, applied per time slice."""
    edges = list(edges)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise PartitionError("momentum bin edges must be strictly increasing")
    p = 2 * np.pi * grid.hbar * np.fft.fftfreq(grid.n_x, grid.dx)
    projs = []
    covered = np.zeros(grid.n_x, dtype=bool)
    for a, b in zip(edges, edges[1:]):
        ind = (p >= a) & (p < b)
        covered |= ind

        def f(v, ind=ind):
            return np.fft.ifft(np.fft.fft(v, axis=1) * ind[None, :], axis=1)

        projs.append(Projector(f"p in [{a},{b})", f))
    if not covered.all():
        raise PartitionError("momentum bins do not cover the dual grid")
    return projs


def spectral_projectors(grid: SpacetimeGrid, hamiltonian: HamiltonianSpec,
                        groups: Sequence[Sequence[int]]) -> list[Projector]:
    """Projectors onto groups of instantaneous eigenstates of an x-only
    Hamiltonian (dense diagonalization; intended for small n_x).

    `groups` lists eigenindex sets (ascending-energy order); together they
    must cover all n_x indices exactly once.
    """
    if not hamiltonian.potential.x_only:
        raise PartitionError("spectral projectors need an x-only Hamiltonian")
    h = hamiltonian.matrix(grid)
    _, vecs = np.linalg.eigh(h)
    seen: set[int] = set()
    projs = []
    for gi, group in enumerate(groups):
        idx = list(group)
        if seen & set(idx):
            raise PartitionError("eigenindex groups overlap")
        seen |= set(idx)
        v = vecs[:, idx]                       # n_x x k
        mat = v @ v.conj().T

        def f(values, mat=mat):
            return values @ mat.T

        projs.append(Projector(f"eigenstates {gi}", f))
    if seen != set(range(grid.n_x)):
        raise PartitionError("eigenindex groups must cover all indices")
    return projs


# ---------------------------------------------------------------------------
# complete measurements


@dataclass(frozen=True)
class CompleteMeasurement:
    projectors: tuple[tuple[str, Projector], ...]
    window: ObservationWindow

    @staticmethod
    def of(projectors: Sequence[Projector],
           window: ObservationWindow) -> "CompleteMeasurement":
        return CompleteMeasurement(tuple((p.label, p) for p in projectors), window)

    def verify_partition(self, grid: SpacetimeGrid, rng=None,
                         tol: float = 1e-10) -> None:
        """Numerical check of sum = identity, idempotency and orthogonality
        on a random test field."""
        rng = rng or np.random.default_rng(0)
        f = rng.standard_normal(grid.shape()) + 1j * rng.standard_normal(grid.shape())
        scale = np.max(np.abs(f))
        total = np.zeros_like(f)
        projected = []
        for _, p in self.projectors:
            pf = p.apply(f)
            projected.append(pf)
            total += pf
            if np.max(np.abs(p.apply(pf) - pf)) > tol * scale:
                raise PartitionError(f"projector {p.label!r} is not idempotent")
        if np.max(np.abs(total - f)) > tol * scale:
            raise PartitionError("projectors do not sum to the identity")
        for i, (_, pi) in enumerate(self.projectors):
            for pf in projected[i + 1:]:
                if np.max(np.abs(pi.apply(pf))) > tol * scale:
                    raise PartitionError("projectors are not mutually orthogonal")


def outcome_probabilities(measurement: CompleteMeasurement, orb: Orbit,
                          tol: float = 1e-10) -> dict[str, float]:
    """P(a) = window expectation of each projector; checked to sum to one."""
    m = measurement.window.mask(orb.grid)
    w = window_weight(orb, measurement.window)
    cell = orb.grid.dt * orb.grid.dx
    probs = {}
    for label, proj in measurement.projectors:
        dens = np.real(np.conj(orb.values) * proj.apply(orb.values))
        probs[label] = float(np.sum(dens[m]) * cell / w)
    total = sum(probs.values())
    if abs(total - 1.0) > tol:
        raise PartitionError(f"outcome probabilities sum to {total}, not 1")
    return probs


def collapse(measurement: CompleteMeasurement, orb: Orbit,
             label: str) -> EventWavefunction:
    """Outcome event: projected orbit restricted to the window, normalized by
    sqrt(W P(a))."""
    by_label = dict(measurement.projectors)
    if label not in by_label:
        raise KeyError(f"unknown outcome label {label!r}")
    proj = by_label[label]
    w = window_weight(orb, measurement.window)
    m = measurement.window.mask(orb.grid)
    dens = np.real(np.conj(orb.values) * proj.apply(orb.values))
    p = float(np.sum(dens[m]) * orb.grid.dt * orb.grid.dx / w)
    if p <= 0:
        raise WindowError(f"outcome {label!r} has zero probability")
    values = proj.apply(orb.values) * m / np.sqrt(w * p)
    return EventWavefunction(orb.grid, values)


# ---------------------------------------------------------------------------
# quantum histories


@dataclass(frozen=True)
class HistoryStage:
    window: ObservationWindow
    label: str
    probability: float
    outcome: EventWavefunction


@dataclass(frozen=True)
class QuantumHistory:
    stages: tuple[HistoryStage, ...]
    seed: int
    variant: str


def run_history(kernel: EvolutionKernel, initial: EventWavefunction,
                measurements: Sequence[CompleteMeasurement],
                variant: str = RETARDED, seed: int = 0) -> QuantumHistory:
    """Sample one quantum history: orbit -> probabilities -> outcome -> next
    initial event, deterministic for a given seed.

    Measurement windows must occupy pairwise disjoint, strictly increasing
    time-index ranges; overlapping windows are rejected rather than given
    ad-hoc semantics.
    """
    spans = [m.window.time_span() for m in measurements]
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        if b0 <= a1:
            raise WindowError("measurement windows must be time-disjoint and "
                              "in increasing order")
    rng = np.random.default_rng(seed)
    stages = []
    event = initial
    for i, meas in enumerate(measurements):
        try:
            orb = build_orbit(kernel, event, variant)
            probs = outcome_probabilities(meas, orb)
            labels = list(probs)
            p = np.array([probs[l] for l in labels])
            p = np.clip(p, 0.0, None)
            label = labels[rng.choice(len(labels), p=p / p.sum())]
            event = collapse(meas, orb, label)
        except (WindowError, PartitionError) as exc:
            raise HistoryError(i, str(exc)) from exc
        stages.append(HistoryStage(meas.window, label, probs[label], event))
    return QuantumHistory(tuple(stages), seed, variant)
