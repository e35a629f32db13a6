"""Numerical engine for event-based quantum mechanics on a (1+1)D spacetime
lattice: event wavefunctions, propagator orbits, window measurement
statistics, quantum histories, and perturbative cross-checks."""

from .grid import (SpacetimeGrid, EventWavefunction, make_grid, inner_product,
                   gaussian_event, sharp_time_event, plane_wave,
                   to_energy_momentum, from_energy_momentum)
from .observables import (OperatorSpec, HamiltonianSpec, Potential,
                          IDENTITY, TIME, POSITION, energy_op, momentum_op,
                          hamiltonian_op, apply, operator_density,
                          marginal_density, current_density,
                          continuity_residual, uncertainty)
from .evolution import (EvolutionKernel, Orbit, evolve, orbit,
                        conserved_charge, schrodinger_residual,
                        CRANK_NICOLSON, SPLIT_STEP, FULL, RETARDED, ADVANCED)
from .measurement import (ObservationWindow, CompleteMeasurement, Projector,
                          QuantumHistory, window_weight, expectation,
                          outcome_probabilities, collapse, run_history,
                          position_bin_projectors, momentum_bin_projectors,
                          spectral_projectors, identity_projector)
from .perturbation import (DiscreteContinuumModel, ScatteringSetup,
                           dyson_orbit, transition_amplitude,
                           dyson_recursion_residual, golden_rule_rate,
                           survival_probability, fit_decay_rate,
                           born_smatrix, exact_smatrix, finite_horizon_delta)

__version__ = "0.1.0"
