"""Inhomogeneous quantum annealing simulator.

Mean-field dynamics of the ferromagnetic p-spin model, exact state-vector
dynamics and sector-resolved spectra of small spin-glass instances,
exact-level-crossing detection, and ensemble statistics.
"""

__version__ = "0.1.0"

from .schedules import (AnnealPath, FieldProfile, ProfileKind, evaluate_path,
                        field_off_tau, gamma)
from .models import (DiagonalSpectrumSummary, PSpinModel, SkInstance,
                     classical_energy, diagonal_extremes,
                     make_deterministic_sk, sample_sk)
from .meanfield import (MagnetizationTrajectory, MeanFieldState,
                        SaddlePointQuery, SaddleSolution,
                        ground_state_reference_curve, initial_product_state,
                        run_meanfield, solve_saddle, solve_saddle_branches,
                        step)
from .exact import (ExactTrajectory, WaveFunction, apply_hamiltonian,
                    energy_fraction, expected_h0, initial_state,
                    magnetizations, propagate)
from .spectrum import (AdiabaticBound, CrossingEvent, SectorLabel,
                       SpectrumSlice, adiabatic_bound, detect_crossings,
                       frozen_mask, lowest_levels, sector_spectrum)
from .ensemble import (CompareResult, EnsembleConfig, FractionResult,
                       crossing_fraction, derive_seed,
                       final_energy_comparison, wilson_interval)

__all__ = [name for name in dir() if not name.startswith("_")]
