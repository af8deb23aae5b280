"""Quasi-static brittle fracture by incremental global minimisation over crack graphs."""

__version__ = "0.1.0"

from .anisotropy import (AnisotropyField, ConvergentFamily, evaluate_phi, lsc_experiment,
                         surface_energy, surface_energy_outside)
from .crackgeom import (CrackGraph, CrackSet, DomainBox, UnitNormal, approximate_normal,
                        connected_components, h1_measure, hausdorff_distance, is_subset)
from .elastic2d import (BoundaryDisplacement, ScalarCoefficientField, TensorCoefficientField,
                        cut_mesh, energy_inner_product, solve_antiplanar, solve_planar,
                        stability_experiment)
from .evolution import (EvolutionTrace, delta_convergence_study, incremental_step, run_evolution,
                        verify_trace)
from .mesh import Mesh, structured_rectangle
from .scenario import LoadPath, Scenario, load_shipped

__all__ = [
    "AnisotropyField", "BoundaryDisplacement", "ConvergentFamily", "CrackGraph", "CrackSet",
    "DomainBox", "EvolutionTrace", "LoadPath", "Mesh", "ScalarCoefficientField", "Scenario",
    "TensorCoefficientField", "UnitNormal", "approximate_normal", "connected_components",
    "cut_mesh", "delta_convergence_study", "energy_inner_product", "evaluate_phi", "h1_measure",
    "hausdorff_distance", "incremental_step", "is_subset", "load_shipped", "lsc_experiment",
    "run_evolution", "solve_antiplanar", "solve_planar", "stability_experiment",
    "structured_rectangle", "surface_energy", "surface_energy_outside", "verify_trace",
]
