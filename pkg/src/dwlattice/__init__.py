"""Single-particle simulator for a spin-dependent double-well optical lattice.

Units used throughout: lengths in lattice wavelengths, energies and
frequencies in Hz (E/h), times in microseconds.
"""

from dwlattice.constants import BiasField, PhysicalConstants
from dwlattice.field import (
    Beam,
    BeamSet,
    LatticeControls,
    SpinPotentialGrid,
    controls_to_beams,
    effective_field,
    sample_cut,
    scalar_potential,
    spin_potential,
    synthesize_field,
)

__version__ = "0.1.0"

__all__ = [
    "Beam",
    "BeamSet",
    "BiasField",
    "LatticeControls",
    "PhysicalConstants",
    "SpinPotentialGrid",
    "controls_to_beams",
    "effective_field",
    "sample_cut",
    "scalar_potential",
    "spin_potential",
    "synthesize_field",
]
