"""Pseudo-spectral solver and verification suite for shear-dependent incompressible flow."""

from .constitutive import (
    ConstitutiveLaw,
    Newtonian,
    PowerLawA,
    PowerLawB,
    StructuralReport,
    UserDefinedLaw,
    law_from_config,
    reciprocal_law,
    verify_structural,
)
from .fields import Grid, SpectralField, StrainField, random_solenoidal, sobolev_norm, taylor_green
from .solver import SimConfig, SimState, run

__version__ = "0.1.0"

__all__ = [
    "ConstitutiveLaw",
    "Newtonian",
    "PowerLawA",
    "PowerLawB",
    "UserDefinedLaw",
    "StructuralReport",
    "law_from_config",
    "reciprocal_law",
    "verify_structural",
    "Grid",
    "SpectralField",
    "StrainField",
    "random_solenoidal",
    "sobolev_norm",
    "taylor_green",
    "SimConfig",
    "SimState",
    "run",
]
