"""Reduced-dimensional total Lagrangian SPH solver for plates and shells."""

__version__ = "0.1.0"

from .cloud import NeighborhoodTable, ShellParticleCloud, build_neighborhood
from .corrections import CorrectionSet, build_corrections
from .material import GaussRule, LinearElasticMaterial, gauss_rule

__all__ = [
    "NeighborhoodTable",
    "ShellParticleCloud",
    "build_neighborhood",
    "CorrectionSet",
    "build_corrections",
    "GaussRule",
    "LinearElasticMaterial",
    "gauss_rule",
    "__version__",
]
