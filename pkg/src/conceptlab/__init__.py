"""Concept-subspace identification and projection editing for score-based
generative models, with an exactly computable Gaussian-mixture world as the
ground-truth oracle."""

__version__ = "0.1.0"

from conceptlab.concepts import (
    ConceptDistribution,
    ConceptSpace,
    PromptTable,
    delta,
    mix,
    product,
)
from conceptlab.world import InteractionWorld, SeparableWorld
from conceptlab.schedule import Schedule, make_schedule
from conceptlab.oracle import AnalyticOracle, OracleRequest
from conceptlab.subspace import (
    DeltaMatrix,
    SubspaceProjector,
    delta_matrix,
    find_subspace_basis,
    find_subspace_mask,
)
from conceptlab.edits import EditPlan
from conceptlab.sampler import RunArtifact, ddpm_sample, guidance_combine

__all__ = [
    "ConceptSpace",
    "ConceptDistribution",
    "PromptTable",
    "delta",
    "product",
    "mix",
    "SeparableWorld",
    "InteractionWorld",
    "Schedule",
    "make_schedule",
    "AnalyticOracle",
    "OracleRequest",
    "DeltaMatrix",
    "SubspaceProjector",
    "delta_matrix",
    "find_subspace_basis",
    "find_subspace_mask",
    "EditPlan",
    "RunArtifact",
    "ddpm_sample",
    "guidance_combine",
]
