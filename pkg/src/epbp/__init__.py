"""Expectation particle belief propagation for continuous pairwise MRFs.

Inference backends (:class:`EPBP`, :class:`PBP`, :class:`PureEP`) follow
the scikit-learn estimator conventions; :func:`run_mesh_lbp` and
:func:`brute_force_marginals` provide mesh ground truth.
"""
from .bench import (
    Denoiser,
    ExperimentConfig,
    denoise,
    generate_observations,
    load_config,
    run_accuracy_bench,
    run_iteration_trace,
)
from .densities import Gumbel, Laplace, Mixture, Normal, TruncatedLaplace, mixture
from .exceptions import (
    DegenerateWeightsError,
    EPBPError,
    ImproperFactorError,
    InvalidInputError,
    MalformedHeaderError,
    MeshMismatchError,
    NotATreeError,
    NumericalFailureError,
    TruncatedDataError,
    UnsupportedGraphError,
    UnsupportedVariantError,
)
from .gaussian_ep import GaussianFactor, Proposal, make_quadrature, project_tilted
from .imageio import GrayImage, read_pgm, write_pgm
from .mesh import (
    Mesh,
    MeshBeliefs,
    brute_force_marginals,
    default_mesh,
    l1_error,
    run_mesh_lbp,
)
from .model import (
    Graph,
    PairwiseMRF,
    build_grid,
    build_tree,
    make_denoise_mrf,
    make_grid_mrf,
    make_tree_mrf,
)
from .particles import ParticleMessage, SubsampledMessage, subsample
from .samplers import (
    DEFAULT_SUBQUAD_MAP,
    EPBP,
    PBP,
    PureEP,
    mh_sample_from_belief,
    run_epbp,
    run_pbp,
    run_pure_ep,
)
from .schedule import Schedule

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
