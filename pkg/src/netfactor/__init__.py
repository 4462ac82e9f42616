"""Variational inference for latent factor models of large sparse networks."""

from .cavi import CaviConfig, FitResult, cavi_fit, init_state
from .evaluation import auc, roc_points, score_dyads, select_dyads
from .netcore import GeneratorSpec, Scenario, SparseNetwork, density, generate, read_edge_list, write_edge_list
from .svilf import SvilfConfig, svilf_fit
from .varmath import FactorState, GaussianFactor, Link, ModelConfig

__all__ = [
    "CaviConfig", "FactorState", "FitResult", "GaussianFactor", "GeneratorSpec", "Link",
    "ModelConfig", "Scenario", "SparseNetwork", "SvilfConfig", "auc", "cavi_fit", "density",
    "generate", "init_state", "read_edge_list", "roc_points", "score_dyads", "select_dyads",
    "svilf_fit", "write_edge_list",
]
