"""Associative domain adaptation with class-distribution-weighted visits,
applied sequentially over drifting data streams."""

from .assoc import AssocLossConfig, assoc_loss
from .backbone import EmbedderParams, forward, init_params
from .estimate import ClassDistribution, agglomerative_cluster
from .numgrad import ContractError, DimensionError, Graph, grad_check
from .sampling import LabeledDataset, kl_divergence, make_divergent_distribution
from .stream import AdaptationConfig, PretrainConfig, adapt_round, pretrain, run_stream

__version__ = "0.1.0"

__all__ = [
    "AssocLossConfig", "assoc_loss", "EmbedderParams", "forward", "init_params",
    "ClassDistribution", "agglomerative_cluster", "ContractError", "DimensionError", "Graph",
    "grad_check", "LabeledDataset", "kl_divergence", "make_divergent_distribution",
    "AdaptationConfig", "PretrainConfig", "adapt_round", "pretrain", "run_stream",
]
