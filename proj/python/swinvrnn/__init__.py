"""Python access to the swinvrnn C++ library."""

from ._core import (
    ConfigError,
    Error,
    GeometryError,
    InvalidDistribution,
    PreconditionError,
    ShapeError,
    crps_cells,
    crps_ensemble,
    ensemble_spread,
    kl_divergence,
    lat_weighted_rmse,
    latitude_weights,
    rank_chi_square,
    rank_histogram,
    read_ensemble,
    read_scores,
    run_cli,
    sample_latent,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Error",
    "GeometryError",
    "InvalidDistribution",
    "PreconditionError",
    "ShapeError",
    "crps_cells",
    "crps_ensemble",
    "ensemble_spread",
    "kl_divergence",
    "lat_weighted_rmse",
    "latitude_weights",
    "rank_chi_square",
    "rank_histogram",
    "read_ensemble",
    "read_scores",
    "run_cli",
    "sample_latent",
]
