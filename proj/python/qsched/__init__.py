"""Python bindings for the qsched few-step sampling lab."""

from ._core import (  # noqa: F401
    QschedError,
    __version__,
    config_hash,
    elo_ratings,
    few_step_grid,
    frechet_distance,
    frechet_vs_gmm,
    normalized_config,
    quant_step,
    quantize_tensor,
    sample_gmm,
    sampler_coeffs,
    schedule,
    sub_timestep,
)
