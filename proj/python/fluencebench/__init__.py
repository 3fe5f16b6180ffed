"""Robustness stress testing for two-stage fluence-map prediction."""

from _fluencebench import (  # noqa: F401
    ConfigError,
    NumericError,
    bev_projection,
    bias_field,
    dvh,
    energy_error_pct,
    gaussian_noise,
    generate_case,
    normalize_ct,
    quantile,
    read_field,
    resample_inplane,
    rigid_transform,
    ssim,
    subsample_cases,
    two_stage_forward,
    wilcoxon_signed_rank,
    write_field,
)

__all__ = [
    "ConfigError",
    "NumericError",
    "bev_projection",
    "bias_field",
    "dvh",
    "energy_error_pct",
    "gaussian_noise",
    "generate_case",
    "normalize_ct",
    "quantile",
    "read_field",
    "resample_inplane",
    "rigid_transform",
    "ssim",
    "subsample_cases",
    "two_stage_forward",
    "wilcoxon_signed_rank",
    "write_field",
]
