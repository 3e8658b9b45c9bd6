"""Progressive high-resolution latent diffusion over an abstract denoiser."""

from ._core import (
    CoverageViolation,
    Error,
    FormatError,
    InvalidArgument,
    NoiseSchedule,
    ProtocolError,
    cfg_combine,
    cosine_decay,
    ddim_step,
    decode_denoise_request,
    decode_denoise_response,
    decode_mock,
    deserialize_latent,
    dilated_reconstruct,
    dilated_sample,
    encode_denoise_request,
    encode_denoise_response,
    gaussian_filter,
    gaussian_kernel,
    oracle_target,
    plan_crops,
    randn,
    reconstruct_local,
    run_pipeline,
    serialize_latent,
    sigma_at,
    upsample_bicubic,
    validate_frame,
)

__version__ = "0.1.0"
