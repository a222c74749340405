"""Gaussian-splat artifact simulation, trajectory QC, heatmap annotation and
flow-matching data assembly, all in plain numpy."""

from .degrade import ArtifactLabel, DegradeConfig, Perturbation, compose
from .errors import ArtifactForgeError, ConfigError, DataError
from .gaussians import GaussianCloud, PinholeCamera, load_ply, save_ply
from .heatmap import ProxyDiscrepancy, annotate
from .metrics import l1, mse, psnr, ssim
from .render import RenderSettings, render, render_video
from .schedule import ScheduleConfig, assemble_triplet, masked_fm_loss, sample
from .trajectory import CameraTrajectory, FilterConfig, filter_trajectory

__version__ = "0.1.0"

__all__ = [
    "ArtifactForgeError", "ArtifactLabel", "CameraTrajectory", "ConfigError", "DataError", "DegradeConfig",
    "FilterConfig", "GaussianCloud", "Perturbation", "PinholeCamera", "ProxyDiscrepancy", "RenderSettings",
    "ScheduleConfig", "annotate", "assemble_triplet", "compose", "filter_trajectory", "l1", "load_ply",
    "masked_fm_loss", "mse", "psnr", "render", "render_video", "sample", "save_ply", "ssim",
]
