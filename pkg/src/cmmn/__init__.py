"""Convolutional Monge Mapping Normalization (CMMN) for multi-domain signals."""

__version__ = "0.1.0"

from .errors import CmmnError
from .gaussian_ot import (
    AffineMap,
    GaussianDist,
    barycenter_fixed_point,
    bures_wasserstein_sq,
    monge_map,
)
from .pipeline import CmmnModel, FilterBank, fit, transform, transform_with_stored_filter
from .psd import SignalSet, WelchConfig, psd_all_channels, welch_psd
from .spectral import TargetSpec, apply_filter, barycenter_psd, monge_filter, target_psd

__all__ = [
    "AffineMap",
    "CmmnError",
    "CmmnModel",
    "FilterBank",
    "GaussianDist",
    "SignalSet",
    "TargetSpec",
    "WelchConfig",
    "apply_filter",
    "barycenter_fixed_point",
    "barycenter_psd",
    "bures_wasserstein_sq",
    "fit",
    "monge_filter",
    "monge_map",
    "psd_all_channels",
    "target_psd",
    "transform",
    "transform_with_stored_filter",
    "welch_psd",
]
