"""Welch power spectral density estimation for multi-channel signal sets.

PSDs are kept two-sided: a length-``F`` vector holding the squared DFT
magnitude averaged over every length-``F`` window of every signal. No
density normalization is applied (no division by ``F`` or by the sampling
rate), so the scale is the raw mean of ``|DFT|**2``. Only ratios of PSDs
estimated with one configuration are meaningful downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyInputError, FilterTooLargeError, NonFiniteError

WINDOWS = ("rectangular", "hann")


@dataclass(frozen=True)
class SignalSet:
    """Signals of one domain.

    Parameters
    ----------
    data : array-like, shape (n_samples, n_channels, n_times)
        Real-valued signals. Converted to float64.
    sample_rate_hz : float
        Sampling rate. Carried as metadata only.
    """

    data: np.ndarray
    sample_rate_hz: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, None, :]
        if data.ndim != 3:
            raise ValueError(
                f"signals must have shape (n_samples, n_channels, n_times), got {data.shape}"
            )
        if data.shape[1] < 1 or data.shape[2] < 1:
            raise EmptyInputError(f"signals need C >= 1 and T >= 1, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteError("signals contain NaN or Inf")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "data", data)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_times(self) -> int:
        return self.data.shape[2]

    def with_data(self, data) -> SignalSet:
        return SignalSet(data, self.sample_rate_hz)


@dataclass(frozen=True)
class WelchConfig:
    """Window extraction settings for :func:`welch_psd`.

    ``filter_size`` is both the window length and the length of every Monge
    filter built from the resulting PSDs. ``center`` subtracts each window's
    mean before the transform; it is ignored when ``filter_size == 1``, where
    it would zero every window.
    """

    filter_size: int
    window: str = "rectangular"
    overlap_fraction: float = 0.5
    center: bool = True

    def __post_init__(self):
        if int(self.filter_size) != self.filter_size or self.filter_size < 1:
            raise ValueError(f"filter_size must be a positive integer, got {self.filter_size}")
        object.__setattr__(self, "filter_size", int(self.filter_size))
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}, got {self.window!r}")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValueError(f"overlap_fraction must lie in [0, 1), got {self.overlap_fraction}")

    @property
    def hop(self) -> int:
        return max(1, int(np.floor(self.filter_size * (1.0 - self.overlap_fraction))))

    def taper(self) -> np.ndarray:
        n = self.filter_size
        if self.window == "rectangular":
            return np.ones(n)
        # periodic Hann, the usual choice for spectral analysis
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)

    def n_windows(self, n_times: int) -> int:
        """Number of windows extracted from one signal of length ``n_times``."""
        if n_times < self.filter_size:
            return 0
        return (n_times - self.filter_size) // self.hop + 1


def _check_signals(signals: SignalSet, config: WelchConfig) -> None:
    if signals.n_samples == 0:
        raise EmptyInputError("signal set holds no samples (N = 0)")
    if config.filter_size > signals.n_times:
        raise FilterTooLargeError(
            f"filter_size {config.filter_size} exceeds signal length {signals.n_times}"
        )


def _welch(x: np.ndarray, config: WelchConfig) -> np.ndarray:
    """Welch average over the last axis of ``x`` (n_samples, ..., n_times).

    Returns shape ``x.shape[1:-1] + (F,)``.
    """
    n_fft = config.filter_size
    segments = sliding_window_view(x, n_fft, axis=-1)[..., :: config.hop, :]
    if config.center and n_fft > 1:
        segments = segments - segments.mean(axis=-1, keepdims=True)
    segments = segments * config.taper()
    half = np.abs(np.fft.rfft(segments, axis=-1)) ** 2
    # average over samples (axis 0) and windows (axis -2)
    half = half.mean(axis=(0, -2))
    # mirror the one-sided estimate so Hermitian symmetry holds exactly
    full = np.empty(half.shape[:-1] + (n_fft,))
    n_half = half.shape[-1]
    full[..., :n_half] = half
    full[..., n_half:] = half[..., 1 : n_fft - n_half + 1][..., ::-1]
    return full


def welch_psd(signals: SignalSet, channel: int, config: WelchConfig) -> np.ndarray:
    """Welch PSD of one channel, pooled over all samples.

    Parameters
    ----------
    signals : SignalSet
        Domain data.
    channel : int
        Channel index.
    config : WelchConfig
        Window length, taper, overlap and centering.

    Returns
    -------
    psd : ndarray, shape (filter_size,)
        Two-sided PSD, mean of ``|DFT|**2`` over every window.
    """
    _check_signals(signals, config)
    if not 0 <= channel < signals.n_channels:
        raise IndexError(f"channel {channel} out of range for {signals.n_channels} channels")
    return _welch(signals.data[:, channel, :], config)


def psd_all_channels(signals: SignalSet, config: WelchConfig) -> np.ndarray:
    """Per-channel Welch PSDs, shape (n_channels, filter_size)."""
    _check_signals(signals, config)
    return _welch(signals.data, config)


def is_hermitian_psd(psd, rtol: float = 1e-10) -> bool:
    """True when ``psd[j] == psd[F - j]`` for all j within ``rtol``."""
    psd = np.asarray(psd, dtype=float)
    mirrored = np.roll(psd[..., ::-1], 1, axis=-1)
    scale = max(float(np.max(np.abs(psd), initial=0.0)), np.finfo(float).tiny)
    return bool(np.all(np.abs(psd - mirrored) <= rtol * scale))
