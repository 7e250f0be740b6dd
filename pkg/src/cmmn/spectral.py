"""Closed-form optimal transport between stationary Gaussian signals.

For circulant covariances the DFT diagonalizes every matrix in play, so the
Monge map becomes a convolution and the Wasserstein barycenter has an
elementwise closed form. PSDs here are two-sided vectors of length ``F`` as
returned by :func:`cmmn.psd.welch_psd`; filters are length-``F`` real
kernels stored in DFT order (zero lag at index 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve, fftconvolve

from .errors import (
    EmptyInputError,
    FilterTooLargeError,
    LengthMismatchError,
    NegativeBinError,
    NonFiniteError,
)
from .psd import SignalSet, is_hermitian_psd

DEFAULT_POWERLAW_EXPONENT = 0.659
EPS_FLOOR_REL = 1e-12
TARGET_KINDS = ("barycenter", "whitening", "powerlaw", "explicit")


def _as_psd_stack(psds) -> np.ndarray:
    arrs = [np.asarray(p, dtype=np.float64) for p in psds]
    if not arrs:
        raise EmptyInputError("no PSDs given")
    lengths = {a.shape for a in arrs}
    if len(lengths) != 1 or arrs[0].ndim != 1:
        raise LengthMismatchError(f"PSDs must be 1-D of equal length, got shapes {sorted(lengths)}")
    stack = np.stack(arrs)
    if not np.all(np.isfinite(stack)):
        raise NonFiniteError("PSD contains NaN or Inf")
    if np.any(stack < 0):
        raise NegativeBinError("PSD has a negative bin")
    return stack


def barycenter_psd(psds) -> np.ndarray:
    """Wasserstein barycenter of stationary Gaussian signals.

    The barycenter PSD is the squared mean of the elementwise square roots:
    ``((1/K) * sum_k sqrt(p_k)) ** 2``.
    """
    stack = _as_psd_stack(psds)
    return np.mean(np.sqrt(stack), axis=0) ** 2


def bures_psd_cost(p, q) -> np.ndarray:
    """Per-bin squared Wasserstein cost ``p + q - 2 sqrt(p q)`` between PSDs."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return p + q - 2.0 * np.sqrt(p * q)


def barycenter_objective(p, psds) -> float:
    """Mean over inputs of the summed per-bin cost; minimized by :func:`barycenter_psd`."""
    return float(np.mean([bures_psd_cost(p, q).sum() for q in psds]))


def default_eps_floor(source, rel: float = EPS_FLOOR_REL) -> float:
    """Absolute floor ``rel * max(source)`` (``rel`` itself for an all-zero source)."""
    peak = float(np.max(source, initial=0.0))
    return rel * peak if peak > 0 else rel


def filter_response(source, target, eps_floor: float | None = None) -> np.ndarray:
    """Spectral response ``sqrt(target) / sqrt(max(source, eps_floor))``.

    Bins where both PSDs sit at or below the floor carry no information
    (centered Welch estimates have an exactly zero DC bin). Their response is
    interpolated periodically from the remaining bins, or set to 1 when no bin
    is informative, so ``source == target`` always yields the identity filter.
    """
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if source.shape != target.shape or source.ndim != 1:
        raise LengthMismatchError(
            f"source and target PSDs differ in shape: {source.shape} vs {target.shape}"
        )
    if not (np.all(np.isfinite(source)) and np.all(np.isfinite(target))):
        raise NonFiniteError("PSD contains NaN or Inf")
    if np.any(target < 0):
        raise NegativeBinError("target PSD has a negative bin")
    if eps_floor is None:
        eps_floor = default_eps_floor(source)
    if not eps_floor > 0:
        raise ValueError(f"eps_floor must be positive, got {eps_floor}")
    response = np.sqrt(target) / np.sqrt(np.maximum(source, eps_floor))
    empty = (source <= eps_floor) & (target <= eps_floor)
    if empty.all():
        return np.ones_like(response)
    if empty.any():
        bins = np.arange(response.size)
        response[empty] = np.interp(bins[empty], bins[~empty], response[~empty], period=response.size)
    return response


def monge_filter(source, target, eps_floor: float | None = None) -> np.ndarray:
    """Convolution kernel of the Monge map between two stationary signals.

    Parameters
    ----------
    source, target : array-like, shape (F,)
        Two-sided PSDs.
    eps_floor : float, optional
        Lower bound applied to source bins before division. Defaults to
        ``1e-12 * max(source)``.

    Returns
    -------
    kernel : ndarray, shape (F,)
        Real filter in DFT order, i.e. the inverse DFT of the response.
    """
    response = filter_response(source, target, eps_floor)
    kernel = np.fft.ifft(response)
    real = kernel.real
    # Hermitian responses give a real kernel up to rounding
    imag = float(np.max(np.abs(kernel.imag), initial=0.0))
    if imag > 1e-9 * max(float(np.linalg.norm(real)), 1.0):
        raise ValueError(
            f"filter has imaginary residual {imag:.3e}; PSDs are not Hermitian-symmetric"
        )
    return real


@dataclass(frozen=True)
class TargetSpec:
    """Which PSD the domains are mapped to.

    ``kind`` is one of ``barycenter``, ``whitening``, ``powerlaw`` (uses
    ``exponent``) or ``explicit`` (uses ``psd``, shape (F,) shared by every
    channel or (C, F) per channel).
    """

    kind: str = "barycenter"
    exponent: float = DEFAULT_POWERLAW_EXPONENT
    psd: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"target kind must be one of {TARGET_KINDS}, got {self.kind!r}")
        if self.kind == "powerlaw" and not self.exponent > 0:
            raise ValueError(f"powerlaw exponent must be positive, got {self.exponent}")
        if self.kind == "explicit":
            if self.psd is None:
                raise ValueError("explicit target needs a psd")
            psd = np.asarray(self.psd, dtype=np.float64)
            if psd.ndim not in (1, 2):
                raise ValueError(f"explicit psd must be 1-D or 2-D, got shape {psd.shape}")
            _as_psd_stack(np.atleast_2d(psd))
            if not is_hermitian_psd(psd):
                raise ValueError("explicit psd is not Hermitian-symmetric")
            object.__setattr__(self, "psd", psd)

    @classmethod
    def barycenter(cls) -> TargetSpec:
        return cls("barycenter")

    @classmethod
    def whitening(cls) -> TargetSpec:
        return cls("whitening")

    @classmethod
    def powerlaw(cls, exponent: float = DEFAULT_POWERLAW_EXPONENT) -> TargetSpec:
        return cls("powerlaw", exponent=exponent)

    @classmethod
    def explicit(cls, psd) -> TargetSpec:
        return cls("explicit", psd=psd)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "powerlaw":
            out["exponent"] = float(self.exponent)
        if self.kind == "explicit":
            out["psd"] = self.psd.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> TargetSpec:
        kind = d["kind"]
        if kind == "powerlaw":
            return cls.powerlaw(float(d.get("exponent", DEFAULT_POWERLAW_EXPONENT)))
        if kind == "explicit":
            return cls.explicit(np.asarray(d["psd"], dtype=np.float64))
        return cls(kind)

    def __eq__(self, other):
        if not isinstance(other, TargetSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(self.kind)


def powerlaw_shape(filter_size: int, exponent: float) -> np.ndarray:
    """Unnormalized two-sided ``a * f**(a-1)`` on the DFT grid.

    The DC bin takes the value of the first nonzero frequency.
    """
    freqs = np.abs(np.fft.fftfreq(filter_size))
    if filter_size == 1:
        return np.array([exponent])
    freqs[0] = freqs[1]
    return exponent * freqs ** (exponent - 1.0)


def target_psd(spec: TargetSpec, psds, filter_size: int | None = None, channel: int = 0) -> np.ndarray:
    """Resolve a target PSD from ``spec`` and the source PSDs of one channel.

    Whitening and power-law targets are scaled so their total power matches
    the mean total power of ``psds``; when ``psds`` is empty they keep unit
    mean bin value.
    """
    psds = list(psds)
    if spec.kind == "barycenter":
        if not psds:
            raise EmptyInputError("barycenter target needs at least one PSD")
        return barycenter_psd(psds)
    if spec.kind == "explicit":
        psd = spec.psd if spec.psd.ndim == 1 else spec.psd[channel]
        if filter_size is not None and psd.size != filter_size:
            raise LengthMismatchError(
                f"explicit target has {psd.size} bins, expected {filter_size}"
            )
        return psd.copy()

    if psds:
        stack = _as_psd_stack(psds)
        n_bins = stack.shape[1]
        total = float(stack.sum(axis=1).mean())
    else:
        if filter_size is None:
            raise EmptyInputError("filter_size is required without source PSDs")
        n_bins = filter_size
        total = float(n_bins)
    if filter_size is not None and n_bins != filter_size:
        raise LengthMismatchError(f"PSDs have {n_bins} bins, expected {filter_size}")

    if spec.kind == "whitening":
        shape = np.ones(n_bins)
    else:
        shape = powerlaw_shape(n_bins, spec.exponent)
    return shape * (total / shape.sum())


def centered_kernel(kernel) -> np.ndarray:
    """Kernel rolled so the zero-lag tap sits at index ``F // 2``."""
    kernel = np.asarray(kernel, dtype=np.float64)
    return np.roll(kernel, kernel.size // 2)


def filter_signals(kernel, x, mode: str = "fft_same") -> np.ndarray:
    """Convolve every row of ``x`` (..., T) with a DFT-ordered kernel.

    Output keeps length ``T``. Boundaries are zero padded, so the first and
    last ``F // 2`` samples see a truncated filter.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n_fft, n_times = kernel.size, x.shape[-1]
    if n_fft > n_times:
        raise FilterTooLargeError(f"filter size {n_fft} exceeds signal length {n_times}")
    if n_fft == 1:
        return x * kernel[0]
    taps = centered_kernel(kernel).reshape((1,) * (x.ndim - 1) + (n_fft,))
    if mode == "fft_same":
        full = fftconvolve(x, taps, axes=-1)
    elif mode == "direct_same":
        full = convolve(x, taps, method="direct")
    else:
        raise ValueError(f"mode must be 'fft_same' or 'direct_same', got {mode!r}")
    start = n_fft // 2
    return full[..., start : start + n_times]


def apply_filter(kernel, signals: SignalSet, channel: int, mode: str = "fft_same") -> SignalSet:
    """Filter one channel of every sample; other channels are copied untouched."""
    if not 0 <= channel < signals.n_channels:
        raise IndexError(f"channel {channel} out of range for {signals.n_channels} channels")
    out = signals.data.copy()
    out[:, channel, :] = filter_signals(kernel, signals.data[:, channel, :], mode)
    return signals.with_data(out)
