"""Fit and apply Convolutional Monge Mapping Normalization.

Training estimates one Welch PSD per source domain and channel, reduces
them to a target PSD (the Wasserstein barycenter by default) and builds one
Monge filter per domain and channel. At test time a new domain only needs
its own PSD: :func:`transform` takes the fitted model and the new signals,
never the source data.

A domain set is any mapping ``{domain_id: SignalSet}``. Reductions over
domains run in sorted ``domain_id`` order so results do not depend on
insertion order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ChannelMismatchError, EmptyInputError, FormatError, UnknownDomainError
from .psd import SignalSet, WelchConfig, psd_all_channels
from .spectral import (
    EPS_FLOOR_REL,
    TargetSpec,
    default_eps_floor,
    filter_signals,
    monge_filter,
    target_psd,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = "cmmn-model/1"
FILTERS_VERSION = "cmmn-filters/1"


@dataclass(frozen=True)
class CmmnModel:
    """Fitted normalizer.

    ``barycenter`` has shape (n_channels, filter_size) and holds the target
    PSD of each channel, whatever the target kind. ``eps_floor`` is relative:
    the absolute floor used for a source PSD ``p`` is ``eps_floor * max(p)``.
    """

    barycenter: np.ndarray
    target_spec: TargetSpec
    welch_config: WelchConfig
    eps_floor: float = EPS_FLOOR_REL
    version: str = FORMAT_VERSION

    def __post_init__(self):
        bary = np.atleast_2d(np.asarray(self.barycenter, dtype=np.float64))
        if bary.shape[1] != self.welch_config.filter_size:
            raise FormatError(
                f"barycenter has {bary.shape[1]} bins, filter_size is {self.welch_config.filter_size}"
            )
        if not np.all(np.isfinite(bary)) or np.any(bary < 0):
            raise FormatError("barycenter must be finite and nonnegative")
        bary.setflags(write=False)
        object.__setattr__(self, "barycenter", bary)

    @property
    def channel_count(self) -> int:
        return self.barycenter.shape[0]

    @property
    def filter_size(self) -> int:
        return self.welch_config.filter_size

    def filter_for(self, psds: np.ndarray) -> np.ndarray:
        """Per-channel Monge filters mapping ``psds`` (C, F) to the target."""
        return np.stack(
            [
                monge_filter(p, bar, default_eps_floor(p, self.eps_floor))
                for p, bar in zip(psds, self.barycenter)
            ]
        )

    def to_dict(self) -> dict:
        cfg = self.welch_config
        return {
            "version": self.version,
            "channel_count": self.channel_count,
            "filter_size": cfg.filter_size,
            "window": cfg.window,
            "overlap_fraction": float(cfg.overlap_fraction),
            "center": bool(cfg.center),
            "eps_floor": float(self.eps_floor),
            "target_spec": self.target_spec.to_dict(),
            "barycenter": self.barycenter.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> CmmnModel:
        if d.get("version") != FORMAT_VERSION:
            raise FormatError(f"unsupported model version {d.get('version')!r}")
        try:
            cfg = WelchConfig(
                filter_size=d["filter_size"],
                window=d["window"],
                overlap_fraction=d["overlap_fraction"],
                center=d["center"],
            )
            model = cls(
                barycenter=np.asarray(d["barycenter"], dtype=np.float64),
                target_spec=TargetSpec.from_dict(d["target_spec"]),
                welch_config=cfg,
                eps_floor=float(d["eps_floor"]),
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed model document: {exc!r}") from exc
        if model.channel_count != d["channel_count"]:
            raise FormatError(
                f"channel_count {d['channel_count']} does not match barycenter rows {model.channel_count}"
            )
        return model

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> CmmnModel:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class FilterBank:
    """Fit-time Monge filters, ``{domain_id: array (n_channels, filter_size)}``."""

    filters: dict = field(default_factory=dict)

    def __getitem__(self, domain_id: str) -> np.ndarray:
        try:
            return self.filters[domain_id]
        except KeyError:
            raise UnknownDomainError(f"no stored filter for domain {domain_id!r}") from None

    def __contains__(self, domain_id) -> bool:
        return domain_id in self.filters

    def __iter__(self):
        return iter(sorted(self.filters))

    def __len__(self) -> int:
        return len(self.filters)

    def to_dict(self) -> dict:
        return {
            "version": FILTERS_VERSION,
            "filters": {k: self.filters[k].tolist() for k in sorted(self.filters)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> FilterBank:
        if d.get("version") != FILTERS_VERSION:
            raise FormatError(f"unsupported filter bank version {d.get('version')!r}")
        return cls({k: np.asarray(v, dtype=np.float64) for k, v in d["filters"].items()})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> FilterBank:
        return cls.from_dict(json.loads(text))


def _check_domains(sources: Mapping[str, SignalSet]) -> int:
    if not sources:
        raise EmptyInputError("no source domains")
    channels = {sig.n_channels for sig in sources.values()}
    if len(channels) != 1:
        raise ChannelMismatchError(f"source domains disagree on channel count: {sorted(channels)}")
    for domain_id, sig in sources.items():
        if sig.n_samples == 0:
            raise EmptyInputError(f"domain {domain_id!r} holds no samples")
    return channels.pop()


def domain_psds(sources: Mapping[str, SignalSet], welch_config: WelchConfig) -> dict:
    """Welch PSDs of every domain, ``{domain_id: array (C, F)}``."""
    return {k: psd_all_channels(sources[k], welch_config) for k in sorted(sources)}


def fit(
    sources: Mapping[str, SignalSet],
    target_spec: TargetSpec | None = None,
    welch_config: WelchConfig | None = None,
    eps_floor: float = EPS_FLOOR_REL,
) -> tuple[CmmnModel, FilterBank]:
    """Fit the normalizer on labeled-or-not source domains.

    Parameters
    ----------
    sources : mapping of str to SignalSet
        Source domains. All must share the channel count.
    target_spec : TargetSpec, optional
        Target PSD rule. Defaults to the Wasserstein barycenter.
    welch_config : WelchConfig, optional
        PSD estimation settings, reused verbatim at test time. Defaults to
        ``WelchConfig(128)``.
    eps_floor : float
        Relative floor on source PSD bins.

    Returns
    -------
    model : CmmnModel
    bank : FilterBank
        Filters mapping each source domain to the target.
    """
    target_spec = target_spec or TargetSpec.barycenter()
    welch_config = welch_config or WelchConfig(128)
    n_channels = _check_domains(sources)
    psds = domain_psds(sources, welch_config)

    ids = sorted(psds)
    target = np.stack(
        [
            target_psd(
                target_spec,
                [psds[k][c] for k in ids],
                filter_size=welch_config.filter_size,
                channel=c,
            )
            for c in range(n_channels)
        ]
    )
    model = CmmnModel(target, target_spec, welch_config, eps_floor)
    bank = FilterBank({k: model.filter_for(psds[k]) for k in ids})
    return model, bank


def _filter_all(filters: np.ndarray, signals: SignalSet, mode: str) -> SignalSet:
    out = np.empty_like(signals.data)
    for c, kernel in enumerate(filters):
        out[:, c, :] = filter_signals(kernel, signals.data[:, c, :], mode)
    return signals.with_data(out)


def transform(model: CmmnModel, signals: SignalSet, mode: str = "fft_same") -> SignalSet:
    """Map a new domain onto the fitted target PSD.

    The domain PSD is estimated from ``signals`` alone with the model's Welch
    configuration; no source data is needed.
    """
    if signals.n_channels != model.channel_count:
        raise ChannelMismatchError(
            f"model expects {model.channel_count} channels, got {signals.n_channels}"
        )
    psds = psd_all_channels(signals, model.welch_config)
    logger.info(
        "estimated target-domain PSD from %d windows",
        signals.n_samples * model.welch_config.n_windows(signals.n_times),
    )
    return _filter_all(model.filter_for(psds), signals, mode)


def transform_with_stored_filter(
    bank: FilterBank, domain_id: str, signals: SignalSet, mode: str = "fft_same"
) -> SignalSet:
    """Apply the fit-time filters of ``domain_id`` without re-estimating its PSD."""
    filters = bank[domain_id]
    if signals.n_channels != filters.shape[0]:
        raise ChannelMismatchError(
            f"stored filters cover {filters.shape[0]} channels, got {signals.n_channels}"
        )
    return _filter_all(filters, signals, mode)
