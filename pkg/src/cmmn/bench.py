"""Synthetic multi-domain benchmark for signal normalization strategies.

Each domain sees the same class-conditional spectra passed through its own
random smooth filter (a convolutional shift), plus additive white noise.
Strategies normalize raw signals before a band-power feature extractor and a
linear classifier; scores are balanced accuracies on held-out domains.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d
from sklearn.linear_model import LogisticRegression
from sklearn.neighbors import NearestCentroid
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .errors import EmptyBandError, InvalidSpecError, TooFewDomainsError
from .pipeline import fit, transform, transform_with_stored_filter
from .psd import SignalSet, WelchConfig
from .spectral import TargetSpec

DEFAULT_BAND_EDGES_HZ = (0.5, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 20.0, 25.0, 30.0, 40.0, 50.0)
BASE_STRATEGIES = ("none", "sample_zscore", "session_zscore")


@dataclass
class SyntheticSpec:
    """Parameters of the synthetic generator.

    Spectra live on the one-sided grid of ``n_times`` points at
    ``sample_rate_hz``. Class spectra share a 1/f background with a low-pass
    rolloff at ``lowpass_hz`` and differ by a spectral bump at
    ``class_peaks_hz[c]``. Per sample, every peak gets a log-normal amplitude
    (``peak_jitter``); the peaks of the other classes are scaled by
    ``cross_talk``, so classes overlap. Each domain multiplies the amplitude spectrum by
    ``exp(g)``, where ``g`` is Gaussian noise over frequency smoothed with a
    kernel of ``shift_smoothness_hz`` and scaled to standard deviation
    ``shift_strength``; ``gain_std`` adds a random global log-gain.

    ``class_spectra`` overrides the peak model with fixed per-class power
    spectra. ``require_distinct_classes=False`` lifts the pairwise
    total-variation check, for null-signal controls.
    """

    num_domains: int = 20
    samples_per_domain_per_class: int = 20
    n_classes: int = 3
    n_times: int = 1024
    n_channels: int = 1
    sample_rate_hz: float = 100.0
    class_peaks_hz: tuple = (4.0, 10.0, 20.0)
    peak_width_hz: float = 1.5
    peak_gain: float = 3.0
    peak_jitter: float = 1.0
    cross_talk: float = 0.3
    sample_jitter: float = 0.5
    lowpass_hz: float = 30.0
    shift_strength: float = 0.6
    shift_smoothness_hz: float = 2.0
    gain_std: float = 0.5
    noise_floor: float = 0.01
    seed: int = 0
    class_spectra: np.ndarray | None = field(default=None, repr=False)
    require_distinct_classes: bool = True

    def validate(self) -> None:
        if self.num_domains < 1 or self.samples_per_domain_per_class < 1 or self.n_classes < 1:
            raise InvalidSpecError("num_domains, samples_per_domain_per_class and n_classes must be >= 1")
        if self.n_times < 2 or self.n_channels < 1:
            raise InvalidSpecError("need n_times >= 2 and n_channels >= 1")
        for name in ("shift_strength", "gain_std", "noise_floor", "peak_jitter", "cross_talk", "sample_jitter"):
            if getattr(self, name) < 0:
                raise InvalidSpecError(f"{name} must be >= 0")
        if self.class_spectra is None and len(self.class_peaks_hz) < self.n_classes:
            raise InvalidSpecError(f"need {self.n_classes} class peaks, got {len(self.class_peaks_hz)}")
        spectra = self.spectra()
        if np.any(spectra <= 0) or not np.all(np.isfinite(spectra)):
            raise InvalidSpecError("class spectra must be finite and positive")
        if not self.require_distinct_classes:
            return
        normed = spectra / spectra.sum(axis=1, keepdims=True)
        for i in range(len(normed)):
            for j in range(i + 1, len(normed)):
                tv = 0.5 * np.abs(normed[i] - normed[j]).sum()
                if tv <= 0.05:
                    raise InvalidSpecError(
                        f"class spectra {i} and {j} are too close (total variation {tv:.3f})"
                    )

    def freqs(self) -> np.ndarray:
        return np.fft.rfftfreq(self.n_times, d=1.0 / self.sample_rate_hz)

    def background(self) -> np.ndarray:
        f = self.freqs()
        pink = 1.0 / np.maximum(f, f[1])
        rolloff = 1.0 / (1.0 + (f / self.lowpass_hz) ** 8)
        return pink * rolloff

    def bump(self, center_hz: float) -> np.ndarray:
        return np.exp(-0.5 * ((self.freqs() - center_hz) / self.peak_width_hz) ** 2)

    def peak_weights(self) -> np.ndarray:
        """Nominal peak amplitudes, shape (n_classes, n_classes); row = class."""
        w = np.full((self.n_classes, self.n_classes), self.cross_talk)
        np.fill_diagonal(w, 1.0)
        return self.peak_gain * w

    def bumps(self) -> np.ndarray:
        return np.stack([self.bump(self.class_peaks_hz[c]) for c in range(self.n_classes)])

    def spectra(self) -> np.ndarray:
        """Mean class power spectra, shape (n_classes, n_times // 2 + 1)."""
        if self.class_spectra is not None:
            return np.asarray(self.class_spectra, dtype=np.float64)
        # E[exp(s z)] = exp(s^2 / 2) for the log-normal peak amplitudes
        mean_amp = np.exp(0.5 * self.peak_jitter**2)
        return self.background() * (1.0 + mean_amp * self.peak_weights() @ self.bumps())

    def sample_spectra(self, labels, rng: np.random.Generator) -> np.ndarray:
        """Per-sample power spectra with jittered peak amplitudes."""
        if self.class_spectra is not None:
            return self.spectra()[labels]
        amps = self.peak_weights()[labels] * np.exp(
            self.peak_jitter * rng.standard_normal((len(labels), self.n_classes))
        )
        return self.background() * (1.0 + amps @ self.bumps())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class_peaks_hz"] = list(self.class_peaks_hz)
        if self.class_spectra is not None:
            d["class_spectra"] = np.asarray(self.class_spectra).tolist()
        return d


@dataclass
class SyntheticData:
    domains: dict
    labels: dict
    spec: SyntheticSpec

    @property
    def domain_ids(self) -> list:
        return sorted(self.domains)


def _domain_response(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    n_freqs = spec.n_times // 2 + 1
    log_mag = np.zeros(n_freqs)
    if spec.shift_strength > 0:
        sigma_bins = spec.shift_smoothness_hz * spec.n_times / spec.sample_rate_hz
        g = gaussian_filter1d(rng.standard_normal(n_freqs), sigma_bins, mode="reflect")
        g -= g.mean()
        std = g.std()
        if std > 0:
            log_mag = spec.shift_strength * g / std
    log_mag = log_mag + spec.gain_std * rng.standard_normal()
    return np.exp(log_mag)


def generate(spec: SyntheticSpec) -> SyntheticData:
    """Draw a labeled multi-domain dataset, deterministic under ``spec.seed``.

    Every sample is white Gaussian noise shaped in the frequency domain by a
    jittered class spectrum, then by the domain response (one per channel),
    plus white noise of standard deviation ``noise_floor`` times the signal's
    mean standard deviation.
    """
    spec.validate()
    n_cls = spec.spectra().shape[0]
    root = np.random.SeedSequence(spec.seed)
    domain_seeds = root.spawn(spec.num_domains)
    n_per = spec.samples_per_domain_per_class
    labels = np.repeat(np.arange(n_cls), n_per)
    domains, all_labels = {}, {}
    width = len(str(spec.num_domains - 1))
    for k, dseed in enumerate(domain_seeds):
        rng = np.random.default_rng(dseed)
        responses = np.stack([_domain_response(spec, rng) for _ in range(spec.n_channels)])
        n = labels.size
        # per-sample log-normal gain on top of the jittered class spectrum
        jitter = np.exp(spec.sample_jitter * rng.standard_normal((n, spec.n_channels, 1)))
        power = spec.sample_spectra(labels, rng)[:, None, :] * jitter
        amp = np.sqrt(power) * responses[None, :, :]
        noise = rng.standard_normal((n, spec.n_channels, spec.n_times))
        x = np.fft.irfft(np.fft.rfft(noise, axis=-1) * amp, n=spec.n_times, axis=-1)
        if spec.noise_floor > 0:
            scale = x.std()
            x = x + spec.noise_floor * scale * rng.standard_normal(x.shape)
        order = rng.permutation(n)
        domain_id = f"d{k:0{width}d}"
        domains[domain_id] = SignalSet(x[order], spec.sample_rate_hz)
        all_labels[domain_id] = labels[order]
    return SyntheticData(domains, all_labels, spec)


def band_power_features(signals: SignalSet, band_edges=DEFAULT_BAND_EDGES_HZ) -> np.ndarray:
    """Log mean periodogram power within consecutive frequency bands.

    Parameters
    ----------
    signals : SignalSet
    band_edges : sequence of float
        Increasing edges in Hz; band ``b`` covers ``[edges[b], edges[b+1])``,
        the last band also includes its upper edge.

    Returns
    -------
    features : ndarray, shape (n_samples, n_channels * n_bands)
        Channel-major.
    """
    edges = np.asarray(band_edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise EmptyBandError("band_edges must be an increasing sequence of at least two values")
    freqs = np.fft.rfftfreq(signals.n_times, d=1.0 / signals.sample_rate_hz)
    if edges[0] < 0 or edges[-1] > freqs[-1] + 1e-9 * freqs[-1]:
        raise EmptyBandError(f"band edges must lie within [0, {freqs[-1]}] Hz")
    pxx = np.abs(np.fft.rfft(signals.data, axis=-1)) ** 2 / signals.n_times
    feats = []
    for b in range(edges.size - 1):
        lo, hi = edges[b], edges[b + 1]
        mask = (freqs >= lo) & ((freqs < hi) if b < edges.size - 2 else (freqs <= hi + 1e-9 * hi))
        if not mask.any():
            raise EmptyBandError(f"band [{lo}, {hi}) Hz holds no frequency bin")
        feats.append(np.log(pxx[..., mask].mean(axis=-1) + np.finfo(float).tiny))
    return np.stack(feats, axis=-1).reshape(signals.n_samples, -1)


def balanced_accuracy(y_true, y_pred) -> float:
    """Mean recall over the classes present in ``y_true``."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    classes = np.unique(y_true)
    recalls = [np.mean(y_pred[y_true == c] == c) for c in classes]
    return float(np.mean(recalls))


@dataclass(frozen=True)
class Strategy:
    """A normalization applied to raw signals before feature extraction.

    ``kind`` is ``none``, ``sample_zscore``, ``session_zscore`` or ``cmmn``.
    For ``cmmn`` the samples are first z-scored individually, then mapped
    with filters of size ``filter_size`` toward ``target``.
    """

    kind: str
    filter_size: int = 128
    target: TargetSpec = field(default_factory=TargetSpec.barycenter)

    @property
    def name(self) -> str:
        if self.kind != "cmmn":
            return self.kind
        name = f"cmmn:{self.filter_size}"
        if self.target.kind == "powerlaw":
            return f"{name}:powerlaw:{self.target.exponent:g}"
        if self.target.kind != "barycenter":
            return f"{name}:{self.target.kind}"
        return name

    @classmethod
    def parse(cls, text: str) -> Strategy:
        """Parse ``none``, ``sample_zscore``, ``session_zscore`` or
        ``cmmn:F[:barycenter|:whitening|:powerlaw[:a]]``."""
        parts = text.strip().split(":")
        if parts[0] in BASE_STRATEGIES and len(parts) == 1:
            return cls(parts[0])
        if parts[0] != "cmmn" or len(parts) < 2:
            raise ValueError(f"unknown strategy {text!r}")
        size = int(parts[1])
        return cls("cmmn", size, parse_target(":".join(parts[2:]) or "barycenter"))


def parse_target(text: str) -> TargetSpec:
    """``barycenter``, ``whitening`` or ``powerlaw[:a]``."""
    parts = text.split(":")
    if parts[0] == "powerlaw":
        if len(parts) > 2:
            raise ValueError(f"bad powerlaw target {text!r}")
        return TargetSpec.powerlaw(float(parts[1])) if len(parts) == 2 else TargetSpec.powerlaw()
    if parts[0] in ("barycenter", "whitening") and len(parts) == 1:
        return TargetSpec(parts[0])
    raise ValueError(f"unknown target {text!r}")


def _zscore(x: np.ndarray, axes) -> np.ndarray:
    mean = x.mean(axis=axes, keepdims=True)
    std = x.std(axis=axes, keepdims=True)
    return (x - mean) / np.where(std > 0, std, 1.0)


def sample_zscore(signals: SignalSet) -> SignalSet:
    """Zero mean, unit variance per sample and channel."""
    return signals.with_data(_zscore(signals.data, (-1,)))


def session_zscore(signals: SignalSet) -> SignalSet:
    """Zero mean, unit variance per channel over the whole domain."""
    return signals.with_data(_zscore(signals.data, (0, 2)))


def normalize_domains(strategy: Strategy, sources: dict, targets: dict) -> tuple[dict, dict]:
    """Apply ``strategy`` to source and target domains.

    CMMN is fitted on the sources only; targets go through test-time
    :func:`cmmn.pipeline.transform`.
    """
    if strategy.kind == "none":
        return dict(sources), dict(targets)
    if strategy.kind == "sample_zscore":
        return {k: sample_zscore(v) for k, v in sources.items()}, {k: sample_zscore(v) for k, v in targets.items()}
    if strategy.kind == "session_zscore":
        return {k: session_zscore(v) for k, v in sources.items()}, {k: session_zscore(v) for k, v in targets.items()}
    if strategy.kind != "cmmn":
        raise ValueError(f"unknown strategy kind {strategy.kind!r}")
    src = {k: sample_zscore(v) for k, v in sources.items()}
    tgt = {k: sample_zscore(v) for k, v in targets.items()}
    # samples are already centered; per-window centering would empty the DC bin
    config = WelchConfig(strategy.filter_size, center=False)
    model, bank = fit(src, strategy.target, config)
    src = {k: transform_with_stored_filter(bank, k, v) for k, v in src.items()}
    tgt = {k: transform(model, v) for k, v in tgt.items()}
    return src, tgt


def _make_classifier(name: str):
    if name == "logistic":
        return make_pipeline(StandardScaler(), LogisticRegression(max_iter=2000))
    if name == "centroid":
        return make_pipeline(StandardScaler(), NearestCentroid())
    raise ValueError(f"unknown classifier {name!r}")


class _ConstantClassifier:
    def fit(self, X, y):
        self.label_ = y[0]
        return self

    def predict(self, X):
        return np.full(len(X), self.label_)


def score_strategy(
    strategy: Strategy,
    data: SyntheticData,
    source_ids,
    target_ids,
    classifier: str = "logistic",
    band_edges=DEFAULT_BAND_EDGES_HZ,
) -> dict:
    """Per-target-domain balanced accuracy of one strategy on one split."""
    sources = {k: data.domains[k] for k in source_ids}
    targets = {k: data.domains[k] for k in target_ids}
    src, tgt = normalize_domains(strategy, sources, targets)
    X = np.concatenate([band_power_features(src[k], band_edges) for k in source_ids])
    y = np.concatenate([data.labels[k] for k in source_ids])
    clf = _ConstantClassifier() if np.unique(y).size < 2 else _make_classifier(classifier)
    clf.fit(X, y)
    return {
        k: balanced_accuracy(data.labels[k], clf.predict(band_power_features(tgt[k], band_edges)))
        for k in target_ids
    }


def split_domains(domain_ids, n_targets: int, seed: int, trial: int) -> tuple[list, list]:
    """Random source/target split for one trial, reproducible from (seed, trial)."""
    rng = np.random.default_rng([seed, trial])
    ids = sorted(domain_ids)
    perm = rng.permutation(len(ids))
    targets = sorted(ids[i] for i in perm[:n_targets])
    sources = sorted(ids[i] for i in perm[n_targets:])
    return sources, targets


def worst_fraction_gain(scores: dict, baseline: dict, fraction: float = 0.2) -> float:
    """Mean gain over the ``fraction`` of domains with the lowest baseline score.

    Ties in the baseline are broken by domain id.
    """
    ranked = sorted(baseline, key=lambda k: (baseline[k], k))
    n_worst = max(1, math.ceil(fraction * len(ranked) - 1e-9))
    worst = ranked[:n_worst]
    return float(np.mean([scores[k] - baseline[k] for k in worst]))


@dataclass
class BenchResult:
    """Scores of every strategy on every trial.

    ``domain_scores[(strategy, trial)]`` maps target domain ids to BACC. The
    trial BACC of a strategy is the mean over its target domains.
    """

    strategies: list
    trials: int
    baseline: str | None
    domain_scores: dict

    def bacc(self, strategy: str, trial: int) -> float:
        return float(np.mean(list(self.domain_scores[(strategy, trial)].values())))

    def trial_baccs(self, strategy: str) -> np.ndarray:
        return np.array([self.bacc(strategy, t) for t in range(self.trials)])

    def delta_bacc(self, strategy: str) -> np.ndarray:
        """Per-trial mean BACC gain over the baseline."""
        return self.trial_baccs(strategy) - self.trial_baccs(self._baseline())

    def delta_bacc_at_20(self, strategy: str) -> np.ndarray:
        """Per-trial gain on the worst 20% target domains of the baseline."""
        base = self._baseline()
        return np.array(
            [
                worst_fraction_gain(self.domain_scores[(strategy, t)], self.domain_scores[(base, t)])
                for t in range(self.trials)
            ]
        )

    def _baseline(self) -> str:
        if self.baseline is None or self.baseline not in self.strategies:
            raise ValueError("no baseline strategy in this result")
        return self.baseline

    def summary(self) -> dict:
        out = {"trials": self.trials, "baseline": self.baseline, "strategies": {}}
        for s in self.strategies:
            b = self.trial_baccs(s)
            entry = {"mean_bacc": float(b.mean()), "std_bacc": float(b.std()), "bacc": b.tolist()}
            if self.baseline in self.strategies:
                d20 = self.delta_bacc_at_20(s)
                entry["mean_delta_bacc"] = float(self.delta_bacc(s).mean())
                entry["mean_delta_bacc_at_20"] = float(d20.mean())
                entry["delta_bacc_at_20"] = d20.tolist()
            out["strategies"][s] = entry
        return out

    def rows(self) -> list:
        return [
            {"strategy": s, "trial": t, "domain_id": k, "bacc": v}
            for s in self.strategies
            for t in range(self.trials)
            for k, v in sorted(self.domain_scores[(s, t)].items())
        ]

    def to_csv(self) -> str:
        return _rows_to_csv(self.rows(), ["strategy", "trial", "domain_id", "bacc"])

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=1)


def _rows_to_csv(rows, fieldnames) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def _as_strategies(strategies) -> list:
    return [s if isinstance(s, Strategy) else Strategy.parse(s) for s in strategies]


def evaluate(
    strategies,
    data: SyntheticData,
    trials: int = 10,
    seed: int = 0,
    target_fraction: float = 0.5,
    baseline: str | None = "sample_zscore",
    classifier: str = "logistic",
    band_edges=DEFAULT_BAND_EDGES_HZ,
) -> BenchResult:
    """Leave-domains-out evaluation of normalization strategies.

    Each trial splits the domains into sources and targets with an RNG
    derived from ``(seed, trial)``, trains the classifier on normalized
    sources and scores every target domain. ``baseline`` names the strategy
    gains are measured against; it is ignored when absent from the list.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if len(data.domains) < 2:
        raise TooFewDomainsError(f"need at least 2 domains, got {len(data.domains)}")
    strategies = _as_strategies(strategies)
    names = [s.name for s in strategies]
    n_targets = min(max(1, round(target_fraction * len(data.domains))), len(data.domains) - 1)
    scores = {}
    for t in range(trials):
        sources, targets = split_domains(data.domain_ids, n_targets, seed, t)
        for s in strategies:
            scores[(s.name, t)] = score_strategy(s, data, sources, targets, classifier, band_edges)
    return BenchResult(names, trials, baseline if baseline in names else None, scores)


@dataclass
class SweepResult:
    """Per-trial ΔBACC of CMMN at each filter size, relative to a baseline."""

    filter_sizes: list
    targets: list
    trials: int
    baseline: str
    rows: list

    def curve(self, target: str = "barycenter") -> list:
        """``[(F, mean ΔBACC)]`` for one target, in filter-size order."""
        out = []
        for size in self.filter_sizes:
            deltas = [r["delta_bacc"] for r in self.rows if r["filter_size"] == size and r["target"] == target]
            out.append((size, float(np.mean(deltas))))
        return out

    def to_csv(self) -> str:
        return _rows_to_csv(self.rows, ["target", "trial", "filter_size", "bacc", "baseline_bacc", "delta_bacc"])

    def summary_json(self) -> str:
        return json.dumps(
            {
                "baseline": self.baseline,
                "trials": self.trials,
                "curves": {tg: [[f, d] for f, d in self.curve(tg)] for tg in self.targets},
            },
            indent=1,
        )


def sensitivity_sweep(
    data: SyntheticData,
    filter_sizes,
    trials: int = 10,
    seed: int = 0,
    targets=("barycenter",),
    baseline: str = "sample_zscore",
    **kwargs,
) -> SweepResult:
    """ΔBACC of CMMN against ``baseline`` for every filter size and target."""
    filter_sizes = [int(f) for f in filter_sizes]
    n_times = data.spec.n_times
    if any(f < 1 or f > n_times for f in filter_sizes):
        raise ValueError(f"filter sizes must lie in [1, {n_times}], got {filter_sizes}")
    targets = list(targets)
    strategies = [Strategy(baseline)] + [
        Strategy("cmmn", f, parse_target(tg)) for tg in targets for f in filter_sizes
    ]
    result = evaluate(strategies, data, trials, seed, baseline=baseline, **kwargs)
    rows = []
    for tg in targets:
        for t in range(trials):
            base = result.bacc(baseline, t)
            for f in filter_sizes:
                b = result.bacc(Strategy("cmmn", f, parse_target(tg)).name, t)
                rows.append(
                    {"target": tg, "trial": t, "filter_size": f, "bacc": b, "baseline_bacc": base, "delta_bacc": b - base}
                )
    return SweepResult(filter_sizes, targets, trials, baseline, rows)
