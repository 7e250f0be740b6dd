import numpy as np
import pytest


def hermitian_psd(rng, size, low=0.1, high=3.0):
    """Random strictly positive two-sided PSD of length ``size``."""
    half = rng.uniform(low, high, size // 2 + 1)
    return np.concatenate([half, half[1 : size - half.size + 1][::-1]])


def smooth_response(rng, size, strength=0.5):
    """Random positive, Hermitian, smooth spectral amplitude."""
    freqs = np.abs(np.fft.fftfreq(size))
    coefs = rng.normal(size=3)
    log_mag = sum(c * np.cos(2 * np.pi * (k + 1) * freqs) for k, c in enumerate(coefs))
    return np.exp(strength * log_mag)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def colored_domain(rng, n_samples, n_times, strength=0.5, n_channels=1):
    """Stationary Gaussian domain: white noise shaped by a smooth random response."""
    from cmmn.psd import SignalSet

    freqs = np.fft.rfftfreq(n_times)
    out = np.empty((n_samples, n_channels, n_times))
    for c in range(n_channels):
        phases = rng.uniform(0, 2 * np.pi, 3)
        log_mag = strength * sum(np.cos(2 * np.pi * (k + 1) * freqs + phases[k]) for k in range(3)) / 3
        log_mag = log_mag + rng.normal(0, 0.5)
        noise = rng.normal(size=(n_samples, n_times))
        out[:, c] = np.fft.irfft(np.fft.rfft(noise, axis=-1) * np.exp(log_mag), n=n_times, axis=-1)
    return SignalSet(out)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[number])
