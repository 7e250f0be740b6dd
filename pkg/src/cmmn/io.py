"""Dataset container: a JSON manifest plus one raw binary file per domain.

Manifest layout::

    {"version": "cmmn-dataset/1", "sample_rate_hz": 100.0, "channels": 2,
     "dtype": "f64le",
     "domains": [{"id": "s01", "file": "s01.bin", "num_samples": 40, "length": 3000}]}

Each binary holds little-endian floats in row-major (N, C, T) order. File
paths are resolved relative to the manifest. All writes go to a temporary
file first and are renamed into place.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ChannelMismatchError, EmptyInputError, FormatError, SizeMismatchError
from .psd import SignalSet

DATASET_VERSION = "cmmn-dataset/1"
DTYPES = {"f32le": np.dtype("<f4"), "f64le": np.dtype("<f8")}


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _manifest_field(entry: dict, key: str, where: str):
    try:
        return entry[key]
    except KeyError:
        raise FormatError(f"{where}: missing field {key!r}") from None


def load_dataset(manifest_path) -> dict:
    """Read every domain listed in a manifest.

    Returns
    -------
    domains : dict of str to SignalSet
        In manifest order. float32 files are widened to float64.

    Raises
    ------
    FormatError
        Unknown version or dtype, duplicate ids, malformed entries.
    SizeMismatchError
        A binary file is not exactly ``N * C * T * itemsize`` bytes long.
    EmptyInputError
        A domain declares ``num_samples == 0``.
    FileNotFoundError
        The manifest or a domain file is missing.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: not valid JSON ({exc})") from exc
    if not isinstance(manifest, dict) or manifest.get("version") != DATASET_VERSION:
        version = manifest.get("version") if isinstance(manifest, dict) else None
        raise FormatError(f"{manifest_path}: unsupported dataset version {version!r}")
    where = str(manifest_path)
    dtype_name = _manifest_field(manifest, "dtype", where)
    if dtype_name not in DTYPES:
        raise FormatError(f"{where}: dtype must be one of {sorted(DTYPES)}, got {dtype_name!r}")
    dtype = DTYPES[dtype_name]
    n_channels = int(_manifest_field(manifest, "channels", where))
    rate = float(_manifest_field(manifest, "sample_rate_hz", where))

    domains = {}
    for entry in _manifest_field(manifest, "domains", where):
        domain_id = str(_manifest_field(entry, "id", where))
        if domain_id in domains:
            raise FormatError(f"{where}: duplicate domain id {domain_id!r}")
        n = int(_manifest_field(entry, "num_samples", where))
        t = int(_manifest_field(entry, "length", where))
        if n == 0:
            raise EmptyInputError(f"domain {domain_id!r} holds no samples")
        path = manifest_path.parent / _manifest_field(entry, "file", where)
        raw = path.read_bytes()
        expected = n * n_channels * t * dtype.itemsize
        if len(raw) != expected:
            raise SizeMismatchError(
                f"{path}: expected {expected} bytes for ({n}, {n_channels}, {t}) {dtype_name}, got {len(raw)}"
            )
        data = np.frombuffer(raw, dtype=dtype).reshape(n, n_channels, t).astype(np.float64)
        domains[domain_id] = SignalSet(data, rate)
    if not domains:
        raise EmptyInputError(f"{where}: no domains listed")
    return domains


def save_dataset(manifest_path, domains: dict, dtype: str = "f64le") -> dict:
    """Write ``domains`` next to ``manifest_path``; returns the manifest dict.

    Binary files are named ``<domain_id>.bin``.
    """
    if dtype not in DTYPES:
        raise FormatError(f"dtype must be one of {sorted(DTYPES)}, got {dtype!r}")
    if not domains:
        raise EmptyInputError("no domains to save")
    manifest_path = Path(manifest_path)
    signals = list(domains.values())
    channels = {s.n_channels for s in signals}
    rates = {s.sample_rate_hz for s in signals}
    if len(channels) != 1:
        raise ChannelMismatchError(f"domains disagree on channel count: {sorted(channels)}")
    if len(rates) != 1:
        raise FormatError(f"domains disagree on sample rate: {sorted(rates)}")
    entries = []
    for domain_id, sig in domains.items():
        if not domain_id or domain_id in (".", "..") or "/" in domain_id or "\\" in domain_id:
            raise FormatError(f"domain id {domain_id!r} cannot be used as a file name")
        fname = f"{domain_id}.bin"
        atomic_write_bytes(manifest_path.parent / fname, sig.data.astype(DTYPES[dtype]).tobytes())
        entries.append({"id": domain_id, "file": fname, "num_samples": sig.n_samples, "length": sig.n_times})
    manifest = {
        "version": DATASET_VERSION,
        "sample_rate_hz": float(rates.pop()),
        "channels": channels.pop(),
        "dtype": dtype,
        "domains": entries,
    }
    atomic_write_text(manifest_path, json.dumps(manifest, indent=1) + "\n")
    return manifest
