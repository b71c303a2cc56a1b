"""Recording ingestion from WAV and CSV files."""

from __future__ import annotations

import csv
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

__all__ = ["Recording", "load_recording"]


@dataclass
class Recording:
    samples: np.ndarray
    fs: float
    source: str = "simulated"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValueError("recording must be single-channel")
        if not self.fs > 0:
            raise ValueError("sampling rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("recording contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)


def _pcm_width(path) -> int | None:
    try:
        with wave.open(str(path), "rb") as fh:
            return fh.getsampwidth()
    except (wave.Error, EOFError):
        return None


def _load_wav(path: Path, channel: int | None) -> Recording:
    fs, data = wavfile.read(path)
    if data.size == 0:
        raise ValueError("empty WAV file")
    if data.dtype == np.int16:
        x, enc = data / 32768.0, "pcm16"
    elif data.dtype == np.int32 and _pcm_width(path) == 3:
        # scipy left-justifies 24-bit samples in int32
        x, enc = data / 2.0**31, "pcm24"
    elif data.dtype == np.float32:
        x, enc = data.astype(float), "float32"
    else:
        raise ValueError(f"unsupported WAV encoding ({data.dtype}); use PCM16, PCM24 or float32")
    if x.ndim == 2:
        if channel is None:
            raise ValueError(f"WAV file has {x.shape[1]} channels; select one explicitly")
        if not 0 <= channel < x.shape[1]:
            raise ValueError(f"channel {channel} out of range for {x.shape[1]} channels")
        x = x[:, channel]
    elif channel not in (None, 0):
        raise ValueError("mono WAV file has only channel 0")
    return Recording(x, float(fs), str(path), {"format": "wav", "encoding": enc})


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _load_csv(path: Path, fs: float | None, rel_tol: float = 1e-6) -> Recording:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise ValueError("empty CSV file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("CSV rows have inconsistent column counts")
    table = np.array([[float(c) for c in r] for r in rows])
    if width == 1:
        if fs is None:
            raise ValueError("single-column CSV needs an explicit sampling rate")
        return Recording(table[:, 0], float(fs), str(path), {"format": "csv"})
    if width != 2:
        raise ValueError("CSV must have one column (samples) or two columns (t, value)")
    t = table[:, 0]
    if len(t) < 2:
        raise ValueError("two-column CSV needs at least two rows to infer the sampling rate")
    dt = np.diff(t)
    step = (t[-1] - t[0]) / (len(t) - 1)
    if step <= 0 or np.max(np.abs(dt - step)) > rel_tol * step:
        raise ValueError("non-uniform sampling in the time column")
    inferred = 1.0 / step
    if fs is not None and abs(fs - inferred) > rel_tol * fs:
        raise ValueError(f"time column implies fs={inferred:g}, not {fs:g}")
    return Recording(table[:, 1], inferred, str(path), {"format": "csv"})


def load_recording(path, format: str | None = None, channel: int | None = 0, fs: float | None = None) -> Recording:
    """Read a WAV or CSV recording.

    Integer WAV samples are scaled to [-1, 1]. A two-column CSV is read as
    ``(t, value)`` with the rate taken from the uniform ``t`` spacing.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "wav":
        return _load_wav(path, channel)
    if fmt == "csv":
        return _load_csv(path, fs)
    raise ValueError(f"unsupported recording format {fmt!r}")
