"""
Detection of second-order cyclostationary content and modulation recovery.

For ``y(t) = q(t) e(t)`` with Gaussian ``e``, the log envelope
``log y^2 = log q^2 + log e^2`` separates the modulation from the noise
additively. After removing the mean, the squared DFT magnitudes of the noise
part, scaled by ``frame_len * pi^2 / 4``, are chi-square with two degrees of
freedom whatever the noise level. Averaging ``K`` frames gives a
Gamma(K, 2/K) statistic and therefore a fixed detection threshold.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammainccinv

__all__ = [
    "LogEnvelopeSpectrum",
    "DetectionResult",
    "QEstimate",
    "log_envelope_spectrum",
    "gamma_threshold",
    "detect_cs2",
    "estimate_q",
]

LOG_FLOOR = 1e-300
MIN_FRAME = 64


@dataclass(frozen=True)
class LogEnvelopeSpectrum:
    freqs: np.ndarray
    values: np.ndarray
    K: int
    frame_len: int
    fs: float = 1.0

    @property
    def bin_width(self) -> float:
        return self.fs / self.frame_len

    def to_rows(self, threshold: float | None = None, h1_mask=None) -> list[list]:
        rows = []
        for i, (f, v) in enumerate(zip(self.freqs, self.values)):
            flag = int(bool(h1_mask[i])) if h1_mask is not None else ""
            rows.append([repr(float(f)), repr(float(v)), "" if threshold is None else repr(float(threshold)), flag])
        return rows

    def to_dict(self) -> dict:
        return {
            "freqs": self.freqs.tolist(),
            "values": self.values.tolist(),
            "K": self.K,
            "frame_len": self.frame_len,
            "fs": self.fs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogEnvelopeSpectrum":
        return cls(np.asarray(d["freqs"], float), np.asarray(d["values"], float), d["K"], d["frame_len"], d["fs"])


@dataclass(frozen=True)
class DetectionResult:
    h1_freqs: tuple
    threshold: float
    p: float
    K: int
    bin_width: float = 0.0
    h1_values: tuple = ()

    @property
    def cs2_present(self) -> bool:
        return len(self.h1_freqs) > 0

    def to_dict(self) -> dict:
        return {
            "h1_freqs": [float(f) for f in self.h1_freqs],
            "h1_values": [float(v) for v in self.h1_values],
            "threshold": float(self.threshold),
            "p": float(self.p),
            "K": int(self.K),
            "bin_width": float(self.bin_width),
            "cs2_present": self.cs2_present,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionResult":
        return cls(
            tuple(d["h1_freqs"]), d["threshold"], d["p"], d["K"], d.get("bin_width", 0.0), tuple(d.get("h1_values", ()))
        )

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


@dataclass(frozen=True)
class QEstimate:
    """Modulation estimate; offset by an unknown constant since the noise level is unknown."""

    q_hat: np.ndarray
    fs: float = 1.0
    kept_bins: tuple = field(default=())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "q_hat"])
            for i, v in enumerate(self.q_hat):
                wr.writerow([repr(i / self.fs), repr(float(v))])


def log_envelope_spectrum(y, K: int, fs: float) -> LogEnvelopeSpectrum:
    """Frame-averaged, normalised spectrum of the mean-removed log envelope.

    ``y`` is cut into ``K`` non-overlapping frames of ``floor(N / K)``
    samples (rounded down to even). DC and Nyquist are dropped, leaving
    ``frame_len / 2 - 1`` bins.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    y = np.asarray(y, dtype=float)
    if len(y) < K * MIN_FRAME:
        raise ValueError(f"need at least {K * MIN_FRAME} samples for K={K}, got {len(y)}")
    if not np.any(y):
        raise ValueError("signal is identically zero")
    frame_len = (len(y) // K) & ~1
    frames = y[: K * frame_len].reshape(K, frame_len)
    z = np.log(frames**2 + LOG_FLOOR)
    z -= z.mean(axis=1, keepdims=True)
    power = np.abs(np.fft.rfft(z, axis=1)) ** 2 / (frame_len * np.pi**2 / 4)
    values = power.mean(axis=0)[1:-1]
    freqs = np.arange(1, frame_len // 2) * fs / frame_len
    return LogEnvelopeSpectrum(freqs, values, K, frame_len, float(fs))


def gamma_threshold(K: int, p: float) -> float:
    """``(1 - p)`` quantile of Gamma(shape=K, scale=2/K)."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    return float(gammainccinv(K, p)) * 2.0 / K


def detect_cs2(spec: LogEnvelopeSpectrum, p: float = 0.001, threshold: float | None = None) -> DetectionResult:
    """Flag every bin whose averaged statistic exceeds the Gamma threshold."""
    thr = gamma_threshold(spec.K, p) if threshold is None else float(threshold)
    if thr <= 0:
        raise ValueError("threshold must be positive")
    hit = spec.values > thr
    return DetectionResult(
        tuple(float(f) for f in spec.freqs[hit]),
        thr,
        float(p),
        int(spec.K),
        spec.bin_width,
        tuple(float(v) for v in spec.values[hit]),
    )


def estimate_q(y, det: DetectionResult, fs: float, bin_tol: int = 1, gate: bool = True) -> QEstimate:
    """Rebuild the modulation from the detected frequencies.

    Each detected frequency is located on the full-record grid of
    ``DFT(y^2)`` at the strongest bin inside its detection cell; that bin,
    its ``bin_tol`` neighbours and DC are kept and all other bins zeroed.
    The inverse transform is clipped at zero before the square root.

    With ``gate`` on, a peak is kept only if its power clears the
    exponential-tail threshold at level ``det.p`` above the median noise
    floor of ``|DFT(y^2)|^2``. Lines found in the log envelope that have no
    counterpart in ``y^2`` (harmonics created by the logarithm when ``q``
    nears zero) would otherwise only add noise.
    """
    if not det.cs2_present:
        raise ValueError("no cyclostationary component detected; nothing to reconstruct")
    if bin_tol < 0:
        raise ValueError("bin_tol must be non-negative")
    y = np.asarray(y, dtype=float)
    n = len(y)
    Y = np.fft.rfft(y**2)
    mag = np.abs(Y)
    full_width = fs / n
    cell = det.bin_width if det.bin_width > 0 else full_width
    floor = np.median(mag[1:] ** 2) / np.log(2.0)
    min_power = -np.log(det.p) * floor if gate else -np.inf
    keep = np.zeros(len(Y), dtype=bool)
    keep[0] = True
    for f in det.h1_freqs:
        lo = max(1, int(np.floor((f - cell / 2) / full_width)))
        hi = min(len(Y) - 1, int(np.ceil((f + cell / 2) / full_width)))
        if hi < lo:
            continue
        peak = lo + int(np.argmax(mag[lo : hi + 1]))
        if mag[peak] ** 2 <= min_power:
            continue
        keep[max(1, peak - bin_tol) : min(len(Y), peak + bin_tol + 1)] = True
    env = np.fft.irfft(np.where(keep, Y, 0.0), n)
    q_hat = np.sqrt(np.maximum(env, 0.0))
    return QEstimate(q_hat, float(fs), tuple(int(i) for i in np.flatnonzero(keep)))
