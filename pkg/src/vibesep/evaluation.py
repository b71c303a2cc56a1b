"""Scoring helpers and recording checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import welch

__all__ = [
    "r_squared",
    "r_squared_dc",
    "StationarityCheck",
    "validate_stationarity",
    "spectral_flatness",
]


def _slice(x, valid_range):
    x = np.asarray(x, dtype=float)
    return x if valid_range is None else x[valid_range]


def r_squared(truth, estimate, valid_range=None) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot`` on ``valid_range``."""
    a = _slice(truth, valid_range)
    b = _slice(estimate, valid_range)
    if a.shape != b.shape:
        raise ValueError("truth and estimate lengths differ on the valid range")
    ss_tot = np.sum((a - a.mean()) ** 2)
    if ss_tot == 0:
        raise ValueError("truth has zero variance")
    return float(1.0 - np.sum((a - b) ** 2) / ss_tot)


def r_squared_dc(truth, estimate, valid_range=None) -> float:
    """R² after shifting ``estimate`` by the least-squares constant offset."""
    a = _slice(truth, valid_range)
    b = _slice(estimate, valid_range)
    if a.shape != b.shape:
        raise ValueError("truth and estimate lengths differ on the valid range")
    return r_squared(a, b + (a.mean() - b.mean()))


@dataclass(frozen=True)
class StationarityCheck:
    passed: bool
    frame_rms: np.ndarray
    spread: float
    tol: float

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "frame_rms": self.frame_rms.tolist(),
            "spread": self.spread,
            "tol": self.tol,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StationarityCheck":
        return cls(d["passed"], np.asarray(d["frame_rms"], float), d["spread"], d["tol"])


def validate_stationarity(s, n_frames: int = 20, tol: float = 0.05) -> StationarityCheck:
    """Relative rms spread ``(max - min) / mean`` across ``n_frames`` frames."""
    s = np.asarray(s, dtype=float)
    if n_frames < 1:
        raise ValueError("n_frames must be positive")
    if len(s) < 32 * n_frames:
        raise ValueError(f"need at least {32 * n_frames} samples for {n_frames} frames")
    flen = len(s) // n_frames
    rms = np.sqrt(np.mean(s[: flen * n_frames].reshape(n_frames, flen) ** 2, axis=1))
    mean = rms.mean()
    spread = float((rms.max() - rms.min()) / mean) if mean > 0 else 0.0
    return StationarityCheck(bool(spread <= tol), rms, spread, float(tol))


def spectral_flatness(x, nperseg: int = 256) -> float:
    """Geometric over arithmetic mean of the Welch PSD, DC and Nyquist excluded."""
    _, psd = welch(np.asarray(x, dtype=float), nperseg=nperseg)
    psd = psd[1:-1]
    return float(np.exp(np.mean(np.log(psd))) / np.mean(psd))
