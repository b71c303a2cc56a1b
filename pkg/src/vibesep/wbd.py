"""
Whitening-based deconvolution.

The stochastic component seen at the sensor is white noise shaped by the
structural transfer function, so its autocorrelation carries the transfer
function's autocorrelation. Whitening that autocorrelation with the inverse
square root of its Toeplitz matrix gives a zero-phase filter that undoes the
transfer function magnitude; the same filter is then applied to the periodic
component.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import eigh, toeplitz
from scipy.signal import convolve

__all__ = [
    "AutocorrSequence",
    "DeconvFilter",
    "estimate_autocorr",
    "whitening_matrix",
    "whitening_filter",
    "apply_deconv",
]


@dataclass(frozen=True)
class AutocorrSequence:
    r: np.ndarray
    n: int

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or len(r) != self.n:
            raise ValueError("autocorrelation length does not match n")
        if self.n % 2 == 0:
            raise ValueError("n must be odd")
        object.__setattr__(self, "r", r)

    @property
    def sigma2(self) -> float:
        return float(self.r[0])

    def toeplitz(self) -> np.ndarray:
        return toeplitz(self.r)

    def is_valid(self) -> bool:
        return self.r[0] > 0 and bool(np.all(np.abs(self.r) <= self.r[0] * (1 + 1e-12)))


@dataclass(frozen=True)
class DeconvFilter:
    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.ndim != 1 or len(g) % 2 == 0:
            raise ValueError("filter must be one-dimensional with odd length")
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:
        return len(self.g)

    @property
    def center(self) -> int:
        return (len(self.g) - 1) // 2

    @classmethod
    def identity(cls, n: int = 1) -> "DeconvFilter":
        g = np.zeros(n)
        g[(n - 1) // 2] = 1.0
        return cls(g)

    def to_dict(self) -> dict:
        return {"g": self.g.tolist(), "center": self.center}

    @classmethod
    def from_dict(cls, d: dict) -> "DeconvFilter":
        return cls(np.asarray(d["g"], dtype=float))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_json(cls, path) -> "DeconvFilter":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["index", "g"])
            for i, v in enumerate(self.g):
                wr.writerow([i - self.center, repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "DeconvFilter":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        return cls(np.array([float(r[1]) for r in rows]))


def estimate_autocorr(x, n: int) -> AutocorrSequence:
    """Biased (1/N) autocorrelation estimate for lags ``0 .. n-1``."""
    if n < 1 or n % 2 == 0:
        raise ValueError("n must be a positive odd integer")
    x = np.asarray(x, dtype=float)
    N = len(x)
    if N < 10 * n:
        raise ValueError(f"need at least {10 * n} samples to estimate {n} lags, got {N}")
    if np.all(x == x[0]):
        return AutocorrSequence(np.zeros(n), n)
    mu = x.mean()
    if abs(mu) > 1e-12 * x.std():
        x = x - mu
    nfft = 1 << int(np.ceil(np.log2(2 * N)))
    spec = np.fft.rfft(x, nfft)
    r = np.fft.irfft(spec.real**2 + spec.imag**2, nfft)[:n] / N
    return AutocorrSequence(r, n)


def whitening_matrix(ac: AutocorrSequence, reg_eps: float = 1e-10) -> np.ndarray:
    """``G = sigma * R^(-1/2)`` so that ``G R G^T = sigma^2 I``."""
    if not np.any(ac.r):
        raise ValueError("autocorrelation is identically zero")
    if ac.r[0] <= 0:
        raise ValueError("zero-lag autocorrelation must be positive")
    lam, U = eigh(ac.toeplitz())
    lam = np.maximum(lam, reg_eps * lam.max())
    return np.sqrt(ac.sigma2) * (U / np.sqrt(lam)) @ U.T


def whitening_filter(ac: AutocorrSequence, reg_eps: float = 1e-10) -> DeconvFilter:
    """Centre column of the whitening matrix, symmetrised to remove round-off."""
    G = whitening_matrix(ac, reg_eps)
    g = G[:, (ac.n - 1) // 2]
    return DeconvFilter(0.5 * (g + g[::-1]))


def apply_deconv(sig, filt: DeconvFilter) -> np.ndarray:
    """Centred convolution; the first and last ``filt.center`` samples see padding."""
    sig = np.asarray(sig, dtype=float)
    if len(sig) < filt.n:
        raise ValueError("signal is shorter than the filter")
    if filt.n == 1:
        return sig * filt.g[0]
    return convolve(sig, filt.g, mode="same")
