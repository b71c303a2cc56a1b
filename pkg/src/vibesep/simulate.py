"""
Synthetic vibration mixtures with known ground truth.

A recording is modelled as ``s = (p + c + w) * h`` where ``p`` is a sum of
gear-like cosines, ``c`` a bearing fault (modulated white noise or a modulated
shock train), ``w`` white measurement noise and ``h`` a structural transfer
function shared by all sources.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import fftconvolve

__all__ = [
    "SnrTarget",
    "FaultType",
    "TransferFunction",
    "Tones",
    "SimulationConfig",
    "GeneratedSignal",
    "gen_transfer_function",
    "draw_tones",
    "gen_periodic",
    "gen_modulation",
    "gen_fault",
    "signal_power",
    "measure_snr",
    "scale_to_snr",
    "compose",
    "simulate",
]


class SnrTarget(str, Enum):
    PERIODIC = "Periodic"
    FAULT = "Fault"


class FaultType(str, Enum):
    NONE = "None"
    DISTRIBUTED = "Distributed"
    LOCAL = "Local"


@dataclass(frozen=True)
class TransferFunction:
    """Zero-phase FIR impulse response centred on index ``(n - 1) // 2``."""

    coeffs: np.ndarray
    n_poles: int
    n: int
    pole_freqs: np.ndarray = field(default_factory=lambda: np.empty(0))
    pole_radii: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim != 1 or len(coeffs) != self.n:
            raise ValueError("transfer function length does not match n")
        if not np.any(coeffs):
            raise ValueError("transfer function is identically zero")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def identity(cls, n: int = 1) -> "TransferFunction":
        if n % 2 == 0:
            raise ValueError("filter length must be odd")
        h = np.zeros(n)
        h[(n - 1) // 2] = 1.0
        return cls(h, n_poles=0, n=n)

    def tail_energy_fraction(self) -> float:
        """Energy share held by the outermost 10% of taps (both ends)."""
        k = max(1, self.n // 20)
        e = self.coeffs**2
        return float((e[:k].sum() + e[-k:].sum()) / e.sum())


@dataclass(frozen=True)
class Tones:
    """Parameters of a sum of cosines ``sum_i a_i cos(omega_i n + phi_i)``.

    ``omegas`` are in radians per sample.
    """

    amplitudes: np.ndarray
    omegas: np.ndarray
    phases: np.ndarray

    def render(self, n_samples: int) -> np.ndarray:
        t = np.arange(n_samples)
        out = np.zeros(n_samples)
        for a, w, ph in zip(self.amplitudes, self.omegas, self.phases):
            out += a * np.cos(w * t + ph)
        return out

    def freqs_hz(self, fs: float) -> np.ndarray:
        return np.asarray(self.omegas) * fs / (2 * np.pi)


@dataclass
class SimulationConfig:
    N: int = 24000
    fs: float = 24000.0
    V: int = 10
    L_mod: int = 5
    n_poles: int = 5
    snr_db: float = 10.0
    snr_target: SnrTarget = SnrTarget.PERIODIC
    fault_type: FaultType = FaultType.DISTRIBUTED
    sigma_T: float = 0.1
    mean_rate: float = 100.0
    sigma_w: float = 1.0
    seed: int = 0
    # level of whichever component is not the SNR target
    companion_snr_db: float = 10.0
    tf_len: int = 251

    def __post_init__(self):
        self.snr_target = SnrTarget(self.snr_target)
        self.fault_type = FaultType(self.fault_type)
        if self.N < 1 or self.fs <= 0:
            raise ValueError("N and fs must be positive")
        if self.V < 1:
            raise ValueError("V must be at least 1")
        if self.fault_type is not FaultType.NONE and self.L_mod < 1:
            raise ValueError("L_mod must be at least 1 when a fault is simulated")
        if self.sigma_w <= 0 or self.sigma_T < 0 or self.mean_rate <= 0:
            raise ValueError("sigma_w and mean_rate must be positive, sigma_T non-negative")
        if self.snr_target is SnrTarget.FAULT and self.fault_type is FaultType.NONE:
            raise ValueError("fault SNR target requires a fault")

    def check_length(self, min_samples: int) -> None:
        """Raise if ``N`` cannot feed a separator needing ``min_samples``."""
        if self.N < min_samples:
            raise ValueError(f"N={self.N} is shorter than the required {min_samples} samples")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_target"] = self.snr_target.value
        d["fault_type"] = self.fault_type.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown simulation config fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_json(cls, path) -> "SimulationConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class GeneratedSignal:
    s: np.ndarray
    p: np.ndarray
    q: np.ndarray
    c: np.ndarray
    w: np.ndarray
    tf: TransferFunction
    config: SimulationConfig
    p_tones: Tones | None = None
    q_tones: Tones | None = None
    shock_idx: np.ndarray | None = None

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.s)) / self.config.fs

    def modulation_freqs(self) -> np.ndarray:
        if self.q_tones is None:
            return np.empty(0)
        return self.q_tones.freqs_hz(self.config.fs)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "s", "p", "q", "c", "w"])
            for row in zip(self.t, self.s, self.p, self.q, self.c, self.w):
                wr.writerow([repr(float(v)) for v in row])

    def to_wav(self, path) -> None:
        wavfile.write(path, int(round(self.config.fs)), self.s.astype(np.float32))


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def gen_transfer_function(
    n_poles: int,
    n: int,
    fs: float,
    seed,
    radius_range: tuple[float, float] = (0.90, 0.97),
    nfft: int | None = None,
) -> TransferFunction:
    """Random structural transfer function with ``n_poles`` resonances.

    Each resonance is a conjugate pole pair with frequency uniform on
    ``(0, fs/2)`` and radius uniform on ``radius_range``. The frequency
    response is the sum of the peak-normalised squared magnitude responses of
    the sections, so the filter is zero-phase with a strictly positive
    response. The impulse response is truncated to ``n`` taps around its
    centre and scaled to unit energy.
    """
    if n_poles < 1:
        raise ValueError("n_poles must be at least 1")
    if n % 2 == 0:
        raise ValueError("transfer function length must be odd")
    if n < 2 * n_poles + 1:
        raise ValueError("n must be at least 2 * n_poles + 1")
    lo, hi = radius_range
    if not 0 < lo <= hi < 1:
        raise ValueError("pole radii must lie in (0, 1)")

    rng = _rng(seed)
    freqs = rng.uniform(0.0, fs / 2, n_poles)
    radii = rng.uniform(lo, hi, n_poles)

    if nfft is None:
        nfft = max(1 << 16, 1 << int(np.ceil(np.log2(8 * n))))
    resp = np.zeros(nfft // 2 + 1)
    for f0, r in zip(freqs, radii):
        theta = 2 * np.pi * f0 / fs
        mag = 1.0 / np.abs(np.fft.rfft([1.0, -2 * r * np.cos(theta), r * r], nfft))
        resp += (mag / mag.max()) ** 2

    full = np.fft.irfft(resp, nfft)
    c = (n - 1) // 2
    h = np.concatenate([full[-c:], full[: c + 1]]) if c else full[:1].copy()
    captured = np.sum(h**2) / np.sum(full**2)
    if captured < 0.99:
        raise ValueError(
            f"n={n} captures only {captured:.1%} of the impulse-response energy; "
            "increase n or use more strongly damped poles"
        )
    h /= np.linalg.norm(h)
    return TransferFunction(h, n_poles=n_poles, n=n, pole_freqs=freqs, pole_radii=radii)


def draw_tones(count: int, seed, amp_range: tuple[float, float]) -> Tones:
    rng = _rng(seed)
    amps = rng.uniform(*amp_range, count)
    omegas = rng.uniform(0.0, np.pi, count)
    phases = rng.uniform(-np.pi, np.pi, count)
    return Tones(amps, omegas, phases)


def gen_periodic(V: int, N: int, fs: float, seed) -> np.ndarray:
    """Sum of ``V`` cosines with random frequency, phase and amplitude in (0.5, 1.5)."""
    if V < 1:
        raise ValueError("V must be at least 1")
    return draw_tones(V, seed, (0.5, 1.5)).render(N)


def modulation_from_tones(tones: Tones, N: int) -> np.ndarray:
    """``q(t) = sum_l (1 + B_l cos(omega_l t + phi_l))``; non-negative when every ``B_l <= 1``."""
    return len(tones.amplitudes) + tones.render(N)


def gen_modulation(L_mod: int, N: int, fs: float, seed) -> np.ndarray:
    if L_mod < 1:
        raise ValueError("L_mod must be at least 1")
    return modulation_from_tones(draw_tones(L_mod, seed, (0.3, 1.0)), N)


def shock_times(
    n_samples: int, fs: float, mean_rate: float, sigma_T: float, rng: np.random.Generator
) -> np.ndarray:
    """Sample indices of a jittered shock train.

    Intervals are ``Normal(1/mean_rate, sigma_T**2)`` clamped at one sample.
    """
    mu = 1.0 / mean_rate
    dt_min = 1.0 / fs
    duration = n_samples / fs
    t = rng.uniform(0.0, mu)
    times = []
    while t < duration:
        times.append(t)
        t += max(rng.normal(mu, sigma_T) if sigma_T > 0 else mu, dt_min)
    idx = np.round(np.asarray(times) * fs).astype(int)
    idx = idx[idx < n_samples]
    return np.unique(idx)


def gen_fault(
    q: np.ndarray,
    fault_type: FaultType | str,
    sigma_T: float,
    mean_rate: float,
    fs: float,
    seed,
    return_shocks: bool = False,
):
    """Bearing fault signal driven by the modulation ``q``.

    Distributed faults are ``q(t) e(t)``; local faults put a single-sample
    shock of size ``q(T_k) e_k`` at each shock time ``T_k``.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q < 0):
        raise ValueError("modulation q must be non-negative")
    fault_type = FaultType(fault_type)
    rng = _rng(seed)
    n = len(q)
    shocks = None
    if fault_type is FaultType.NONE:
        c = np.zeros(n)
    elif fault_type is FaultType.DISTRIBUTED:
        c = q * rng.standard_normal(n)
    else:
        if mean_rate * n / fs < 2:
            raise ValueError("mean shock rate gives fewer than 2 shocks in the record")
        shocks = shock_times(n, fs, mean_rate, sigma_T, rng)
        if len(shocks) < 2:
            raise ValueError("fewer than 2 shocks fell inside the record")
        c = np.zeros(n)
        c[shocks] = q[shocks] * rng.standard_normal(len(shocks))
    if return_shocks:
        return c, shocks
    return c


def signal_power(x: np.ndarray) -> float:
    """Mean-square power, the normalised ``||x||^2`` used in the SNR definitions."""
    return float(np.mean(np.square(x)))


def measure_snr(p, q, sigma_w: float, target: SnrTarget | str) -> float:
    target = SnrTarget(target)
    if target is SnrTarget.PERIODIC:
        return 10 * np.log10(signal_power(p) / (signal_power(q) + sigma_w**2))
    return 10 * np.log10(signal_power(q) / sigma_w**2)


def scale_to_snr(
    p: np.ndarray,
    q: np.ndarray,
    c: np.ndarray,
    sigma_w: float,
    snr_db: float,
    snr_target: SnrTarget | str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rescale the target component so its SNR equals ``snr_db``.

    Periodic target: ``10 log10(P(p) / (P(q) + sigma_w^2))``, only ``p`` moves.
    Fault target: ``10 log10(P(q) / sigma_w^2)``, ``q`` and ``c`` move together.
    ``P`` is the mean-square power.
    """
    snr_target = SnrTarget(snr_target)
    ratio = 10.0 ** (snr_db / 10.0)
    if snr_target is SnrTarget.PERIODIC:
        pp = signal_power(p)
        if pp == 0:
            raise ValueError("cannot scale an all-zero periodic component")
        gain = np.sqrt(ratio * (signal_power(q) + sigma_w**2) / pp)
        return p * gain, q, c
    pq = signal_power(q)
    if pq == 0:
        raise ValueError("cannot scale an all-zero fault modulation")
    gain = np.sqrt(ratio * sigma_w**2 / pq)
    return p, q * gain, c * gain


def compose(p, c, w, tf: TransferFunction, config: SimulationConfig | None = None, **extra) -> GeneratedSignal:
    """Pass the summed sources through the transfer function ("same" alignment)."""
    p, c, w = (np.asarray(a, dtype=float) for a in (p, c, w))
    if not len(p) == len(c) == len(w):
        raise ValueError("p, c and w must have equal length")
    src = p + c + w
    if tf.n == 1:
        s = src * tf.coeffs[0]
    else:
        s = fftconvolve(src, tf.coeffs, mode="same")
    if config is None:
        config = SimulationConfig(N=len(p))
    q = extra.pop("q", np.zeros(len(p)))
    return GeneratedSignal(s=s, p=p, q=q, c=c, w=w, tf=tf, config=config, **extra)


def simulate(config: SimulationConfig) -> GeneratedSignal:
    """Generate one recording from ``config``; bit-identical for a given seed."""
    ss = np.random.SeedSequence(config.seed)
    s_tf, s_p, s_q, s_c, s_w = ss.spawn(5)

    tf = gen_transfer_function(config.n_poles, config.tf_len, config.fs, s_tf)
    p_tones = draw_tones(config.V, s_p, (0.5, 1.5))
    p = p_tones.render(config.N)

    has_fault = config.fault_type is not FaultType.NONE
    if has_fault:
        q_tones = draw_tones(config.L_mod, s_q, (0.3, 1.0))
        q = modulation_from_tones(q_tones, config.N)
    else:
        q_tones = None
        q = np.zeros(config.N)
    c, shocks = gen_fault(
        q, config.fault_type, config.sigma_T, config.mean_rate, config.fs, s_c, return_shocks=True
    )
    w = config.sigma_w * _rng(s_w).standard_normal(config.N)

    if config.snr_target is SnrTarget.PERIODIC:
        if has_fault:
            _, q, c = scale_to_snr(p, q, c, config.sigma_w, config.companion_snr_db, SnrTarget.FAULT)
        p, q, c = scale_to_snr(p, q, c, config.sigma_w, config.snr_db, SnrTarget.PERIODIC)
    else:
        p, q, c = scale_to_snr(p, q, c, config.sigma_w, config.snr_db, SnrTarget.FAULT)
        p, q, c = scale_to_snr(p, q, c, config.sigma_w, config.companion_snr_db, SnrTarget.PERIODIC)

    return compose(
        p, c, w, tf, config, q=q, p_tones=p_tones, q_tones=q_tones, shock_idx=shocks
    )
