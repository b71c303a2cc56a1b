"""
Periodic/stochastic separation with a linear dilated convolutional predictor.

The predictor estimates ``s(t)`` from samples at least ``lag`` steps in the
past. With a lag longer than the correlation length of the stochastic part,
only the deterministic (gear) content is predictable, so the prediction is an
estimate of the deterministic component and the residual is the stochastic
one.

Layer ``l`` convolves its input with a kernel of ``kernel_size`` taps spaced
``2**l`` samples apart; there are no biases or activations, so the whole stack
is a single long FIR filter with a sparse factorisation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.signal import fftconvolve, medfilt, welch

__all__ = [
    "CnnConfig",
    "CnnModel",
    "TrainReport",
    "receptive_field",
    "valid_start",
    "forward",
    "loss_and_grad",
    "floor_whitener",
    "train",
    "separate",
]

OPTIMIZERS = ("lbfgs", "adam")


@dataclass(frozen=True)
class CnnConfig:
    depth: int = 4
    kernel_size: int = 135
    lag: int = 500
    train_fraction: float = 0.8
    learning_rate: float = 1e-3
    max_epochs: int = 500
    patience: int = 10
    seed: int = 0
    optimizer: str = "lbfgs"
    # fit on a copy of s whose broadband noise floor has been flattened
    precondition: bool = True

    def __post_init__(self):
        if self.depth < 1 or self.kernel_size < 1 or self.lag < 1:
            raise ValueError("depth, kernel_size and lag must be positive")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.learning_rate <= 0 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("learning_rate, max_epochs and patience must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")

    @property
    def dilations(self) -> list[int]:
        return [2**i for i in range(self.depth)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CnnConfig":
        return cls(**d)


def receptive_field(config: CnnConfig) -> int:
    return (config.kernel_size - 1) * (2**config.depth - 1) + 1


def valid_start(config: CnnConfig) -> int:
    """First output index whose prediction sees no zero padding."""
    return receptive_field(config) + config.lag - 1


@dataclass(frozen=True)
class CnnModel:
    weights: tuple
    config: CnnConfig

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=float) for w in self.weights)
        if len(ws) != self.config.depth:
            raise ValueError("number of kernels does not match depth")
        for w in ws:
            if w.shape != (self.config.kernel_size,):
                raise ValueError("kernel length does not match kernel_size")
            w.setflags(write=False)
        object.__setattr__(self, "weights", ws)

    def impulse_response(self) -> np.ndarray:
        """Equivalent single FIR filter acting on ``s(t - lag)``."""
        h = np.ones(1)
        for l, b in enumerate(self.weights):
            h = np.convolve(h, _upsample(b, 2**l))
        return h

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "weights": [w.tolist() for w in self.weights],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CnnModel":
        return cls(tuple(np.asarray(w, dtype=float) for w in d["weights"]), CnnConfig.from_dict(d["config"]))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_json(cls, path) -> "CnnModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class TrainReport:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    epochs_run: int = 0
    stopped_early: bool = False
    best_epoch: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["epoch", "train_mse", "val_mse"])
            for i, (a, b) in enumerate(zip(self.train_mse, self.val_mse), start=1):
                wr.writerow([i, repr(float(a)), repr(float(b))])

    def summary(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "stopped_early": self.stopped_early,
            "best_epoch": self.best_epoch,
            "final_train_mse": float(self.train_mse[-1]) if self.train_mse else None,
            "final_val_mse": float(self.val_mse[-1]) if self.val_mse else None,
            "best_val_mse": float(self.val_mse[self.best_epoch - 1]) if self.best_epoch else None,
        }


def _upsample(b: np.ndarray, dilation: int) -> np.ndarray:
    k = np.zeros((len(b) - 1) * dilation + 1)
    k[::dilation] = b
    return k


def _layer_inputs(weights, s: np.ndarray, lag: int) -> list[np.ndarray]:
    """Inputs to every layer plus the final output, all of length ``len(s)``."""
    n = len(s)
    u = np.zeros(n)
    u[lag:] = s[: n - lag]
    acts = [u]
    for l, b in enumerate(weights):
        d = 2**l
        # explicit shifted sums keep the map exactly causal (no FFT round-off leakage)
        v = b[0] * u
        for k in range(1, len(b)):
            shift = d * k
            if shift >= n:
                break
            v[shift:] += b[k] * u[: n - shift]
        u = v
        acts.append(u)
    return acts


def _check_signal(s, config: CnnConfig, need: int) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    if len(s) < need:
        raise ValueError(f"signal has {len(s)} samples; at least {need} are required")
    if not np.all(np.isfinite(s)):
        raise ValueError("signal contains non-finite samples")
    return s


def forward(model: CnnModel, s) -> np.ndarray:
    """Lagged prediction of ``s``; samples before ``valid_start`` use zero padding."""
    cfg = model.config
    s = _check_signal(s, cfg, receptive_field(cfg) + cfg.lag)
    return _layer_inputs(model.weights, s, cfg.lag)[-1]


def loss_and_grad(weights, s, lag: int, start: int, stop: int | None = None):
    """MSE of predicting ``s[start:stop]`` and its gradient for each kernel."""
    s = np.asarray(s, dtype=float)
    n = len(s)
    stop = n if stop is None else stop
    acts = _layer_inputs(weights, s, lag)
    resid = acts[-1][start:stop] - s[start:stop]
    count = len(resid)
    err = np.zeros(n)
    err[start:stop] = 2.0 * resid / count
    return float(resid @ resid / count), _backprop(weights, acts, err)


def _backprop(weights, acts, err: np.ndarray) -> list[np.ndarray]:
    n = len(err)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    grads = [None] * len(weights)
    g = err
    for l in range(len(weights) - 1, -1, -1):
        d = 2**l
        m = len(weights[l])
        # d loss / d b[k] = sum_t g(t) u(t - d k): cross-correlation at lags d k
        xc = np.fft.irfft(np.fft.rfft(g, nfft) * np.conj(np.fft.rfft(acts[l], nfft)), nfft)
        grads[l] = xc[: (m - 1) * d + 1 : d].copy()
        if l:
            k = _upsample(weights[l], d)
            off = len(k) - 1
            g = fftconvolve(g, k[::-1])[off : off + n]
    return grads


def floor_whitener(s, nperseg: int = 1024, med_bins: int = 31, ntaps: int = 257) -> np.ndarray:
    """Zero-phase FIR that flattens the broadband floor of ``s``.

    The Welch PSD is median-filtered across frequency so narrow lines do not
    shape the filter; the filter gain is the inverse square root of that
    smoothed floor. Lines keep their height above the floor, resonances in the
    floor are removed.
    """
    s = np.asarray(s, dtype=float)
    nperseg = min(nperseg, len(s))
    _, psd = welch(s, nperseg=nperseg)
    floor = medfilt(psd, med_bins if med_bins <= len(psd) else (len(psd) // 2) * 2 - 1)
    floor = np.maximum(floor, 1e-12 * floor.max())
    ir = np.fft.irfft(1.0 / np.sqrt(floor))
    half = min((ntaps - 1) // 2, len(ir) // 2 - 1)
    taps = np.concatenate([ir[-half:], ir[: half + 1]]) if half else ir[:1]
    return taps * np.hanning(len(taps) + 2)[1:-1]


def _init_weights(cfg: CnnConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    a = 1.0 / np.sqrt(cfg.kernel_size * cfg.depth)
    w = rng.uniform(-a, a, (cfg.depth, cfg.kernel_size))
    # near-identity start: the stack initially passes s(t - lag) through
    w[:, 0] += 1.0
    return w.ravel()


class _EarlyStop:
    """Tracks validation MSE and decides when its running mean has stalled."""

    def __init__(self, patience: int, rel_tol: float = 1e-6):
        self.patience = patience
        self.rel_tol = rel_tol
        self.best_mean = np.inf
        self.stall = 0
        self.best_val = np.inf
        self.best_theta = None
        self.best_epoch = 0

    def update(self, epoch: int, val: float, theta: np.ndarray, history: list) -> bool:
        if val < self.best_val:
            self.best_val = val
            self.best_theta = theta.copy()
            self.best_epoch = epoch
        mean = float(np.mean(history[-self.patience :]))
        if mean < self.best_mean * (1.0 - self.rel_tol):
            self.best_mean = mean
            self.stall = 0
        else:
            self.stall += 1
        return self.stall >= self.patience


def train(s, config: CnnConfig | None = None) -> tuple[CnnModel, TrainReport]:
    """Fit the dilated predictor to ``s``.

    The first ``train_fraction`` of the record is the training set and the
    remainder the validation set. One epoch is one full-batch optimiser
    step. Training halts when the windowed validation MSE stops improving
    and the weights with the lowest validation MSE are returned. Reported
    MSE values are in the units of ``s``.
    """
    cfg = config or CnnConfig()
    rf = receptive_field(cfg)
    s = _check_signal(s, cfg, 2 * (rf + cfg.lag))
    scale = float(np.std(s))
    if scale == 0:
        raise ValueError("signal has zero variance")

    n = len(s)
    target = s
    edge = 0
    if cfg.precondition:
        # convolutions commute, so kernels fitted on the filtered record
        # predict the raw record equally well
        taps = floor_whitener(s)
        target = fftconvolve(s, taps, mode="same")
        # samples within half a filter of either end carry edge transients
        edge = len(taps) // 2
    target = target / np.std(target[edge : n - edge])

    t0 = valid_start(cfg) + edge
    split = int(cfg.train_fraction * n)
    stop = n - edge
    if split - t0 < cfg.kernel_size or stop - split < 1:
        raise ValueError("signal too short for the requested split and receptive field")
    depth = cfg.depth
    var = scale**2
    cache = {}

    def objective(theta):
        ws = np.split(theta, depth)
        # overflow is caught below as divergence rather than warned about here
        with np.errstate(over="ignore", invalid="ignore"):
            acts = _layer_inputs(ws, target, cfg.lag)
            r = acts[-1] - target
            tr = float(np.mean(r[t0:split] ** 2))
            va = float(np.mean(r[split:stop] ** 2))
            err = np.zeros(n)
            err[t0:split] = 2.0 * r[t0:split] / (split - t0)
            grad = np.concatenate(_backprop(ws, acts, err))
        cache["key"] = theta.tobytes()
        cache["mse"] = (tr, va)
        return tr, grad

    def mses(theta):
        if cache.get("key") != theta.tobytes():
            objective(theta)
        return cache["mse"]

    report = TrainReport()
    stopper = _EarlyStop(cfg.patience)
    theta = _init_weights(cfg)

    def record(th) -> bool:
        tr, va = mses(th)
        if not (np.isfinite(tr) and np.isfinite(va)):
            raise FloatingPointError("training diverged; lower learning_rate")
        report.train_mse.append(tr * var)
        report.val_mse.append(va * var)
        report.epochs_run += 1
        return stopper.update(report.epochs_run, va, th, report.val_mse)

    if cfg.optimizer == "lbfgs":

        def callback(intermediate_result):
            if record(intermediate_result.x):
                report.stopped_early = True
                raise StopIteration

        minimize(
            objective,
            theta,
            jac=True,
            method="L-BFGS-B",
            callback=callback,
            options=dict(maxiter=cfg.max_epochs, maxcor=30, gtol=0.0, ftol=0.0),
        )
    else:
        m1 = np.zeros_like(theta)
        m2 = np.zeros_like(theta)
        b1, b2 = 0.9, 0.999
        for epoch in range(1, cfg.max_epochs + 1):
            _, grad = objective(theta)
            m1 = b1 * m1 + (1 - b1) * grad
            m2 = b2 * m2 + (1 - b2) * grad * grad
            step = (m1 / (1 - b1**epoch)) / (np.sqrt(m2 / (1 - b2**epoch)) + 1e-8)
            theta = theta - cfg.learning_rate * step
            if record(theta):
                report.stopped_early = True
                break

    if stopper.best_theta is None:
        stopper.best_theta = theta
    report.best_epoch = stopper.best_epoch
    model = CnnModel(tuple(np.split(stopper.best_theta, depth)), cfg)
    return model, report


def separate(s, model: CnnModel) -> tuple[np.ndarray, np.ndarray, slice]:
    """Split ``s`` into predicted deterministic and residual stochastic parts."""
    s = np.asarray(s, dtype=float)
    d_hat = forward(model, s)
    x_hat = s - d_hat
    return d_hat, x_hat, slice(valid_start(model.config), len(s))
