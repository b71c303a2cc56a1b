"""End-to-end analysis of a single recording and result emission."""

from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cs2, pss, wbd
from .evaluation import StationarityCheck, validate_stationarity
from .io import Recording

__all__ = [
    "SCHEMA_VERSION",
    "PipelineError",
    "PipelineParams",
    "AnalysisReport",
    "pipeline_analyze",
    "emit_outputs",
    "load_report",
]

SCHEMA_VERSION = 1


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineParams:
    pss: pss.CnnConfig = field(default_factory=pss.CnnConfig)
    n_filter: int = 250
    K: int = 20
    p: float = 0.001
    threshold_override: float | None = None
    stationarity_tol: float = 0.05
    stationarity_frames: int = 20
    bin_tol: int = 1

    def __post_init__(self):
        if self.n_filter < 1 or self.K < 1:
            raise ValueError("n_filter and K must be positive")
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")

    @property
    def filter_len(self) -> int:
        """Whitening filter length; even requests are rounded up to the next odd value."""
        return self.n_filter | 1

    def to_dict(self) -> dict:
        return {
            "pss": self.pss.to_dict(),
            "n_filter": self.n_filter,
            "K": self.K,
            "p": self.p,
            "threshold_override": self.threshold_override,
            "stationarity_tol": self.stationarity_tol,
            "stationarity_frames": self.stationarity_frames,
            "bin_tol": self.bin_tol,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineParams":
        d = dict(d)
        if "pss" in d:
            d["pss"] = pss.CnnConfig.from_dict(d["pss"])
        return cls(**d)


@dataclass
class AnalysisReport:
    fs: float
    n_samples: int
    stationarity: StationarityCheck
    train_report: dict
    valid_start: int
    p_hat: np.ndarray
    y: np.ndarray
    filter_g: np.ndarray
    spectrum: cs2.LogEnvelopeSpectrum
    detection: cs2.DetectionResult
    q_hat: np.ndarray | None
    params: PipelineParams
    source: str = "simulated"
    timings: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def cs2_present(self) -> bool:
        return self.detection.cs2_present

    def to_dict(self, include_timings: bool = True) -> dict:
        d = {
            "schema_version": self.schema_version,
            "source": self.source,
            "fs": self.fs,
            "n_samples": self.n_samples,
            "params": self.params.to_dict(),
            "stationarity": self.stationarity.to_dict(),
            "train_report": self.train_report,
            "valid_start": self.valid_start,
            "p_hat": self.p_hat.tolist(),
            "y": self.y.tolist(),
            "filter_g": self.filter_g.tolist(),
            "spectrum": self.spectrum.to_dict(),
            "detection": self.detection.to_dict(),
            "q_hat": None if self.q_hat is None else self.q_hat.tolist(),
        }
        if include_timings:
            d["timings"] = dict(self.timings)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {d.get('schema_version')!r}")
        return cls(
            fs=d["fs"],
            n_samples=d["n_samples"],
            stationarity=StationarityCheck.from_dict(d["stationarity"]),
            train_report=d["train_report"],
            valid_start=d["valid_start"],
            p_hat=np.asarray(d["p_hat"], float),
            y=np.asarray(d["y"], float),
            filter_g=np.asarray(d["filter_g"], float),
            spectrum=cs2.LogEnvelopeSpectrum.from_dict(d["spectrum"]),
            detection=cs2.DetectionResult.from_dict(d["detection"]),
            q_hat=None if d["q_hat"] is None else np.asarray(d["q_hat"], float),
            params=PipelineParams.from_dict(d["params"]),
            source=d.get("source", ""),
            timings=d.get("timings", {}),
            schema_version=d["schema_version"],
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, AnalysisReport):
            return NotImplemented
        return self.to_dict(include_timings=False) == other.to_dict(include_timings=False)


REQUIRED_KEYS = {
    "schema_version",
    "fs",
    "n_samples",
    "params",
    "stationarity",
    "train_report",
    "valid_start",
    "p_hat",
    "y",
    "filter_g",
    "spectrum",
    "detection",
    "q_hat",
    "timings",
}


def validate_report_dict(d: dict) -> None:
    """Raise ``ValueError`` if ``d`` does not look like a current report document."""
    missing = REQUIRED_KEYS - set(d)
    if missing:
        raise ValueError(f"report is missing {sorted(missing)}")
    if d["schema_version"] != SCHEMA_VERSION:
        raise ValueError("schema version mismatch")
    if (d["q_hat"] is not None) != bool(d["detection"]["cs2_present"]):
        raise ValueError("q_hat must be present exactly when a detection was made")
    if len(d["p_hat"]) != len(d["y"]):
        raise ValueError("p_hat and y lengths differ")
    if len(d["spectrum"]["values"]) != d["spectrum"]["frame_len"] // 2 - 1:
        raise ValueError("spectrum length does not match frame length")


def pipeline_analyze(rec: Recording, params: PipelineParams | None = None) -> AnalysisReport:
    """Run separation, deconvolution, detection and modulation recovery.

    ``p_hat``, ``y`` and ``q_hat`` cover the samples where every filter was
    fully supported, starting at ``valid_start`` in the input index.
    """
    params = params or PipelineParams()
    s = rec.samples
    timings = {}

    def stage(name, fn, *args, **kw):
        t = time.perf_counter()
        try:
            out = fn(*args, **kw)
        except Exception as exc:  # re-raised with the failing stage attached
            raise PipelineError(name, str(exc)) from exc
        timings[name] = time.perf_counter() - t
        return out

    stat = stage("stationarity", validate_stationarity, s, params.stationarity_frames, params.stationarity_tol)
    if not stat.passed:
        warnings.warn(
            f"recording rms varies by {stat.spread:.1%} across frames (limit {stat.tol:.0%})",
            RuntimeWarning,
            stacklevel=2,
        )

    model, report = stage("pss", pss.train, s, params.pss)
    d_hat, x_hat, valid = stage("pss", pss.separate, s, model)
    d_hat, x_hat = d_hat[valid], x_hat[valid]

    n = params.filter_len
    ac = stage("wbd", wbd.estimate_autocorr, x_hat, n)
    filt = stage("wbd", wbd.whitening_filter, ac)
    c = filt.center
    end = len(x_hat) - c
    if end <= c:
        raise PipelineError("wbd", "separated signal is shorter than the whitening filter")
    p_hat = stage("wbd", wbd.apply_deconv, d_hat, filt)[c:end]
    y = stage("wbd", wbd.apply_deconv, x_hat, filt)[c:end]

    spec = stage("cs2", cs2.log_envelope_spectrum, y, params.K, rec.fs)
    det = stage("cs2", cs2.detect_cs2, spec, params.p, params.threshold_override)
    q_hat = None
    if det.cs2_present:
        q_hat = stage("cs2", cs2.estimate_q, y, det, rec.fs, params.bin_tol).q_hat

    return AnalysisReport(
        fs=float(rec.fs),
        n_samples=len(s),
        stationarity=stat,
        train_report=report.summary(),
        valid_start=valid.start + c,
        p_hat=p_hat,
        y=y,
        filter_g=filt.g,
        spectrum=spec,
        detection=det,
        q_hat=q_hat,
        params=params,
        source=rec.source,
        timings=timings,
    )


def _write_series(path: Path, header, columns) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in zip(*columns):
            wr.writerow([repr(float(v)) for v in row])


def emit_outputs(report: AnalysisReport, out_dir) -> list[Path]:
    """Write ``report.json`` and the CSV series behind the standard plots."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t = (report.valid_start + np.arange(len(report.p_hat))) / report.fs
    written = []

    path = out / "report.json"
    path.write_text(json.dumps(report.to_dict(), indent=1))
    written.append(path)

    for name, series in (("p_hat", report.p_hat), ("y", report.y)):
        path = out / f"{name}.csv"
        _write_series(path, ["t", name], [t, series])
        written.append(path)

    det = report.detection
    hit = report.spectrum.values > det.threshold
    path = out / "log_envelope_spectrum.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["freq", "value", "threshold", "h1_flag"])
        wr.writerows(report.spectrum.to_rows(det.threshold, hit))
    written.append(path)

    stale = out / "q_hat.csv"
    if report.q_hat is not None:
        _write_series(stale, ["t", "q_hat"], [t, report.q_hat])
        written.append(stale)
    elif stale.exists():
        stale.unlink()
    return written


def load_report(path) -> AnalysisReport:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    d = json.loads(path.read_text())
    validate_report_dict(d)
    return AnalysisReport.from_dict(d)
