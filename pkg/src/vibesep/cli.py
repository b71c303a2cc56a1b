"""Command-line interface: ``vibesep {simulate,analyze,campaign,threshold}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import cs2
from .campaign import CampaignConfig, run_campaign
from .io import load_recording
from .pipeline import PipelineError, PipelineParams, emit_outputs, pipeline_analyze
from .simulate import SimulationConfig, simulate

log = logging.getLogger("vibesep")

TABLE_K = (3, 5, 10, 20, 40)
TABLE_P = (0.01, 0.001)


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _read_json(path, stage: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise StageError(stage, f"cannot read {path}: {exc}") from exc


def cmd_simulate(args) -> None:
    try:
        cfg = SimulationConfig.from_dict(_read_json(args.config, "config")) if args.config else SimulationConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        sig = simulate(cfg)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("simulate", str(exc)) from exc
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        cfg.to_json(out / "config.json")
        sig.to_csv(out / "signal.csv")
        sig.to_wav(out / "signal.wav")
    except OSError as exc:
        raise StageError("output", str(exc)) from exc
    print(f"wrote {out / 'signal.wav'} ({cfg.N} samples at {cfg.fs:g} Hz)")


def cmd_analyze(args) -> None:
    try:
        rec = load_recording(args.input, args.format, args.channel, args.fs)
    except Exception as exc:
        raise StageError("load", str(exc)) from exc
    try:
        params = PipelineParams.from_dict(_read_json(args.params, "params")) if args.params else PipelineParams()
    except StageError:
        raise
    except Exception as exc:
        raise StageError("params", str(exc)) from exc
    try:
        report = pipeline_analyze(rec, params)
    except PipelineError as exc:
        raise StageError(exc.stage, str(exc.__cause__ or exc)) from exc
    try:
        emit_outputs(report, args.out)
    except OSError as exc:
        raise StageError("output", str(exc)) from exc
    det = report.detection
    verdict = "present" if det.cs2_present else "absent"
    print(f"CS2 component {verdict}: {len(det.h1_freqs)} bins above threshold {det.threshold:.5f}")
    if det.cs2_present:
        print("frequencies [Hz]: " + ", ".join(f"{f:g}" for f in det.h1_freqs))


def cmd_campaign(args) -> None:
    try:
        cfg = CampaignConfig.from_dict(_read_json(args.config, "config")) if args.config else CampaignConfig()
    except StageError:
        raise
    except Exception as exc:
        raise StageError("config", str(exc)) from exc

    def progress(done, total):
        log.info("run %d/%d", done, total)

    result = run_campaign(cfg, progress=progress)
    try:
        out = Path(args.out)
        if out.suffix.lower() == ".json":
            result.to_json(out)
        else:
            result.to_csv(out)
    except OSError as exc:
        raise StageError("output", str(exc)) from exc
    for r in result.rows:
        print(f"{r.target} snr={r.snr_db:+g} dB  R2={r.mean_r2:.3f} +/- {r.std_r2:.3f}  detected {r.n_detected}/{r.n_runs}")


def cmd_threshold(args) -> None:
    try:
        if args.k is not None or args.p is not None:
            ks = [args.k] if args.k is not None else list(TABLE_K)
            ps = [args.p] if args.p is not None else list(TABLE_P)
        else:
            ks, ps = list(TABLE_K), list(TABLE_P)
        rows = [(k, [cs2.gamma_threshold(k, p) for p in ps]) for k in ks]
    except ValueError as exc:
        raise StageError("threshold", str(exc)) from exc
    print("K".rjust(4) + "".join(f"p={p:g}".rjust(12) for p in ps))
    for k, vals in rows:
        print(f"{k:4d}" + "".join(f"{v:12.5f}" for v in vals))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vibesep", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="generate a synthetic recording")
    sp.add_argument("--config", help="simulation config JSON")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analyze", help="run the separation and detection pipeline")
    sp.add_argument("--in", dest="input", required=True, help="WAV or CSV recording")
    sp.add_argument("--format", choices=["wav", "csv"])
    sp.add_argument("--channel", type=int, default=None, help="channel of a multi-channel WAV")
    sp.add_argument("--fs", type=float, help="sampling rate for single-column CSV input")
    sp.add_argument("--params", help="pipeline parameter JSON")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("campaign", help="R² against SNR on simulated data")
    sp.add_argument("--config", help="campaign config JSON")
    sp.add_argument("--out", required=True, help="CSV or JSON results file")
    sp.set_defaults(func=cmd_campaign)

    sp = sub.add_parser("threshold", help="print Gamma detection thresholds")
    sp.add_argument("--k", type=int)
    sp.add_argument("--p", type=float)
    sp.set_defaults(func=cmd_threshold)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"vibesep {args.command}: [{exc.stage}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
