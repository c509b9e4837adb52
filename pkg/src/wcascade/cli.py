"""Command-line front end: simulate cascades, analyze series, emit tables.

Exit codes are a frozen contract: 0 success, 2 invalid input or config,
3 I/O failure, 4 analysis failure.  Every command is deterministic given
its config and seed; rerunning produces byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from wcascade import cascade, empirics, wtmm
from wcascade.dwt import TimeSeries, dwt_forward, dwt_inverse, load_pyramid, rescale, save_pyramid
from wcascade.stats import fit_cauchy, fit_normal, fit_student_t2

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_ANALYSIS = 4


class InputError(Exception):
    """Invalid input data or configuration (exit 2)."""


class AnalysisError(Exception):
    """A computation stage failed (exit 4)."""


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _write_indexed_csv(path: Path, header: str, values) -> None:
    with open(path, "w") as fh:
        fh.write(f"index,{header}\n")
        for i, v in enumerate(values):
            fh.write(f"{i},{float(v)!r}\n")


def _load_series_csv(path: Path) -> TimeSeries:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    values = []
    for line in raw.splitlines():
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        try:
            values.append(float(fields[-1]))
        except ValueError:
            continue  # header row
    if len(values) < 2:
        raise InputError(f"{path} holds fewer than 2 numeric samples")
    arr = np.asarray(values)
    keep = 2 ** int(np.floor(np.log2(arr.size)))
    return TimeSeries(arr[-keep:])


def _parse_q_range(text: str) -> tuple:
    try:
        lo, hi, n = text.split(":")
        return float(lo), float(hi), int(n)
    except ValueError as exc:
        raise InputError(f"bad --q-range {text!r}; expected MIN:MAX:COUNT") from exc


def _parse_scale_range(text: str) -> tuple:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError as exc:
        raise InputError(f"bad --scale-range {text!r}; expected MIN:MAX") from exc


def _parse_h_grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise InputError(f"bad --h-grid {text!r}; expected START:STOP:STEP") from exc
    if step <= 0 or stop <= start:
        raise InputError(f"bad --h-grid {text!r}; need STOP > START and STEP > 0")
    return np.arange(start, stop + step / 2, step)


def _wtmm_config(args) -> wtmm.WtmmConfig:
    config = wtmm.WtmmConfig()
    if getattr(args, "q_range", None):
        config.q_min, config.q_max, config.n_q = _parse_q_range(args.q_range)
    if getattr(args, "scale_range", None):
        config.fit_min_scale, config.fit_max_scale = _parse_scale_range(args.scale_range)
    return config


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_rescaled_pyramid(path):
    try:
        pyramid = load_pyramid(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"malformed pyramid file {path}: {exc}") from exc
    return pyramid if pyramid.rescaled else rescale(pyramid, "to_rescaled")


def cmd_simulate(args) -> int:
    try:
        with open(args.config) as fh:
            spec = cascade.CascadeSpec.from_dict(json.load(fh))
        if args.seed is not None:
            spec.seed = args.seed
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from exc
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"invalid cascade config: {exc}") from exc
    out = _out_dir(args)
    pyramid = cascade.synthesize_mixed(spec)
    path = dwt_inverse(pyramid)
    save_pyramid(pyramid, out / "pyramid.json")
    _write_indexed_csv(out / "path.csv", "value", path.values)
    return EXIT_OK


def _write_spectrum(out: Path, spectrum, fmt: str) -> None:
    if fmt in ("json", "both"):
        _write_json(out / "spectrum.json", wtmm.spectrum_to_dict(spectrum))
    if fmt in ("csv", "both"):
        wtmm.write_tau_csv(spectrum, out / "tau.csv")
        wtmm.write_spectrum_csv(spectrum, out / "spectrum.csv")


def cmd_spectrum(args) -> int:
    series = _load_series_csv(args.input)
    if series.length < 1024:
        raise InputError(f"series too short after truncation: {series.length} < 1024")
    config = _wtmm_config(args)
    out = _out_dir(args)
    try:
        spectrum = wtmm.singular_spectrum(series, config)
    except ValueError as exc:
        raise AnalysisError(str(exc)) from exc
    lo, hi = config.fit_window(series.length)
    print(f"fit scale range: [{lo:g}, {hi:g}] samples", file=sys.stderr)
    _write_spectrum(out, spectrum, args.format)
    return EXIT_OK


def cmd_check_spectrum(args) -> int:
    try:
        with open(args.input) as fh:
            spectrum = wtmm.spectrum_from_dict(json.load(fh))
    except OSError as exc:
        raise InputError(f"cannot read {args.input}: {exc}") from exc
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"malformed spectrum file: {exc}") from exc
    error = wtmm.legendre_duality_error(spectrum)
    curvature = 0.0
    if spectrum.tau.size >= 3:
        curvature = float(np.max(np.abs(np.diff(spectrum.tau, 2))))
    tolerance = 4.0 * curvature + 1e-9
    print(f"duality gap {error:.3e} (tolerance {tolerance:.3e})")
    if error > tolerance:
        raise AnalysisError(
            f"Legendre duality violated: gap {error:.3e} > {tolerance:.3e}"
        )
    return EXIT_OK


def _multiplier_report(pyramid) -> tuple:
    ms = empirics.extract_multipliers(pyramid)
    corr = empirics.multiplier_correlations(ms, pyramid)
    fits = {}
    for t in ms.transitions:
        pooled = t.pooled
        if pooled.size < 100:
            continue
        entry = {}
        for name, fitter in (
            ("cauchy", fit_cauchy),
            ("student_t2", fit_student_t2),
            ("normal", fit_normal),
        ):
            try:
                result = fitter(pooled)
                entry[name] = {"scale": result.scale, "goodness": result.goodness}
            except ValueError:
                entry[name] = None
        fits[str(t.parent_layer)] = {"n_valid": int(pooled.size), "fits": entry}
    report = {
        "transitions": fits,
        "successive_correlations": [
            {"layer": r.layer, "r": r.r, "n_pairs": r.n_pairs} for r in corr.successive
        ],
        "parent_vs_factor_correlations": [
            {"layer": r.layer, "r": r.r, "n_pairs": r.n_pairs}
            for r in corr.parent_vs_factor
        ],
    }
    return report, corr


def _write_correlations_csv(path: Path, corr) -> None:
    with open(path, "w") as fh:
        fh.write("kind,layer,r,n_pairs\n")
        for row in corr.successive:
            fh.write(f"successive,{row.layer},{float(row.r)!r},{row.n_pairs}\n")
        for row in corr.parent_vs_factor:
            fh.write(f"parent_vs_factor,{row.layer},{float(row.r)!r},{row.n_pairs}\n")


def cmd_multipliers(args) -> int:
    pyramid = _load_rescaled_pyramid(args.input)
    out = _out_dir(args)
    try:
        report, corr = _multiplier_report(pyramid)
    except ValueError as exc:
        raise AnalysisError(str(exc)) from exc
    if args.format in ("json", "both"):
        _write_json(out / "multipliers.json", report)
    if args.format in ("csv", "both"):
        _write_correlations_csv(out / "correlations.csv", corr)
    return EXIT_OK


def _write_variance_table(path: Path, fits) -> None:
    header = "Scale,side,a,b,Std a,Std b,Adj R2,Var(W),Var(eta)"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in empirics.variance_table_rows(fits):
            fh.write(
                f"{row['Scale']},{row['side']},"
                f"{row['a']:.2f},{row['b']:.2f},{row['Std a']:.2f},{row['Std b']:.2f},"
                f"{row['Adj R2']:.2f},{row['Var(W)']:.2f},{row['Var(eta)']:.2f}\n"
            )


def cmd_variances(args) -> int:
    pyramid = _load_rescaled_pyramid(args.input)
    out = _out_dir(args)
    try:
        fits = empirics.estimate_variances(pyramid)
    except ValueError as exc:
        raise AnalysisError(str(exc)) from exc
    if not fits:
        raise AnalysisError("no transition had enough data for a variance fit")
    if args.format in ("json", "both"):
        _write_json(out / "variances.json", [f.to_dict() for f in fits])
    if args.format in ("csv", "both"):
        _write_variance_table(out / "variance_table.csv", fits)
    return EXIT_OK


def cmd_collapse(args) -> int:
    pyramid = _load_rescaled_pyramid(args.input)
    h_grid = _parse_h_grid(args.h_grid)
    out = _out_dir(args)
    try:
        result = empirics.collapse_H(pyramid, h_grid)
    except ValueError as exc:
        raise AnalysisError(str(exc)) from exc
    if args.format in ("json", "both"):
        _write_json(
            out / "collapse.json",
            {
                "h": result.h,
                "distance": result.distance,
                "boundary": result.boundary,
                "h_grid": result.h_grid.tolist(),
                "distances": result.distances.tolist(),
            },
        )
    if args.format in ("csv", "both"):
        with open(out / "collapse.csv", "w") as fh:
            fh.write("h,distance\n")
            for h, d in zip(result.h_grid, result.distances):
                fh.write(f"{float(h)!r},{float(d)!r}\n")
    return EXIT_OK


def _ingest(args) -> np.ndarray:
    try:
        panel = empirics.load_panel_csv(args.input)
        return empirics.deseasonalize_returns(panel, dt=args.dt)
    except OSError as exc:
        raise InputError(f"cannot read panel: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"panel ingestion failed: {exc}") from exc


def cmd_ingest(args) -> int:
    deltas = _ingest(args)
    out = _out_dir(args)
    try:
        path = empirics.accumulate_path(deltas)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    _write_indexed_csv(out / "deltas.csv", "delta", deltas)
    _write_indexed_csv(out / "path.csv", "value", path.values)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    deltas = _ingest(args)
    try:
        path = empirics.accumulate_path(deltas)
    except ValueError as exc:
        raise InputError(f"stage accumulate: {exc}") from exc
    if path.length < 1024:
        raise InputError(
            f"stage accumulate: path too short for analysis ({path.length} < 1024)"
        )
    out = _out_dir(args)
    _write_indexed_csv(out / "path.csv", "value", path.values)

    def stage(name, fn):
        try:
            return fn()
        except ValueError as exc:
            raise AnalysisError(f"stage {name}: {exc}") from exc

    pyramid = stage("transform", lambda: rescale(dwt_forward(path), "to_rescaled"))
    save_pyramid(pyramid, out / "pyramid.json")
    config = _wtmm_config(args)
    spectrum = stage("spectrum", lambda: wtmm.singular_spectrum(path, config))
    _write_spectrum(out, spectrum, "both")
    report, corr = stage("multipliers", lambda: _multiplier_report(pyramid))
    _write_json(out / "multipliers.json", report)
    _write_correlations_csv(out / "correlations.csv", corr)
    fits = stage("variances", lambda: empirics.estimate_variances(pyramid))
    _write_json(out / "variances.json", [f.to_dict() for f in fits])
    _write_variance_table(out / "variance_table.csv", fits)
    h_grid = _parse_h_grid(args.h_grid)
    collapse = stage("collapse", lambda: empirics.collapse_H(pyramid, h_grid))
    _write_json(
        out / "collapse.json",
        {
            "h": collapse.h,
            "distance": collapse.distance,
            "boundary": collapse.boundary,
            "h_grid": collapse.h_grid.tolist(),
            "distances": collapse.distances.tolist(),
        },
    )
    with open(out / "collapse.csv", "w") as fh:
        fh.write("h,distance\n")
        for h, d in zip(collapse.h_grid, collapse.distances):
            fh.write(f"{float(h)!r},{float(d)!r}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wcascade",
        description="Simulate multiplicative wavelet cascades and analyze "
        "time series for multifractality.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, input_help=None):
        if input_help:
            p.add_argument("--input", required=True, help=input_help)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--format",
            choices=("json", "csv", "both"),
            default="both",
            help="artifact format for analysis tables (default: both)",
        )

    p = sub.add_parser("simulate", help="synthesize a cascade pyramid and its path")
    p.add_argument("--config", required=True, help="cascade spec JSON file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    add_common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("spectrum", help="singular spectrum of a series")
    add_common(p, "path CSV (index,value or one value per line)")
    p.add_argument("--q-range", default=None, help="moment grid MIN:MAX:COUNT")
    p.add_argument("--scale-range", default=None, help="fit window MIN:MAX in samples")
    p.set_defaults(fn=cmd_spectrum)

    p = sub.add_parser("check-spectrum", help="verify a spectrum file's Legendre duality")
    p.add_argument("--input", required=True, help="spectrum JSON file")
    p.set_defaults(fn=cmd_check_spectrum)

    p = sub.add_parser("multipliers", help="backward factor statistics of a pyramid")
    add_common(p, "pyramid JSON file")
    p.set_defaults(fn=cmd_multipliers)

    p = sub.add_parser("variances", help="per-layer variance decomposition")
    add_common(p, "pyramid JSON file")
    p.set_defaults(fn=cmd_variances)

    p = sub.add_parser("collapse", help="distribution-collapse exponent estimate")
    add_common(p, "pyramid JSON file")
    p.add_argument("--h-grid", default="0:1:0.01", help="exponent grid START:STOP:STEP")
    p.set_defaults(fn=cmd_collapse)

    p = sub.add_parser("ingest", help="deseasonalize a price panel into a path")
    add_common(p, "panel CSV (timestamp,ISSUE1,...)")
    p.add_argument("--dt", type=int, default=1, help="return lag in grid steps")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("pipeline", help="full panel-to-report analysis")
    add_common(p, "panel CSV (timestamp,ISSUE1,...)")
    p.add_argument("--dt", type=int, default=1, help="return lag in grid steps")
    p.add_argument("--q-range", default=None, help="moment grid MIN:MAX:COUNT")
    p.add_argument("--scale-range", default=None, help="fit window MIN:MAX in samples")
    p.add_argument("--h-grid", default="0:1:0.01", help="exponent grid START:STOP:STEP")
    p.set_defaults(fn=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AnalysisError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
