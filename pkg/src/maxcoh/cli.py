"""Command-line interface.

Subcommands wire JSON configs to the library modules:

* ``detect``   -- run the streaming detector over a matrix-stream file
* ``gen``      -- emit a matrix-stream file from a stream spec
* ``simulate`` -- threshold sweep; writes the trade-off CSV (optionally SVG)
* ``kappa``    -- tilted-integral curves and roots; writes CSV
* ``bounds``   -- false-alarm / delay bound report as JSON
* ``density``  -- density/CDF samples over a rho grid; writes CSV

Config files are strict: unknown keys anywhere are an error. Matrix streams
are JSON lines, one object {"m": .., "n": .., "p": .., "rows": [[..]..]} per
line with m strictly increasing from 1. All file outputs are written to a
temporary name and atomically renamed, so failed runs leave no partial files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

import numpy as np

from . import datagen, harness, misspec, vmaxfam
from .corrstats import DataMatrix, max_knn_coherence, sample_correlation
from .errors import ConfigError, MaxcohError
from .glr import (DetectorState, GaussianMeanFamily, GlrConfig, VStatFamily,
                  detector_step, threshold_for_mtfa)
from .harness import RunConfig
from .vmaxfam import FamilyParams

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_STOPPED = 2

_SECTION_KEYS = {
    "family": {"n", "p", "delta"},
    "glr": {"theta0", "epsilon", "threshold_a", "window"},
    "stream": {"n", "p", "gamma", "sigma0", "sigma1", "mean_policy",
               "shape", "seed"},
    "run": {"mode", "j_pre", "j_post", "trials_edd", "trials_mtfa",
            "max_steps", "seed", "thresholds"},
    "kappa": {"g_j", "j_values", "kappa_grid"},
    "density": {"j_values", "rho_points"},
    "bounds": {"family_kind", "g_param", "theta_g", "band_radius", "beta"},
}


def _check_keys(mapping: dict, allowed: set, context: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {context}")


def load_config(path: str) -> dict:
    """Parse and validate a config file; unknown sections or keys are errors."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(raw, set(_SECTION_KEYS), "config root")
    for section, keys in _SECTION_KEYS.items():
        if section in raw:
            if not isinstance(raw[section], dict):
                raise ConfigError(f"section {section!r} must be an object")
            _check_keys(raw[section], keys, f"section {section!r}")
    return raw


def _require(cfg: dict, section: str) -> dict:
    if section not in cfg:
        raise ConfigError(f"config needs a {section!r} section")
    return cfg[section]


def build_family(cfg: dict) -> FamilyParams:
    sec = _require(cfg, "family")
    return FamilyParams(n=int(sec["n"]), p=int(sec["p"]),
                        delta=int(sec.get("delta", 1)))


def build_glr(cfg: dict) -> GlrConfig:
    sec = _require(cfg, "glr")
    window = sec.get("window")
    return GlrConfig(theta0=float(sec["theta0"]),
                     epsilon=float(sec["epsilon"]),
                     threshold_a=float(sec.get("threshold_a", math.inf)),
                     window=None if window is None else int(window))


def _build_covspec(obj: dict, context: str) -> datagen.CovSpec:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"{context} must be an object with a 'kind'")
    kind = obj["kind"]
    if kind == "diagonal":
        _check_keys(obj, {"kind", "p", "variances"}, context)
        variances = obj.get("variances")
        return datagen.DiagonalCov(
            p=int(obj["p"]),
            variances=None if variances is None else tuple(variances))
    if kind == "block_sparse":
        _check_keys(obj, {"kind", "p", "k", "block"}, context)
        return datagen.BlockSparseCov(p=int(obj["p"]), k=int(obj["k"]),
                                      block=np.asarray(obj["block"], dtype=float))
    if kind == "row_sparse_wishart":
        _check_keys(obj, {"kind", "p", "k", "seed", "dof"}, context)
        return datagen.RowSparseWishartCov(p=int(obj["p"]), k=int(obj["k"]),
                                           seed=int(obj["seed"]),
                                           dof=int(obj.get("dof", 3)))
    raise ConfigError(f"{context}: unknown covariance kind {kind!r}")


def _build_mean_policy(obj) -> datagen.MeanPolicy:
    if obj is None:
        return datagen.ZeroMean()
    kind = obj.get("kind")
    if kind == "zero":
        _check_keys(obj, {"kind"}, "mean_policy")
        return datagen.ZeroMean()
    if kind == "fixed":
        _check_keys(obj, {"kind", "mu"}, "mean_policy")
        return datagen.FixedMean(mu=np.asarray(obj["mu"], dtype=float))
    if kind == "random_per_matrix":
        _check_keys(obj, {"kind", "scale"}, "mean_policy")
        return datagen.RandomPerMatrixMean(scale=float(obj["scale"]))
    raise ConfigError(f"unknown mean_policy kind {kind!r}")


def _build_shape(obj) -> datagen.Shape:
    if obj is None:
        return datagen.GaussianShape()
    kind = obj.get("kind")
    if kind == "gaussian":
        _check_keys(obj, {"kind"}, "shape")
        return datagen.GaussianShape()
    if kind == "student_t":
        _check_keys(obj, {"kind", "dof"}, "shape")
        return datagen.StudentTShape(dof=float(obj["dof"]))
    raise ConfigError(f"unknown shape kind {kind!r}")


def build_stream(cfg: dict) -> datagen.StreamSpec:
    sec = _require(cfg, "stream")
    gamma = sec.get("gamma")
    return datagen.StreamSpec(
        n=int(sec["n"]), p=int(sec["p"]),
        gamma=math.inf if gamma is None else float(gamma),
        sigma0=_build_covspec(sec["sigma0"], "stream.sigma0"),
        sigma1=_build_covspec(sec["sigma1"], "stream.sigma1"),
        mean_policy=_build_mean_policy(sec.get("mean_policy")),
        shape=_build_shape(sec.get("shape")),
        seed=int(sec.get("seed", 0)))


def build_run(cfg: dict, seed_override=None, mode_override=None) -> RunConfig:
    sec = _require(cfg, "run")
    mode = mode_override or sec.get("mode", "statistic_level")
    stream = build_stream(cfg) if mode == "matrix_level" else None
    seed = int(seed_override if seed_override is not None
               else sec.get("seed", 0))
    if stream is not None and seed_override is not None:
        stream = dataclasses.replace(stream, seed=seed)
    max_steps = sec.get("max_steps")
    return RunConfig(
        mode=mode,
        family=build_family(cfg),
        glr=build_glr(cfg),
        stream=stream,
        j_pre=None if sec.get("j_pre") is None else float(sec["j_pre"]),
        j_post=None if sec.get("j_post") is None else float(sec["j_post"]),
        trials_edd=int(sec.get("trials_edd", 500)),
        trials_mtfa=int(sec.get("trials_mtfa", 1500)),
        max_steps=None if max_steps is None else int(max_steps),
        seed=seed)


def write_atomic(path: str, text: str) -> None:
    """Write text to a temp file in the target directory, then rename."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# matrix-stream files (JSON lines)
# --------------------------------------------------------------------------

def read_matrix_stream(path: str):
    """Yield (m, DataMatrix) records; malformed lines raise ConfigError
    naming the line number."""
    expect_m = 1
    shape = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                m, n, p = int(obj["m"]), int(obj["n"]), int(obj["p"])
                rows = np.asarray(obj["rows"], dtype=float)
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"line {lineno}: malformed record ({exc})")
            if m != expect_m:
                raise ConfigError(
                    f"line {lineno}: index m={m}, expected {expect_m}")
            if rows.shape != (n, p):
                raise ConfigError(
                    f"line {lineno}: rows shape {rows.shape} != ({n}, {p})")
            if shape is None:
                shape = (n, p)
            elif shape != (n, p):
                raise ConfigError(
                    f"line {lineno}: shape ({n}, {p}) changed from {shape}")
            expect_m += 1
            yield m, DataMatrix(rows)


def format_matrix_record(m: int, x: DataMatrix) -> str:
    return json.dumps({"m": m, "n": x.n, "p": x.p,
                       "rows": x.values.tolist()})


# --------------------------------------------------------------------------
# minimal SVG line chart
# --------------------------------------------------------------------------

def svg_line_chart(xs, ys, xlabel: str, ylabel: str,
                   width: int = 640, height: int = 440) -> str:
    """One polyline with axes and tick labels; enough for trade-off plots."""
    margin = 60
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    xspan = (x1 - x0) or 1.0
    yspan = (y1 - y0) or 1.0

    def sx(x):
        return margin + (x - x0) / xspan * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y0) / yspan * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv, yv = x0 + frac * xspan, y0 + frac * yspan
        parts.append(f'<text x="{sx(xv):.1f}" y="{height - margin + 18}" '
                     f'font-size="11" text-anchor="middle">{xv:.3g}</text>')
        parts.append(f'<text x="{margin - 8}" y="{sy(yv):.1f}" font-size="11" '
                     f'text-anchor="end">{yv:.3g}</text>')
    points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    parts.append(f'<polyline points="{points}" fill="none" stroke="steelblue" '
                 f'stroke-width="1.5"/>')
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" '
                     f'fill="steelblue"/>')
    parts.append(f'<text x="{width / 2:.0f}" y="{height - 12}" font-size="13" '
                 f'text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="16" y="{height / 2:.0f}" font-size="13" '
                 f'text-anchor="middle" transform="rotate(-90 16 '
                 f'{height / 2:.0f})">{ylabel}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_detect(args) -> int:
    cfg = load_config(args.config)
    fp = build_family(cfg)
    glr_cfg = build_glr(cfg)
    fam = VStatFamily(fp)
    state = DetectorState()
    for m, x in read_matrix_stream(args.input):
        if x.p != fp.p:
            raise ConfigError(f"stream p={x.p} does not match family p={fp.p}")
        v = max_knn_coherence(sample_correlation(x), fp.delta)
        detector_step(state, v, fam, glr_cfg)
        print(f"m={m} v={v:.9g} stat={state.current_stat:.9g}")
        if state.stopped:
            print(f"STOP at m={state.stopped_at}")
            return EXIT_STOPPED
    print(f"NO STOP stat={state.current_stat:.9g}")
    return EXIT_OK


def cmd_gen(args) -> int:
    cfg = load_config(args.config)
    spec = build_stream(cfg)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=int(args.seed))
    lines = []
    for m, x in enumerate(datagen.stream(spec, count=args.count), start=1):
        lines.append(format_matrix_record(m, x))
    write_atomic(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.count} matrices to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    run_cfg = build_run(cfg, seed_override=args.seed, mode_override=args.mode)
    thresholds = cfg.get("run", {}).get("thresholds")
    if not thresholds:
        raise ConfigError("run.thresholds is required for simulate")
    rows = harness.sweep(run_cfg, thresholds, workers=args.workers)
    write_atomic(args.out, harness.tradeoff_csv(rows))
    print(f"wrote {len(rows)} rows to {args.out}")
    if args.svg:
        svg_path = os.path.splitext(args.out)[0] + ".svg"
        xs = [math.log(r.mtfa_mean) for r in rows]
        ys = [r.edd_mean for r in rows]
        write_atomic(svg_path, svg_line_chart(
            xs, ys, "log mean time to false alarm", "mean detection delay"))
        print(f"wrote chart to {svg_path}")
    return EXIT_OK


def cmd_kappa(args) -> int:
    cfg = load_config(args.config)
    fp = build_family(cfg)
    glr_cfg = build_glr(cfg)
    sec = _require(cfg, "kappa")
    fam = VStatFamily(fp)
    g = misspec.ParametricDensity(fam, float(sec["g_j"]))
    rows = harness.kappa_curve(fam, glr_cfg.theta0, g,
                               [float(j) for j in sec["j_values"]],
                               [float(k) for k in sec["kappa_grid"]])
    write_atomic(args.out, harness.kappa_csv(rows))
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = load_config(args.config)
    glr_cfg = build_glr(cfg)
    sec = _require(cfg, "bounds")
    family_kind = sec.get("family_kind", "v")
    if family_kind == "gaussian":
        fam = GaussianMeanFamily()
    elif family_kind == "v":
        fam = VStatFamily(build_family(cfg))
    else:
        raise ConfigError(f"unknown bounds.family_kind {family_kind!r}")
    g_param = float(sec["g_param"])
    g = misspec.ParametricDensity(fam, g_param)
    band_radius = sec.get("band_radius")
    class_spec = None if band_radius is None \
        else misspec.UncertaintyClass(radius=float(band_radius))
    theta_g = sec.get("theta_g")
    kappa_rep = misspec.build_kappa_report(fam, glr_cfg, g, class_spec)
    report = {
        "family_kind": family_kind,
        "theta0": glr_cfg.theta0,
        "epsilon": glr_cfg.epsilon,
        "g_param": g_param,
        "kappa_theta_g": {f"{k:.9g}": v for k, v in
                          kappa_rep.kappa_theta_g.items()},
        "kappa_g": kappa_rep.kappa_g,
        "kappa_star": kappa_rep.kappa_star,
        "i_min": misspec.i_min_boundary(fam, glr_cfg),
    }
    if family_kind == "gaussian":
        plus = glr_cfg.theta0 + glr_cfg.epsilon
        minus = glr_cfg.theta0 - glr_cfg.epsilon
        report["kappa_closed_form"] = {
            f"{b:.9g}": misspec.kappa_gaussian(b, glr_cfg.theta0, g_param)
            for b in (plus, minus)}
    threshold_a = glr_cfg.threshold_a
    beta = sec.get("beta")
    if beta is not None:
        report["threshold_well_specified"] = threshold_for_mtfa(float(beta))
        if kappa_rep.kappa_g is not None:
            report["threshold_misspecified"] = threshold_for_mtfa(
                float(beta), kappa=kappa_rep.kappa_g, i_min=report["i_min"])
        if not math.isfinite(threshold_a):
            threshold_a = report.get("threshold_misspecified",
                                     report["threshold_well_specified"])
            report["threshold_policy"] = ("misspecified-inverted"
                                          if "threshold_misspecified" in report
                                          else "log-beta")
    report["threshold_a"] = threshold_a
    if kappa_rep.kappa_g is not None and math.isfinite(threshold_a):
        cfg_at_a = dataclasses.replace(glr_cfg, threshold_a=threshold_a)
        bound = misspec.build_bound_report(
            fam, cfg_at_a, kappa_rep.kappa_g,
            theta_g=None if theta_g is None else float(theta_g), g=None)
        report["far_lower"] = bound.far_lower
        report["delay_upper"] = bound.delay_upper
        report["drift"] = bound.drift
        report["delay_upper_note"] = ("leading-order bound; carries a "
                                      "(1+o(1)) factor as A grows")
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        write_atomic(args.out, text)
        print(f"wrote report to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_density(args) -> int:
    cfg = load_config(args.config)
    fp = build_family(cfg)
    sec = _require(cfg, "density")
    j_values = [float(j) for j in sec["j_values"]]
    points = int(sec.get("rho_points", 400))
    rho = np.linspace(1.0 / points, 1.0, points)
    outputs = []
    for j in j_values:
        pdf = vmaxfam.pdf_v(fp, j, rho)
        cdf = vmaxfam.cdf_v(fp, j, rho)
        lines = ["rho,pdf,cdf"]
        lines += [f"{r:.9g},{d:.9g},{c:.9g}" for r, d, c in zip(rho, pdf, cdf)]
        if len(j_values) == 1:
            path = args.out
        else:
            base, ext = os.path.splitext(args.out)
            path = f"{base}_j{j:g}{ext or '.csv'}"
        write_atomic(path, "\n".join(lines) + "\n")
        outputs.append(path)
    print("wrote " + ", ".join(outputs))
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser, need_out: bool) -> None:
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seeds")
    parser.add_argument("--out", required=need_out, help="output path")
    parser.add_argument("--svg", action="store_true",
                        help="also write an SVG chart (simulate only)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxcoh",
        description="Change detection in the maximal kNN coherence of "
                    "random matrix streams")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run the detector over a stream file")
    _add_common(p, need_out=False)
    p.add_argument("input", help="matrix-stream file (JSON lines)")

    p = sub.add_parser("gen", help="emit a matrix-stream file")
    _add_common(p, need_out=True)
    p.add_argument("--count", type=int, default=50,
                   help="number of matrices to emit")

    p = sub.add_parser("simulate", help="threshold sweep -> trade-off CSV")
    _add_common(p, need_out=True)
    p.add_argument("--mode", choices=("statistic_level", "matrix_level"),
                   default=None, help="override run.mode")
    p.add_argument("--workers", type=int, default=1,
                   help="process-pool size for trials")

    p = sub.add_parser("kappa", help="tilted-integral curves -> CSV")
    _add_common(p, need_out=True)

    p = sub.add_parser("bounds", help="bound report -> JSON")
    _add_common(p, need_out=False)

    p = sub.add_parser("density", help="density/CDF samples -> CSV")
    _add_common(p, need_out=True)
    return parser


_COMMANDS = {
    "detect": cmd_detect,
    "gen": cmd_gen,
    "simulate": cmd_simulate,
    "kappa": cmd_kappa,
    "bounds": cmd_bounds,
    "density": cmd_density,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (MaxcohError, OSError, json.JSONDecodeError, KeyError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
