"""Command-line front end: ``estimate``, ``bandwidth`` and ``mc``.

Exit codes: 0 success (possibly with warnings), 2 bad flags, 3 bad data,
4 numerical failure at every grid point.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from cdekit.bandwidth import select_bandwidths
from cdekit.dgp import DgpSpec
from cdekit.estimator import CdeFit
from cdekit.inference import infer
from cdekit.kernels import KernelFamily
from cdekit.model import DataError, DataSet, EstimationConfig, EvaluationSpec, default_grid, load_dataset
from cdekit.montecarlo import CoverageReport, run_coverage_study

EXIT_OK, EXIT_FLAGS, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
BW_RULES = ("mse-rot", "imse-rot")
ROW_FIELDS = ("index", "grid", "bw", "eff_n", "estimate", "se", "ci_lo", "ci_hi", "rbc_ci_lo", "rbc_ci_hi")


class FlagError(ValueError):
    pass


def _threads() -> int:
    raw = os.environ.get("CDE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise FlagError(f"CDE_THREADS must be an integer, got {raw!r}") from None


def _floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise FlagError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise FlagError(f"{what}: expected finite numbers, got {text!r}")
    return vals


def _ints(text: str, what: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise FlagError(f"{what}: expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------- output bundle


@dataclass
class OutputBundle:
    summary_text: str
    rows: list[dict]
    metadata: dict
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"metadata": self.metadata, "rows": self.rows, **self.extras},
                          indent=2, sort_keys=True, allow_nan=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        fields = list(self.rows[0].keys()) if self.rows else list(ROW_FIELDS)
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()


def _num(v) -> float | None:
    v = float(v)
    return v if math.isfinite(v) else None


def _fmt(v, width: int = 10) -> str:
    if v is None:
        return f"{'NA':>{width}}"
    return f"{round(v, 4) + 0.0:>{width}.4f}"  # no "-0.0000"


def metadata_block(meta: dict) -> str:
    lines = [
        ("Sample size", "", meta["n"]),
        ("Polynomial order for Y point estimation", "(p=)", meta["p"]),
        ("Polynomial order for X point estimation", "(q=)", meta["q"]),
        ("Density function estimated", "(mu=)", meta["mu"]),
        ("Order of derivative estimated for covariates", "(nu=)", ",".join(map(str, meta["nu"]))),
        ("Kernel function", "", meta["kernel"]),
        ("Bandwidth method", "", meta["bw_method"]),
    ]
    return "\n".join(f"{a:<45}{b:<9}{c}" for a, b, c in lines)


def _table(header: list[str], body: list[str], width: int) -> str:
    rule, mid = "=" * width, "-" * width
    half = math.ceil(len(body) / 2)
    out = [rule, *header, rule]
    for i, line in enumerate(body):
        out.append(line)
        if i + 1 == half and len(body) > 1:
            out.append(mid)
    out.append(rule)
    return "\n".join(out)


def estimate_summary(meta: dict, rows: list[dict], alpha: float) -> str:
    level = f"{100 * (1 - alpha):g}%"
    header = [
        f"{'':<35}{'Point':>10}{'Std.':>10}{'Robust B.C.':>19}",
        f"{'Index':<7}{'Grid':>10}{'B.W.':>10}{'Eff.n':>8}{'Est.':>10}{'Error':>10}{'[ ' + level + ' C.I. ]':>22}",
    ]
    body = []
    for r in rows:
        ci = "NA" if r["rbc_ci_lo"] is None else f"{r['rbc_ci_lo']:.4f} , {r['rbc_ci_hi']:.4f}"
        body.append(f"{r['index']:<7d}{_fmt(r['grid'])}{_fmt(r['bw'])}{r['eff_n']:>8d}"
                    f"{_fmt(r['estimate'])}{_fmt(r['se'])}{ci:>22}")
    return metadata_block(meta) + "\n\n" + _table(header, body, 77) + "\n"


def bandwidth_summary(meta: dict, rows: list[dict]) -> str:
    header = [f"{'Index':<7}{'y_grid':>10}{'B.W.':>10}{'Eff.n':>7}"]
    body = [f"{r['index']:<7d}{_fmt(r['grid'])}{_fmt(r['bw'])}{r['eff_n']:>7d}" for r in rows]
    return metadata_block(meta) + "\n\n" + _table(header, body, 34) + "\n"


def _metadata(data: DataSet, config: EstimationConfig, bw_method: str) -> dict:
    return {
        "n": data.n, "d": data.d, "p": config.p, "q": config.q, "mu": config.mu,
        "nu": list(config.nu_for(data.d)), "kernel": config.kernel.value, "bw_method": bw_method,
        "alpha": config.alpha,
    }


def fit_bundle(data: DataSet, fit: CdeFit, x_point: Sequence[float], seed: int) -> OutputBundle:
    cfg = fit.config
    meta = _metadata(data, cfg, fit.bw_method or "user")
    meta.update({"x": [float(v) for v in x_point], "seed": seed, "band_sims": cfg.band_sims})
    rows = []
    for g in range(fit.m):
        rows.append({
            "index": g + 1,
            "grid": float(fit.spec.y_grid[g]),
            "bw": float(fit.spec.bandwidths[g]),
            "eff_n": int(fit.eff_n[g]),
            "estimate": _num(fit.estimates[g]),
            "se": _num(fit.se[g]),
            "ci_lo": _num(fit.ci_lower[g]),
            "ci_hi": _num(fit.ci_upper[g]),
            "rbc_ci_lo": _num(fit.rbc_ci_lower[g]),
            "rbc_ci_hi": _num(fit.rbc_ci_upper[g]),
        })
    extras = {
        "band": {
            "critical": fit.band_critical,
            "lower": [_num(v) for v in fit.band_lower],
            "upper": [_num(v) for v in fit.band_upper],
        },
        "rbc_band": {
            "critical": fit.rbc_band_critical,
            "lower": [_num(v) for v in fit.rbc_band_lower],
            "upper": [_num(v) for v in fit.rbc_band_upper],
            "estimates": [_num(v) for v in fit.rbc_estimates],
            "se": [_num(v) for v in fit.rbc_se],
        },
        "failures": {str(k + 1): v for k, v in sorted(fit.failures.items())},
    }
    return OutputBundle(estimate_summary(meta, rows, cfg.alpha), rows, meta, extras)


# ---------------------------------------------------------------- SVG


def _ticks(lo: float, hi: float, k: int = 5) -> list[float]:
    return [lo + (hi - lo) * i / (k - 1) for i in range(k)]


def render_svg(fit: CdeFit, width: int = 640, height: int = 400) -> str:
    """Estimate polyline, RBC pointwise error bars and the RBC uniform band as a shaded polygon."""
    if fit.m < 2:
        raise FlagError("need ≥ 2 grid points for plot")
    grid = np.asarray(fit.spec.y_grid)
    ok = fit.ok & np.isfinite(fit.rbc_ci_lower) & np.isfinite(fit.rbc_band_lower)
    if ok.sum() < 2:
        raise FlagError("need ≥ 2 grid points for plot")
    xs, est = grid[ok], fit.estimates[ok]
    ci_lo, ci_hi = fit.rbc_ci_lower[ok], fit.rbc_ci_upper[ok]
    b_lo, b_hi = fit.rbc_band_lower[ok], fit.rbc_band_upper[ok]
    ml, mr, mt, mb = 60, 20, 20, 40
    x0, x1 = float(xs.min()), float(xs.max())
    y0 = float(min(b_lo.min(), ci_lo.min(), est.min()))
    y1 = float(max(b_hi.max(), ci_hi.max(), est.max()))
    if y1 <= y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return ml + (v - x0) / (x1 - x0) * (width - ml - mr)

    def py(v):
        return height - mb - (v - y0) / (y1 - y0) * (height - mt - mb)

    def pts(xv, yv):
        return " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xv, yv))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<polygon class="band" points="{pts(np.r_[xs, xs[::-1]], np.r_[b_hi, b_lo[::-1]])}" '
        'fill="#9ecae1" fill-opacity="0.5" stroke="none"/>',
    ]
    cap = 4.0
    for a, lo, hi in zip(xs, ci_lo, ci_hi):
        x = px(a)
        out.append(
            f'<g class="errorbar" stroke="#08519c" stroke-width="1">'
            f'<line x1="{x:.2f}" y1="{py(lo):.2f}" x2="{x:.2f}" y2="{py(hi):.2f}"/>'
            f'<line x1="{x - cap:.2f}" y1="{py(lo):.2f}" x2="{x + cap:.2f}" y2="{py(lo):.2f}"/>'
            f'<line x1="{x - cap:.2f}" y1="{py(hi):.2f}" x2="{x + cap:.2f}" y2="{py(hi):.2f}"/></g>'
        )
    out.append(f'<polyline class="estimate" points="{pts(xs, est)}" fill="none" stroke="black" stroke-width="1.5"/>')
    base, left = height - mb, ml
    out.append(f'<g class="axes" stroke="black" font-family="sans-serif" font-size="11">'
               f'<line x1="{left}" y1="{base}" x2="{width - mr}" y2="{base}"/>'
               f'<line x1="{left}" y1="{mt}" x2="{left}" y2="{base}"/>')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.2f}" y1="{base}" x2="{px(t):.2f}" y2="{base + 4}"/>'
                   f'<text x="{px(t):.2f}" y="{base + 16}" text-anchor="middle" stroke="none">{t:.2f}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{left - 4}" y1="{py(t):.2f}" x2="{left}" y2="{py(t):.2f}"/>'
                   f'<text x="{left - 6}" y="{py(t) + 4:.2f}" text-anchor="end" stroke="none">{t:.3f}</text>')
    out.append(f'<text x="{(left + width - mr) / 2:.1f}" y="{height - 6}" text-anchor="middle" stroke="none">y</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(fit: CdeFit, path: str | Path) -> None:
    text = render_svg(fit)
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise FlagError(f"cannot write {path}: {exc.strerror}") from None


# ---------------------------------------------------------------- parsing


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--y-col", default="y")
    p.add_argument("--x-cols", default="x", help="comma-separated covariate columns")
    p.add_argument("--x", required=True, help="conditioning point, comma-separated")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--y-grid", help="comma-separated evaluation points")
    g.add_argument("--grid-count", type=int, help="number of quantile-spaced grid points (default 19)")
    p.add_argument("--mu", type=int, default=1)
    p.add_argument("--nu", help="comma-separated x-derivative orders")
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--kernel", default="epanechnikov", choices=[k.value for k in KernelFamily])
    p.add_argument("--bw", "--bw-type", dest="bw", default="mse-rot",
                   help="fixed bandwidth, 'mse-rot' or 'imse-rot'")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--band-sims", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", default="table", choices=("table", "json", "csv"))
    p.add_argument("--out", help="write the formatted output here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdekit", description="Local polynomial conditional CDF/PDF estimation.")
    sub = parser.add_subparsers(dest="command", required=True)
    est = sub.add_parser("estimate", help="estimates, standard errors, confidence intervals and bands")
    _shared(est)
    est.add_argument("--svg", help="write a plot of the fit")
    est.add_argument("--nonneg", action="store_true", help="clamp density estimates at zero")
    bw = sub.add_parser("bandwidth", help="rule-of-thumb bandwidths over the grid")
    _shared(bw)
    mc = sub.add_parser("mc", help="Monte Carlo coverage study")
    mc.add_argument("--dgp", default="truncated", choices=("truncated", "normal"))
    mc.add_argument("--reps", type=int, default=100)
    mc.add_argument("--n", type=int, default=1000)
    mc.add_argument("--cells", default="1:0", help="comma-separated mu:x pairs, e.g. 1:0,1:1")
    mc.add_argument("--bw-mult", default="1.0", help="comma-separated bandwidth multipliers")
    mc.add_argument("--bw", "--bw-type", dest="bw", default="mse-rot", choices=BW_RULES)
    mc.add_argument("--grid-count", type=int, default=20, help="evenly spaced points on [0, 1]")
    mc.add_argument("--alpha", type=float, default=0.05)
    mc.add_argument("--band-sims", type=int, default=2000)
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--format", default="csv", choices=("table", "json", "csv"))
    mc.add_argument("--out")
    return parser


def _config(args) -> EstimationConfig:
    nu = tuple(_ints(args.nu, "--nu")) if args.nu else None
    try:
        return EstimationConfig(mu=args.mu, nu=nu, p=args.p, q=args.q, kernel=args.kernel,
                                alpha=args.alpha, band_sims=args.band_sims,
                                nonneg=getattr(args, "nonneg", False))
    except ValueError as exc:
        raise FlagError(str(exc)) from None


def _inputs(args):
    config = _config(args)
    x_cols = [c.strip() for c in args.x_cols.split(",") if c.strip()]
    x_point = _floats(args.x, "--x")
    if len(x_point) != len(x_cols):
        raise FlagError(f"--x has {len(x_point)} value(s) but --x-cols names {len(x_cols)}")
    if config.nu is not None and len(config.nu) != len(x_cols):
        raise FlagError(f"--nu has {len(config.nu)} entries but there are {len(x_cols)} covariates")
    data = load_dataset(args.data, args.y_col, x_cols)
    if args.y_grid:
        grid = np.asarray(_floats(args.y_grid, "--y-grid"))
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise FlagError("--y-grid must be strictly increasing")
    else:
        count = 19 if args.grid_count is None else args.grid_count
        if count < 1:
            raise FlagError("--grid-count must be ≥ 1")
        grid = default_grid(data, count)
    return data, config, np.asarray(x_point), grid


def _bandwidths(data, grid, x_point, config, spec: str):
    if spec in BW_RULES:
        sel = select_bandwidths(data, grid, x_point, config, spec)
        return sel.bandwidths, sel.eff_n, spec
    try:
        h = float(spec)
    except ValueError:
        raise FlagError(f"--bw must be a positive number or one of {', '.join(BW_RULES)}") from None
    if not (math.isfinite(h) and h > 0):
        raise FlagError("--bw must be positive")
    return np.full(grid.size, h), None, "fixed"


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise FlagError(f"cannot write {out}: {exc.strerror}") from None


def _render(bundle: OutputBundle, fmt: str) -> str:
    return {"table": bundle.summary_text, "json": bundle.to_json(), "csv": bundle.to_csv()}[fmt]


def cmd_estimate(args) -> int:
    data, config, x_point, grid = _inputs(args)
    if args.svg and grid.size < 2:
        raise FlagError("need ≥ 2 grid points for plot")
    bws, _, method = _bandwidths(data, grid, x_point, config, args.bw)
    spec = EvaluationSpec(grid, x_point, bws)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fit = infer(data, spec, config, seed=args.seed, workers=_threads())
    fit.bw_method = method
    if not fit.ok.any():
        first = next(iter(fit.failures.values()), "no estimable grid point")
        print(f"error: estimation failed at every grid point ({first})", file=sys.stderr)
        return EXIT_NUMERIC
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    for g, msg in sorted(fit.failures.items()):
        print(f"warning: grid point {g + 1} (y={fit.spec.y_grid[g]:.4f}) failed: {msg}", file=sys.stderr)
    bundle = fit_bundle(data, fit, x_point, args.seed)
    _write(_render(bundle, args.format), args.out)
    if args.svg:
        emit_svg(fit, args.svg)
    return EXIT_OK


def cmd_bandwidth(args) -> int:
    data, config, x_point, grid = _inputs(args)
    if args.bw not in BW_RULES:
        raise FlagError(f"--bw-type must be one of {', '.join(BW_RULES)}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        bws, eff, method = _bandwidths(data, grid, x_point, config, args.bw)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    meta = _metadata(data, config, method)
    meta["x"] = [float(v) for v in x_point]
    rows = [{"index": i + 1, "grid": float(y), "bw": float(h), "eff_n": int(e)}
            for i, (y, h, e) in enumerate(zip(grid, bws, eff))]
    bundle = OutputBundle(bandwidth_summary(meta, rows), rows, meta)
    _write(_render(bundle, args.format), args.out)
    return EXIT_OK


def _cells(text: str) -> list[tuple[int, float]]:
    cells = []
    for tok in (t.strip() for t in text.split(",") if t.strip()):
        try:
            mu, x = tok.split(":")
            cells.append((int(mu), float(x)))
        except ValueError:
            raise FlagError(f"--cells: expected mu:x pairs, got {tok!r}") from None
        if cells[-1][0] not in (0, 1, 2):
            raise FlagError("--cells: mu must be 0, 1 or 2")
    if not cells:
        raise FlagError("--cells is empty")
    return cells


def mc_table(report: CoverageReport) -> str:
    head = (f"{'mu':>3}{'x':>6}{'mult':>6}{'est':>5}{'h':>8}{'bias':>8}{'se':>8}"
            f"{'cov.pw':>8}{'cov.un':>8}{'wid.pw':>8}{'wid.un':>8}")
    lines = [f"reps {report.reps}  n {report.n}  failures {report.failures}  "
             f"dgp {report.dgp}  rule {report.rule}", head]
    for r in report.rows:
        lines.append(f"{r.mu:>3d}{r.x:>6.2f}{r.multiplier:>6.2f}{r.estimator:>5}{r.bandwidth:>8.4f}"
                     f"{r.abs_bias:>8.4f}{r.se:>8.4f}{r.pointwise_coverage:>8.1f}{r.uniform_coverage:>8.1f}"
                     f"{r.pointwise_width:>8.4f}{r.uniform_width:>8.4f}")
    return "\n".join(lines) + "\n"


def cmd_mc(args) -> int:
    if args.reps < 1 or args.n < 10:
        raise FlagError("--reps must be ≥ 1 and --n ≥ 10")
    if args.grid_count < 1:
        raise FlagError("--grid-count must be ≥ 1")
    if not 0 < args.alpha < 1 or args.band_sims < 1:
        raise FlagError("--alpha must lie in (0, 1) and --band-sims be positive")
    cells = _cells(args.cells)
    mults = _floats(args.bw_mult, "--bw-mult")
    if any(m <= 0 for m in mults):
        raise FlagError("--bw-mult values must be positive")
    dgp = DgpSpec.table2(args.seed) if args.dgp == "truncated" else DgpSpec.standard(args.seed)
    grid = np.linspace(0.0, 1.0, args.grid_count)
    try:
        report = run_coverage_study(dgp, args.reps, args.n, cells, mults, grid, args.alpha,
                                    args.band_sims, workers=_threads(), rule=args.bw)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = {"table": mc_table, "json": lambda r: r.to_json() + "\n", "csv": lambda r: r.to_csv()}[args.format](report)
    _write(text, args.out)
    return EXIT_OK


COMMANDS = {"estimate": cmd_estimate, "bandwidth": cmd_bandwidth, "mc": cmd_mc}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FlagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FLAGS
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
