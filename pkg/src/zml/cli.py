"""Command-line front end: ``zml <command> ...``.

Exit status is 0 on success, 2 on usage or configuration errors and 3 on
numerical failures.  Output is assembled in memory and written in one go,
so a failing run never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import replace
from importlib import resources

import numpy as np

from . import mellin, moments, saddle, spectral, zetacore
from .config import load_config
from .errors import ZmlError

SCHEMA = 1


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# output


def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


def _cell(v):
    v = _num(v)
    return repr(v) if isinstance(v, float) else str(v)


class Table:
    def __init__(self, columns, rows, summary=None):
        self.columns = list(columns)
        self.rows = [list(r) for r in rows]
        self.summary = summary

    def render(self, fmt: str) -> str:
        if fmt == "json":
            recs = [{"schema": SCHEMA, **{c: _num(v) for c, v in zip(self.columns, r)}} for r in self.rows]
            doc = recs if self.summary is None else {"schema": SCHEMA, "rows": recs, "summary": self.summary}
            return json.dumps(doc, indent=1) + "\n"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        w.writerows([_cell(v) for v in r] for r in self.rows)
        if self.summary is not None:
            buf.write("# " + " ".join(f"{k}={_cell(v)}" for k, v in self.summary.items()) + "\n")
        return buf.getvalue()


def emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(out))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".zml-out-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# commands


def _heights(lo, hi, n):
    if n < 2 or not 0 < lo < hi:
        raise UsageError("a range needs lo < hi and at least 2 points")
    return np.geomspace(lo, hi, n)


def cmd_zeta(a, cfg, cache):
    t = np.asarray(a.t, dtype=float)
    if a.method == "em":
        z, err = zetacore.zeta_em_array(0.5 + 1j * t, cfg.tol_zeta)
        rows = [(x, v.real, v.imag, abs(v), e) for x, v, e in zip(t, z, err)]
        return Table(["t", "re", "im", "abs", "err"], rows)
    v, err = zetacore.critical_abs(t)
    return Table(["t", "abs", "z4", "err"], [(x, y, y ** 4, e) for x, y, e in zip(t, v, err)])


def cmd_moment(a, cfg, cache):
    if a.calibrate:
        lo, hi, n = a.calibrate
        T = _heights(lo, hi, int(n))
        fit = moments.calibrate_p4(T, cache, threads=cfg.threads, free=a.free)
        rows = [(f"a{k}", float(v)) for k, v in enumerate(fit.a)]
        summary = {"kind": "free" if a.free else "pinned"}
        if a.free:
            summary["a4_rel_err"] = fit.a4_rel_err
            summary["condition"] = fit.condition
        return Table(["coefficient", "value"], rows, summary)
    if not a.T:
        raise UsageError("moment needs --T or --calibrate")
    poly = cfg.polynomial()
    recs = moments.e2_scan(a.T, poly, cache, threads=cfg.threads)
    return _record_table(recs)


def _record_table(recs, summary=None):
    return Table(["T", "i4", "main", "e2", "quad_err"],
                 [(r.T, r.i4, r.main, r.e2, r.quad_err) for r in recs], summary)


def cmd_e2(a, cfg, cache):
    poly = cfg.polynomial()
    if a.mode == "contour":
        if a.H is None or len(a.T) != 1:
            raise UsageError("e2 contour needs one --T and --H")
        ci = mellin.e2_via_contour(a.T[0], a.H, a.c_line, poly=poly, cache=cache, threads=cfg.threads)
        cols = ["T", "H", "lower", "upper", "width", "trunc_err", "quad_err", "t_cut"]
        return Table(cols, [(ci.T, ci.H, ci.lower, ci.upper, ci.width, ci.trunc_err, ci.quad_err, ci.t_cut)])
    return _record_table(moments.e2_scan(a.T, poly, cache, threads=cfg.threads))


def _z2_evaluator(a, cfg, cache, t_max):
    poly = cfg.polynomial()
    if a.method == "direct":
        return mellin.DirectZ2(a.x_max, poly, t_max=t_max, cache=cache, threads=cfg.threads,
                               envelope=cfg.e2_envelope)
    X = a.X or max(1.01 * (1.0 + t_max) ** (1.0 + cfg.xi), 100.0)
    Y = a.Y or 10.0 * X
    part = mellin.SmoothingPartition(X, Y)
    return mellin.DecomposedZ2(part, cfg.xi, poly, t_max=t_max, cache=cache, threads=cfg.threads,
                               envelope=cfg.e2_envelope)


def cmd_z2(a, cfg, cache):
    if a.mode == "eval":
        t = np.asarray(a.t, dtype=float)
        if a.sigma <= 0.5:
            raise UsageError("--sigma must exceed 1/2")
        if a.method == "direct" and a.sigma < 1 + 1e-3:
            raise UsageError("the direct method needs --sigma >= 1.001")
        ev = _z2_evaluator(a, cfg, cache, max(float(np.max(np.abs(t))), 1.0))
        pts = ev.evaluate(a.sigma + 1j * t)
        rows = [(str(p.s), p.value.real, p.value.imag, p.err, p.method) for p in pts]
        return Table(["s", "re", "im", "err", "method"], rows)
    if a.T is None:
        raise UsageError("z2 meansq needs --T")
    ev = _z2_evaluator(a, cfg, cache, a.T) if a.method else None
    ms = mellin.z2_mean_square(a.sigma, a.T, a.step, ev, cache, cfg.threads)
    return Table(["sigma", "T", "value", "err", "grid_max"], [(ms.sigma, ms.T, ms.value, ms.err, ms.grid_max)])


def cmd_psi(a, cfg, cache):
    xi = a.xi or cfg.xi
    rows = []
    for T in a.T:
        p = spectral.SmoothedMomentParams(T, xi)
        v, err = spectral.psi_direct(p, cfg.tol_psi, cache, threads=cfg.threads, with_error=True)
        rows.append((T, xi, p.G, v, err))
    return Table(["T", "xi", "G", "psi", "err"], rows)


def _spectral_data(a, cfg):
    path = a.data or cfg.spectral
    if path:
        return spectral.load_spectral(path)
    with resources.as_file(resources.files("zml") / "data" / "spectral_sample.csv") as p:
        return spectral.load_spectral(p)


def cmd_spectral(a, cfg, cache):
    xi = a.xi or cfg.xi
    data = _spectral_data(a, cfg)
    p = spectral.SmoothedMomentParams(a.T, xi)
    if a.mode == "sum":
        v, tail = spectral.i2d(p, data, cfg.tol_kernel, cfg.threads)
        return Table(["T", "xi", "n", "i2d", "tail_bound"], [(a.T, xi, len(data), v, tail)])
    rep = spectral.residual_main_term(p, data, cache=cache, tol=cfg.tol_kernel)
    return _residual_table([rep])


def _residual_table(reps, summary=None):
    cols = ["T", "xi", "psi", "i2c", "i2d", "tail_bound", "residual", "bound", "ok"]
    return Table(cols, [(r.T, r.xi, r.psi, r.i2c, r.i2d, r.tail_bound, r.residual, r.bound, r.ok)
                        for r in reps], summary)


def cmd_saddle(a, cfg, cache):
    ctx = saddle.PhaseContext(a.r, a.x, a.xi or cfg.xi, a.delta)
    rep = saddle.saddle_report(ctx)
    row = (a.r, a.x, ctx.xi, a.delta, rep.z0_newton, rep.z0_series, rep.phi0, rep.phi2,
           rep.L_direct.real, rep.L_direct.imag, rep.L_saddle.real, rep.L_saddle.imag, rep.rel_err)
    cols = ["r", "x", "xi", "delta", "z0_newton", "z0_series", "phi0", "phi2",
            "L_direct_re", "L_direct_im", "L_saddle_re", "L_saddle_im", "rel_err"]
    return Table(cols, [row])


def _slope(pairs):
    try:
        return moments.exponent_fit(pairs)
    except ZmlError:
        return math.nan


def cmd_report(a, cfg, cache):
    T = _heights(a.lo, a.hi, a.n)
    if a.kind == "e2":
        recs = moments.e2_scan(T, cfg.polynomial(), cache, threads=cfg.threads)
        peak = moments.running_max(recs)
        summary = {"sign_changes": moments.sign_changes(recs),
                   "envelope_ratio": moments.envelope_ratio(recs),
                   "max_exponent": _slope(peak), "target": 0.5}
        return _record_table(recs, summary)
    if a.kind == "z2meansq":
        return _meansq_scan(T, a.sigma, a.step, cfg, cache)
    xi = a.xi or cfg.xi
    data = _spectral_data(a, cfg)
    reps = [spectral.residual_main_term(spectral.SmoothedMomentParams(x, xi), data, cache=cache,
                                        tol=cfg.tol_kernel) for x in T]
    summary = {"all_ok": all(r.ok for r in reps),
               "residual_exponent": _slope([(r.T, abs(r.residual)) for r in reps if r.residual != 0])}
    return _residual_table(reps, summary)


def _meansq_scan(T, sigma, step, cfg, cache):
    if sigma <= 0.5:
        raise UsageError("--sigma must exceed 1/2")
    ev = mellin.default_evaluator(sigma, float(T[-1]), cfg.xi, cache, cfg.threads, cfg.polynomial())
    rows = mellin.z2_mean_square_scan(sigma, T, step, ev, cache, cfg.threads, cfg.xi)
    summary = {"slope": mellin.loglog_slope([(m.T, m.value) for m in rows]),
               "target": (10.0 - 8.0 * sigma) / 3.0}
    return Table(["sigma", "T", "value", "err"], [(m.sigma, m.T, m.value, m.err) for m in rows], summary)


COMMANDS = {
    "zeta": cmd_zeta, "moment": cmd_moment, "e2": cmd_e2, "z2": cmd_z2, "psi": cmd_psi,
    "spectral": cmd_spectral, "saddle": cmd_saddle, "report": cmd_report,
}
JSON_DEFAULT = {"z2", "saddle"}


# --------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--cache", help="evaluation cache CSV (overrides $ZML_CACHE)")
    common.add_argument("--threads", type=int)
    common.add_argument("--out", help="write here instead of stdout")
    common.add_argument("--format", choices=["csv", "json"])

    p = _Parser(prog="zml", description="Fourth moment of zeta and its Mellin transform.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("zeta", parents=[common], help="|zeta(1/2+it)| at given heights")
    s.add_argument("--t", type=float, nargs="+", required=True)
    s.add_argument("--method", choices=["auto", "em"], default="auto")

    s = sub.add_parser("moment", parents=[common], help="fourth moment I_4, main term and E_2")
    s.add_argument("--T", type=float, nargs="+")
    s.add_argument("--calibrate", type=float, nargs=3, metavar=("LO", "HI", "N"))
    s.add_argument("--free", action="store_true", help="fit all five coefficients")

    s = sub.add_parser("e2", parents=[common], help="E_2(T), directly or from a contour integral")
    s.add_argument("mode", nargs="?", choices=["value", "contour"], default="value")
    s.add_argument("--T", type=float, nargs="+", required=True)
    s.add_argument("--H", type=float)
    s.add_argument("--c-line", type=float, default=0.51)

    s = sub.add_parser("z2", parents=[common], help="Mellin transform of |zeta|^4")
    s.add_argument("mode", choices=["eval", "meansq"])
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--t", type=float, nargs="+", default=[0.0])
    s.add_argument("--T", type=float)
    s.add_argument("--method", choices=["direct", "decomposed"])
    s.add_argument("--x-max", type=float, default=1e4)
    s.add_argument("--X", type=float)
    s.add_argument("--Y", type=float)
    s.add_argument("--step", type=float, default=0.25)

    s = sub.add_parser("psi", parents=[common], help="Gaussian-smoothed fourth moment")
    s.add_argument("--T", type=float, nargs="+", required=True)
    s.add_argument("--xi", type=float)

    s = sub.add_parser("spectral", parents=[common], help="discrete spectral sum or residual check")
    s.add_argument("mode", choices=["sum", "residual"])
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--xi", type=float)
    s.add_argument("--data")

    s = sub.add_parser("saddle", parents=[common], help="saddle-point report")
    s.add_argument("mode", choices=["report"])
    s.add_argument("--r", type=float, required=True)
    s.add_argument("--x", type=float, required=True)
    s.add_argument("--xi", type=float)
    s.add_argument("--delta", type=float, default=0.1)

    s = sub.add_parser("report", parents=[common], help="scans over a range of heights")
    s.add_argument("mode", choices=["scan"])
    s.add_argument("--kind", choices=["e2", "z2meansq", "residual"], required=True)
    s.add_argument("--lo", type=float, required=True)
    s.add_argument("--hi", type=float, required=True)
    s.add_argument("--n", type=int, default=20)
    s.add_argument("--sigma", type=float, default=0.75)
    s.add_argument("--step", type=float, default=0.25)
    s.add_argument("--xi", type=float)
    s.add_argument("--data")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        cfg = load_config(a.config, threads=a.threads)
        if a.cache:
            cfg = replace(cfg, cache=a.cache)
        if a.command == "z2" and a.mode == "eval" and a.method is None:
            a.method = "direct"
        cache = zetacore.EvalCache(cfg.cache) if cfg.cache else None
        table = COMMANDS[a.command](a, cfg, cache)
        fmt = a.format or ("json" if a.command in JSON_DEFAULT else cfg.output)
        text = table.render(fmt)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        if isinstance(exc, ZmlError):
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 3
        print(f"zml: configuration error: {exc}", file=sys.stderr)
        return 2
    except ZmlError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    if cache is not None and cache.dirty:
        cache.save()
    emit(text, a.out)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
