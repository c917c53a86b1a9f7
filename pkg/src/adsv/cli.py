"""Command-line experiment runner.

Subcommands::

    adsv derive capillary                       channel statistics
    adsv pdf --counts "4,0;2,2;0,4" --Te 0.1   conditional pdf on a grid
    adsv ber run.cfg                            Monte Carlo + theory sweep
    adsv optimize --N 2,4,8,16                  best binary split per N

``ber`` reads a flat ``key=value`` file (``#`` starts a comment). Every CSV
starts with ``# key=value`` lines describing the run, and
``adsv ber --from-output result.csv`` re-runs an experiment from them.
Floats are written with the shortest round-trip representation.
"""

from __future__ import annotations

import argparse
import io
import sys
from typing import Optional, TextIO

import numpy as np

from . import analysis, detection, montecarlo
from .channel import ChannelParams, PropagationModel, derive_channel, preset
from .errors import ConfigError, DegenerateSchemeError
from .modulation import (ModulationScheme, binary_scheme, half_split_scheme,
                         interval_scheme, ppm_scheme)

BER_KEYS = ("channel", "d", "v", "D", "model", "q", "N", "counts", "N0", "N1", "Te",
            "pd", "theta", "detector", "trials", "seed", "axis", "values", "out")
BER_HEADER = "value,ber_mc,stderr,ber_theory,degenerate_fraction"
BER_DEFAULTS = {"model": "NormalApprox", "detector": "ADSV", "pd": "0.0", "theta": "0.0",
                "trials": "100000", "seed": "0"}


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------

def parse_config(text: str) -> dict:
    """Parse ``key=value`` lines. Blank lines and ``#`` comments are skipped."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in BER_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        cfg[key] = value
    return cfg


def echoed_config(text: str) -> dict:
    """Recover the config from the ``# key=value`` lines of a ``ber`` output."""
    lines = [ln[1:].strip() for ln in text.splitlines() if ln.startswith("#")]
    return parse_config("\n".join(ln for ln in lines if "=" in ln))


def _get(cfg: dict, key: str, conv, default=None):
    if key not in cfg:
        return default
    try:
        return conv(cfg[key])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{key}: cannot parse {cfg[key]!r} ({exc})") from None


def _parse_counts(text: str) -> tuple:
    rows = tuple(tuple(int(c) for c in row.split(",")) for row in text.split(";") if row.strip())
    if not rows:
        raise ValueError("no rows")
    return rows


def channel_from_config(cfg: dict):
    physical = [k for k in ("d", "v", "D") if k in cfg]
    if physical:
        if len(physical) != 3:
            raise ConfigError("d, v and D must be given together")
        if "channel" in cfg:
            raise ConfigError("channel: give either a preset name or d/v/D, not both")
        try:
            return ChannelParams(_get(cfg, "d", float), _get(cfg, "v", float),
                                 _get(cfg, "D", float))
        except ValueError as exc:
            raise ConfigError(f"d/v/D: {exc}") from None
    name = cfg.get("channel", "capillary")
    try:
        preset(name)
    except ValueError as exc:
        raise ConfigError(f"channel: {exc}") from None
    return name


def scheme_from_config(cfg: dict, detector: montecarlo.Detector) -> ModulationScheme:
    T_e = _get(cfg, "Te", float)
    if T_e is None:
        raise ConfigError("Te: required")
    N = _get(cfg, "N", int)
    try:
        if "counts" in cfg:
            if "N0" in cfg or "N1" in cfg:
                raise ConfigError("counts: cannot be combined with N0/N1")
            rows = _get(cfg, "counts", _parse_counts)
            q = _get(cfg, "q", int, len(rows))
            return ModulationScheme(q=q, N=N if N is not None else sum(rows[0]), T_e=T_e,
                                    counts=rows,
                                    allow_degenerate=detector is montecarlo.Detector.SD_ML)
        if "q" in cfg and _get(cfg, "q", int) != 2:
            raise ConfigError("q: schemes with q > 2 need explicit counts")
        if "N0" in cfg or "N1" in cfg:
            if N is None or "N0" not in cfg or "N1" not in cfg:
                raise ConfigError("N0/N1: need N, N0 and N1 together")
            return binary_scheme(N, _get(cfg, "N0", int), _get(cfg, "N1", int), T_e)
        if detector in (montecarlo.Detector.TI_D, montecarlo.Detector.TI_ID):
            if N not in (None, 2):
                raise ConfigError("N: interval detectors use exactly 2 molecules")
            return interval_scheme(T_e)
        if N is None:
            raise ConfigError("N: required")
        if detector is montecarlo.Detector.SD_ML:
            return ppm_scheme(N, T_e)
        return half_split_scheme(N, T_e)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"scheme (q/N/counts/N0/N1/Te): {exc}") from None


def experiment_from_config(cfg: dict):
    """Build ``(TrialConfig, axis, values)`` from a parsed config."""
    full = {**BER_DEFAULTS, **cfg}
    try:
        detector = montecarlo.Detector(full["detector"])
    except ValueError:
        raise ConfigError(f"detector: unknown {full['detector']!r}; choose from "
                          f"{[d.value for d in montecarlo.Detector]}") from None
    try:
        model = PropagationModel.parse(full["model"])
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None
    channel = channel_from_config(full)
    scheme = scheme_from_config(full, detector)
    if ("axis" in full) != ("values" in full):
        raise ConfigError("axis/values: give both or neither")
    axis = full.get("axis")
    if axis is not None and axis not in montecarlo.AXES:
        raise ConfigError(f"axis: unknown {axis!r}; choose from {montecarlo.AXES}")
    if axis == "N" and ("counts" in full or "N0" in full):
        raise ConfigError("axis: an N sweep rebuilds the scheme; drop counts/N0/N1")
    conv = int if axis == "N" else float
    values = _get(full, "values", lambda t: [conv(x) for x in t.split(",") if x.strip()], [])
    try:
        tc = montecarlo.TrialConfig(
            scheme=scheme, channel=channel, propagation_model=model, detector=detector,
            p_d=_get(full, "pd", float), theta=_get(full, "theta", float),
            n_trials=_get(full, "trials", int), seed=_get(full, "seed", int))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return tc, axis, values


def ber_table(cfg: dict, workers: int = 1) -> str:
    """Run a ``ber`` experiment and return the CSV text (config echo included)."""
    tc, axis, values = experiment_from_config(cfg)
    full = {**BER_DEFAULTS, **cfg}
    if not any(k in full for k in ("channel", "d", "v", "D")):
        full["channel"] = "capillary"
    buf = io.StringIO()
    for key in BER_KEYS:
        if key in full and key != "out":
            buf.write(f"# {key}={full[key]}\n")
    buf.write(BER_HEADER + "\n")
    if axis is None:
        rows = [montecarlo.SweepRow(value=None, estimate=montecarlo.run_trials(tc, workers),
                                    theory=montecarlo.theory_error(tc))]
    else:
        rows = montecarlo.sweep(tc, axis, values, theory=True, workers=workers)
    for r in rows:
        e = r.estimate
        buf.write(",".join([fmt(r.value), fmt(e.rate), fmt(e.stderr), fmt(r.theory),
                            fmt(e.degenerate_trials / e.trials)]) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _emit(text: str, out: Optional[str], stdout: TextIO):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        stdout.write(text)


def cmd_derive(args, stdout):
    if args.name is not None:
        if any(x is not None for x in (args.d, args.v, args.D)):
            raise ConfigError("give either a preset name or --d/--v/--D")
        ch = derive_channel(args.name)
    else:
        if any(x is None for x in (args.d, args.v, args.D)):
            raise ConfigError("--d, --v and --D are all required without a preset name")
        ch = derive_channel(ChannelParams(args.d, args.v, args.D))
    stdout.write(f"mu={fmt(ch.mu)}\nsigma2={fmt(ch.sigma2)}\n"
                 f"gamma={fmt(ch.skewness_gamma)}\nnormal_ok={ch.normal_ok}\n")


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:num`` (linspace) or a comma list of points."""
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            grid = np.linspace(float(start), float(stop), int(num))
        else:
            grid = np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError as exc:
        raise ConfigError(f"grid: cannot parse {text!r} ({exc})") from None
    if grid.size == 0:
        raise ConfigError("grid: no points")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise ConfigError("grid: points must be finite and >= 0")
    return grid


def pdf_table(counts: str, T_e: float, channel, grid: np.ndarray, M: Optional[int] = None,
              noisy: bool = False) -> str:
    """CSV of the conditional density of ``z`` for each release row (case).

    Every row gives molecule counts per release slot; rows need equal length
    and equal totals. Time-reversed rows are allowed, since showing that they
    share one law is a reason to plot them. Identical rows are rejected.
    """
    try:
        rows = _parse_counts(counts)
    except ValueError as exc:
        raise ConfigError(f"counts: cannot parse {counts!r} ({exc})") from None
    slots, N = len(rows[0]), sum(rows[0])
    if slots < 2 or any(len(r) != slots for r in rows):
        raise ConfigError("counts: rows need the same number (>= 2) of slots")
    if any(sum(r) != N for r in rows) or any(c < 0 for r in rows for c in r):
        raise ConfigError("counts: rows need non-negative entries with equal totals")
    for b in range(len(rows)):
        for c in range(b):
            if rows[b] == rows[c]:
                raise DegenerateSchemeError(f"rows {c} and {b} are identical: {rows[b]}")
    if not (T_e > 0):
        raise ConfigError(f"Te: must be positive, got {T_e}")
    sigma2 = derive_channel(channel).sigma2
    M = N if M is None else M
    if not noisy and M != N:
        raise ConfigError(f"M={M} differs from N={N}; pass --noisy")
    cols = []
    for row in rows:
        if noisy:
            lp = detection.row_logpdf_noisy(grid, M, row, T_e, sigma2)
        else:
            lp = detection.row_logpdf_noiseless(grid, row, T_e, sigma2)
        cols.append(np.exp(np.asarray(lp, dtype=float)))
    buf = io.StringIO()
    buf.write(f"# counts={counts}\n# Te={fmt(T_e)}\n# channel={channel}\n# M={M}\n"
              f"# noisy={noisy}\n")
    buf.write(",".join(["z"] + [f"f{b}" for b in range(len(rows))]) + "\n")
    for i, z in enumerate(grid):
        buf.write(",".join([fmt(z)] + [fmt(c[i]) for c in cols]) + "\n")
    return buf.getvalue()


def cmd_pdf(args, stdout):
    _emit(pdf_table(args.counts, args.Te, args.channel, parse_grid(args.grid), args.M,
                    args.noisy), args.out, stdout)


def cmd_ber(args, stdout):
    if (args.config is None) == (args.from_output is None):
        raise ConfigError("give exactly one of CONFIG or --from-output")
    if args.config is not None:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    else:
        with open(args.from_output, encoding="utf-8") as fh:
            cfg = echoed_config(fh.read())
    for item in args.set or []:
        extra = parse_config(item)
        cfg.update(extra)
    out = args.out if args.out is not None else cfg.get("out")
    _emit(ber_table(cfg, args.workers), out, stdout)


def optimize_table(Ns, channel, T_e: float, p_d: float) -> str:
    sigma2 = derive_channel(channel).sigma2
    buf = io.StringIO()
    buf.write(f"# channel={channel}\n# Te={fmt(T_e)}\n# pd={fmt(p_d)}\n")
    buf.write("N,N0,N1,P_e\n")
    for N in Ns:
        n0, n1, pe = analysis.optimize_binary_split(N, T_e, sigma2, p_d)
        buf.write(f"{N},{n0},{n1},{fmt(pe)}\n")
    return buf.getvalue()


def cmd_optimize(args, stdout):
    try:
        Ns = [int(x) for x in args.N.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--N: cannot parse {args.N!r}") from None
    if not Ns:
        raise ConfigError("--N: no values")
    _emit(optimize_table(Ns, args.channel, args.Te, args.pd), args.out, stdout)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adsv", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("derive", help="propagation statistics of a channel")
    d.add_argument("name", nargs="?", help="preset name (capillary, svc)")
    d.add_argument("--d", type=float, help="distance (um)")
    d.add_argument("--v", type=float, help="drift velocity (um/s)")
    d.add_argument("--D", type=float, help="diffusion coefficient (um^2/s)")
    d.set_defaults(func=cmd_derive)

    f = sub.add_parser("pdf", help="conditional pdf of the variance statistic")
    f.add_argument("--counts", required=True, help='release counts, e.g. "4,0;2,2"')
    f.add_argument("--Te", type=float, required=True)
    f.add_argument("--channel", default="capillary")
    f.add_argument("--M", type=int, help="number of surviving molecules (default N)")
    f.add_argument("--noisy", action="store_true", help="mixture over survivor sets")
    f.add_argument("--grid", default="0:60:601", help="start:stop:num or a,b,c")
    f.add_argument("--out")
    f.set_defaults(func=cmd_pdf)

    b = sub.add_parser("ber", help="Monte Carlo error rate with theory column")
    b.add_argument("config", nargs="?", help="key=value config file")
    b.add_argument("--from-output", help="re-run from the header of a previous output")
    b.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a key")
    b.add_argument("--out")
    b.add_argument("--workers", type=int, default=1)
    b.set_defaults(func=cmd_ber)

    o = sub.add_parser("optimize", help="best (N0, N1) per molecule count")
    o.add_argument("--N", default="2,4,8,16", help="comma list of molecule counts")
    o.add_argument("--channel", default="capillary")
    o.add_argument("--Te", type=float, default=0.1)
    o.add_argument("--pd", type=float, default=0.0)
    o.add_argument("--out")
    o.set_defaults(func=cmd_optimize)
    return p


def main(argv=None, stdout: TextIO = None, stderr: TextIO = None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else 2
    try:
        args.func(args, stdout)
    except (ValueError, ArithmeticError, OSError) as exc:
        stderr.write(f"adsv {args.command}: error: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
