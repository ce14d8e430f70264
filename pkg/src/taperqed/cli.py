"""Command-line entry point.

Exit codes: 0 success, 2 partial sweep failure, 3 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bundle, config
from .coupling import coupling_table, fiber_modes
from .emission import CalibrationError
from .figures import FigureDataError, plot_bundle, plot_csv
from .geometry import GeometryError, rasterize
from .modesolver import solve_modes, write_fields
from .pipeline import SweepResult, calibrate, run_points, sweep

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 2, 3
log = logging.getLogger("taperqed")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration document")
    p.add_argument("-o", "--output", help="output directory")
    p.add_argument("--dx", type=float, help="grid step in nm (sets dx and dy)")
    p.add_argument("--workers", type=int)
    p.add_argument("--dump-epsilon", metavar="CSV", help="write the permittivity map of the first point")
    p.add_argument("-v", "--verbose", action="store_true")


def _cfg(args, **extra) -> config.RunConfig:
    over = dict(output=args.output, workers=args.workers, **extra)
    if args.dx is not None:
        over.update(dx=args.dx, dy=args.dx)
    return config.load(args.config, **over)


def _outdir(cfg) -> Path:
    out = Path(cfg.sweep.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_epsilon(args, cfg, wch) -> None:
    if args.dump_epsilon:
        rasterize(cfg.spec.replace(channel_width=wch), cfg.grid).write_csv(args.dump_epsilon)


def _single(cfg, wch) -> SweepResult:
    """One width plus, when needed, the calibration reference."""
    fibers = fiber_modes(cfg.spec, cfg.grid)
    points, failures = run_points(cfg, [wch], fibers, 1)
    ref_w = float(cfg.sweep.radiation.get("reference_wch", 220.0))
    extra = {}
    if cfg.sweep.radiation.get("kind", "calibrated") == "calibrated" and ref_w not in points:
        extra, f = run_points(cfg, [ref_w], fibers, 1)
        failures.update(f)
    res = SweepResult(cfg, points, failures, None, extra)
    ref = points.get(ref_w) or extra.get(ref_w)
    try:
        if ref is None and cfg.sweep.radiation.get("kind", "calibrated") == "calibrated":
            raise CalibrationError(f"reference point W_ch={ref_w:g} nm failed")
        res.radiation = calibrate(cfg, ref)
    except CalibrationError as exc:
        res.calibration_error = str(exc)
    return res


def cmd_modes(args) -> int:
    cfg = _cfg(args, wch=[args.wch_nm])
    _dump_epsilon(args, cfg, args.wch_nm)
    spec = cfg.spec.replace(channel_width=args.wch_nm)
    pmap = rasterize(spec, cfg.grid)
    basis = solve_modes(pmap, spec.wavelength, search_window=args.window, k=args.k, seed=cfg.sweep.seed)
    ctab = coupling_table(basis, fiber_modes(cfg.spec, cfg.grid))
    path = bundle.write_csv(_outdir(cfg) / f"modes_{bundle.wtag(args.wch_nm)}.csv", bundle.MODES_HEADER,
                            ((m.label, m.n_eff.real, m.n_eff.imag, m.beta, m.S, m.guided, ctab.f(m.label))
                             for m in basis))
    if args.dump_fields:
        d = Path(args.dump_fields)
        d.mkdir(parents=True, exist_ok=True)
        for m in basis:
            write_fields(m, d / f"{m.label}_{bundle.wtag(args.wch_nm)}.bin")
    print(path)
    return EXIT_OK


def cmd_collect(args) -> int:
    over = {"wch": [args.wch_nm]}
    if args.axis:
        over["axes"] = tuple(args.axis)
        over["transmit_axis"] = args.axis[0]
    if args.z_range:
        over["z_scan"] = tuple(args.z_range)
    cfg = _cfg(args, **over)
    _dump_epsilon(args, cfg, args.wch_nm)
    res = _single(cfg, args.wch_nm)
    if res.radiation is None:
        log.error("calibration failed: %s", res.calibration_error)
        return EXIT_PARTIAL
    if res.failures:
        log.error("failed: %s", res.failures)
        return EXIT_PARTIAL
    sw = cfg.sweep
    z = np.linspace(sw.z_scan[0], sw.z_scan[1], sw.z_points)
    out = _outdir(cfg)
    path, summ = bundle.write_collection(res.points[float(args.wch_nm)], res.radiation, sw.axes, z, out)
    mx = bundle.write_csv(out / "etapl_max.csv", bundle.ETAMAX_HEADER, [r[:4] for r in summ])
    print(path)
    print(mx)
    return EXIT_OK


def cmd_transmit(args) -> int:
    over = {"wch": [args.wch_nm], "detuning": args.detuning}
    if args.z0_um is not None:
        over["z0"] = args.z0_um
    if args.zmax_um is not None:
        over["zmax"] = args.zmax_um
    cfg = _cfg(args, **over)
    _dump_epsilon(args, cfg, args.wch_nm)
    res = _single(cfg, args.wch_nm)
    if res.radiation is None or res.failures:
        log.error("failed: %s %s", res.calibration_error or "", res.failures)
        return EXIT_PARTIAL
    paths, t = bundle.write_transmission(res.points[float(args.wch_nm)], res.radiation, cfg.sweep,
                                         _outdir(cfg))
    for p in paths:
        print(p)
    ext = t["scan"].extrema
    print(f"L_pi = {t['L_pi']:.4f} um, z0 = {t['z0']:.4f} um, "
          f"F/F0 in [{ext.get('ratio_min', float('nan')):.4g}, {ext.get('ratio_max', float('nan')):.4g}]")
    return EXIT_OK


def cmd_sweep(args) -> int:
    over = {}
    if args.wch_nm:
        over["wch"] = args.wch_nm
    elif args.range:
        over["wch"] = config.wch_range(*args.range)
    cfg = _cfg(args, **over)
    _dump_epsilon(args, cfg, cfg.sweep.wch[0])
    res = sweep(cfg)
    manifest = bundle.write_bundle(res, cfg.sweep.output)
    missing = bundle.audit(cfg.sweep.output)
    if missing:
        log.error("manifest references missing files: %s", missing)
        return EXIT_PARTIAL
    print(f"{len(manifest['files'])} files written to {cfg.sweep.output}")
    if res.failures or res.radiation is None:
        log.error("partial sweep: %s %s", res.failures, res.calibration_error or "")
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_figures(args) -> int:
    target = Path(args.path)
    try:
        paths = [plot_csv(target)] if target.is_file() else plot_bundle(target)
    except FigureDataError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .eigensolver import selftest
    results = selftest()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else 1


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="taperqed", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("modes", help="supermodes at one channel width")
    _common(p)
    p.add_argument("--wch-nm", type=float, required=True)
    p.add_argument("--window", type=float, nargs=2, metavar=("N_LO", "N_HI"))
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--dump-fields", metavar="DIR", help="write raw field dumps")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("collect", help="fiber-collected PL efficiency")
    _common(p)
    p.add_argument("--wch-nm", type=float, required=True)
    p.add_argument("--axis", choices=["x", "z"], action="append")
    p.add_argument("--z-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("transmit", help="resonant transmission and lineshape")
    _common(p)
    p.add_argument("--wch-nm", type=float, required=True)
    p.add_argument("--z0-um", type=float)
    p.add_argument("--zmax-um", type=float)
    p.add_argument("--detuning", type=float, default=0.0, help="in units of Gamma")
    p.set_defaults(func=cmd_transmit)

    p = sub.add_parser("sweep", help="width sweep and figure data")
    _common(p)
    p.add_argument("--wch-nm", type=float, nargs="+")
    p.add_argument("--range", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("figures", help="SVG plots for a bundle directory or one CSV")
    p.add_argument("path")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_figures)

    p = sub.add_parser("eig-selftest", help=argparse.SUPPRESS)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (config.ConfigError, GeometryError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
