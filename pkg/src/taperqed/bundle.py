"""CSV outputs and the run manifest.

All tables are UTF-8 with a header row, '.' decimals and newline-terminated
rows.  Floats are written with 12 significant digits so identical runs
produce identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from . import __version__
from .pipeline import AXIS_FAMILY, PointResult, SweepResult, f_crossing, transmission_curves


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        s = f"{v:.12g}"
        return "0" if s == "-0" else s
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list, list]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return [], []
    return rows[0], rows[1:]


def wtag(wch: float) -> str:
    return f"{wch:g}".replace(".", "p")


def modes_rows(p: PointResult):
    for m in p.modes:
        yield (m.label, m.n_eff.real, m.n_eff.imag, m.beta, m.S, m.guided, p.f(m.label))


MODES_HEADER = ["label", "re_n_eff", "im_n_eff", "beta_rad_per_um", "S_m", "guided", "f_m"]
ETAPL_HEADER = ["dipole_axis", "z_um", "eta_plus", "eta_minus", "eta_total"]
ETAMAX_HEADER = ["Wch_nm", "dipole_axis", "eta_max", "z_at_max"]
FIG3_HEADER = ["Wch_nm", "dipole_axis", "eta_max", "z_at_max", "eta_incoherent"]
TRANS_HEADER = ["z_um", "F0", "F", "dT", "F_over_F0"]
FIG4_HEADER = ["z_minus_z0_um", "F0", "F", "dT"]
LINE_HEADER = ["delta_over_Gamma", "F"]
FIG2_HEADER = ["Wch_nm", "family", "label", "re_n_eff", "f_m", "gamma_x", "gamma_z", "eta_pl_x", "eta_pl_z"]


def write_modes(p: PointResult, out: Path) -> Path:
    return write_csv(out / f"modes_{wtag(p.wch)}.csv", MODES_HEADER, modes_rows(p))


def collection_rows(p: PointResult, rad, axes, z):
    curves, summary = [], []
    for ax in axes:
        c = p.collection(ax, rad, z)["total"]
        curves.extend((ax, zi, a, b, a + b) for zi, a, b in zip(c.z, c.eta_plus, c.eta_minus))
        summary.append((p.wch, ax, c.max, c.z_at_max, c.incoherent))
    return curves, summary


def write_collection(p: PointResult, rad, axes, z, out: Path):
    curves, summary = collection_rows(p, rad, axes, z)
    path = write_csv(out / f"etapl_{wtag(p.wch)}.csv", ETAPL_HEADER, curves)
    return path, summary


def write_transmission(p: PointResult, rad, sw, out: Path) -> tuple[list, dict]:
    t = transmission_curves(p, rad, sw)
    s = t["scan"]
    rows = zip(s.z, s.F0, s.F, s.dT, s.ratio)
    paths = [write_csv(out / f"transmission_{wtag(p.wch)}.csv", TRANS_HEADER, rows),
             write_csv(out / f"lineshape_{wtag(p.wch)}.csv", LINE_HEADER, zip(t["deltas"], t["lineshape"]))]
    return paths, t


def write_fig4(p: PointResult, rad, sw, out: Path) -> Path:
    t = transmission_curves(p, rad, sw)
    s = t["scan"]
    return write_csv(out / f"fig4_{wtag(p.wch)}.csv", FIG4_HEADER, zip(s.z - s.z0, s.F0, s.F, s.dT))


def fig2_rows(points: dict, rad):
    for w in sorted(points):
        p = points[w]
        gx = p.rate_table("x", rad).gamma if "x" in p.raw_rates else None
        gz = p.rate_table("z", rad).gamma if "z" in p.raw_rates else None
        for i, m in enumerate(p.modes):
            f = p.f(m.label)
            x = gx[i] if gx is not None else float("nan")
            z = gz[i] if gz is not None else float("nan")
            yield (w, m.family, m.label, m.n_eff.real, f, x, z, f * x, f * z)


def summary(res: SweepResult) -> dict:
    """Headline numbers of a sweep (used by the manifest and the acceptance suite)."""
    out = {}
    pts = res.points
    ws = sorted(w for w in pts if {"hEx_I", "hEx_II"} <= set(pts[w].labels("hEx")))
    if ws:
        fi = [pts[w].f("hEx_I") for w in ws]
        fii = [pts[w].f("hEx_II") for w in ws]
        out["f_crossing_nm"] = f_crossing(ws, fi, fii)
    return out


def write_bundle(res: SweepResult, out) -> dict:
    """Write every CSV of a sweep plus ``manifest.json``; returns the manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cfg, sw, rad = res.config, res.config.sweep, res.radiation
    files = []
    z = np.linspace(sw.z_scan[0], sw.z_scan[1], sw.z_points)
    fig3 = []
    for w in sorted(res.points):
        p = res.points[w]
        files.append(write_modes(p, out))
        if rad is None:
            continue
        path, summ = write_collection(p, rad, sw.axes, z, out)
        files.append(path)
        fig3.extend(summ)
        paths, _ = write_transmission(p, rad, sw, out)
        files.extend(paths)
    if rad is not None:
        files.append(write_csv(out / "etapl_max.csv", ETAMAX_HEADER, [r[:4] for r in fig3]))
        files.append(write_csv(out / "fig3.csv", FIG3_HEADER, fig3))
        files.append(write_csv(out / "fig2.csv", FIG2_HEADER, fig2_rows(res.points, rad)))
        for w in sw.fig4_wch:
            if w in res.points or w in res.extra:
                files.append(write_fig4(res.point(w), rad, sw, out))
    else:
        files.append(write_csv(out / "fig2.csv", FIG2_HEADER[:5],
                               ((w, m.family, m.label, m.n_eff.real, res.points[w].f(m.label))
                                for w in sorted(res.points) for m in res.points[w].modes)))
    manifest = {
        "artifact_version": __version__,
        "config_digest": cfg.digest(),
        "config": cfg.as_dict(),
        "radiation": None if rad is None else {"kind": rad.kind, "value": rad.value, "target": rad.target,
                                               "reference_wch": rad.reference_wch},
        "calibration_error": res.calibration_error,
        "points": [
            {"wch_nm": w, "status": "ok", "modes": pts.labels(), "diagnostics": pts.diagnostics}
            for w, pts in sorted(res.points.items())
        ] + [{"wch_nm": w, "status": "failed", "error": e} for w, e in sorted(res.failures.items())],
        "extra_points": sorted(res.extra),
        "summary": summary(res),
        "files": sorted(p.name for p in files),
        "axis_family": AXIS_FAMILY,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return manifest


def audit(out) -> list:
    """Files named in the manifest that are missing on disk."""
    out = Path(out)
    with open(out / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    return [f for f in manifest["files"] if not os.path.isfile(out / f)]
