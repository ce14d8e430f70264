"""SVG line plots of the bundle CSVs."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bundle import read_csv  # noqa: E402


class FigureDataError(ValueError):
    pass


# file prefix -> (x column, y columns, x label, y label)
LAYOUTS = {
    "fig4_": ("z_minus_z0_um", ["F0", "F", "dT"], "z - z0 (um)", "transmission / contrast"),
    "transmission_": ("z_um", ["F0", "F", "dT"], "z (um)", "transmission / contrast"),
    "lineshape_": ("delta_over_Gamma", ["F"], "detuning (Gamma)", "F"),
    "etapl_max": ("Wch_nm", ["eta_max"], "W_ch (nm)", "max eta_PL"),
    "fig3": ("Wch_nm", ["eta_max"], "W_ch (nm)", "max eta_PL"),
    "etapl_": ("z_um", ["eta_plus", "eta_minus", "eta_total"], "z (um)", "eta_PL"),
    "modes_": ("label", ["re_n_eff"], "supermode", "Re n_eff"),
}
FIG2_PANELS = [("re_n_eff", "Re n_eff"), ("f_m", "fiber fraction f_m"),
               ("gamma_x", "beta-factor (x dipole)"), ("eta_pl_x", "eta_PL^m (x dipole)")]


def _columns(path: Path, needed: list) -> tuple[list, list]:
    header, rows = read_csv(path)
    if not header or not rows:
        raise FigureDataError(f"{path.name}: no data rows")
    for col in needed:
        if col not in header:
            raise FigureDataError(f"{path.name}: missing column {col!r}")
    return header, rows


def _num(s: str) -> float:
    return float(s)


def _save(fig, dest: Path) -> Path:
    with plt.rc_context({"svg.hashsalt": "taperqed", "svg.fonttype": "none"}):
        fig.savefig(dest, format="svg", metadata={"Date": None})
    plt.close(fig)
    return dest


def _layout(name: str):
    for prefix, layout in LAYOUTS.items():
        if name.startswith(prefix):
            return layout
    return None


def plot_fig2(path: Path, dest: Path) -> Path:
    header, rows = _columns(path, ["Wch_nm", "label"] + [c for c, _ in FIG2_PANELS])
    idx = {c: header.index(c) for c in header}
    series = defaultdict(list)
    for r in rows:
        series[r[idx["label"]]].append(r)
    fig, axes = plt.subplots(2, 2, figsize=(9, 7), sharex=True)
    for ax, (col, ylabel), tag in zip(axes.flat, FIG2_PANELS, "abcd"):
        for label in sorted(series):
            pts = sorted(series[label], key=lambda r: _num(r[idx["Wch_nm"]]))
            ax.plot([_num(r[idx["Wch_nm"]]) for r in pts], [_num(r[idx[col]]) for r in pts],
                    marker="o", ms=3, label=label)
        ax.set_ylabel(ylabel)
        ax.set_title(f"({tag})", loc="left")
    for ax in axes[1]:
        ax.set_xlabel("W_ch (nm)")
    axes[0, 0].legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, dest)


def plot_csv(path, dest=None) -> Path:
    path = Path(path)
    dest = Path(dest) if dest else path.with_suffix(".svg")
    if path.name.startswith("fig2"):
        return plot_fig2(path, dest)
    layout = _layout(path.name)
    if layout is None:
        raise FigureDataError(f"{path.name}: unknown figure type")
    xcol, ycols, xlabel, ylabel = layout
    group = "dipole_axis"
    header, rows = _columns(path, [xcol] + ycols)
    ix = header.index(xcol)
    gi = header.index(group) if group in header else None
    groups = defaultdict(list)
    for r in rows:
        groups[r[gi] if gi is not None else ""].append(r)
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    for g in sorted(groups):
        grp = groups[g]
        for col in ycols:
            iy = header.index(col)
            lab = f"{col} ({g})" if g else col
            if xcol == "label":
                ax.plot(range(len(grp)), [_num(r[iy]) for r in grp], "o", label=lab)
                ax.set_xticks(range(len(grp)), [r[ix] for r in grp])
            else:
                ax.plot([_num(r[ix]) for r in grp], [_num(r[iy]) for r in grp], label=lab)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, dest)


def plot_bundle(directory) -> list:
    directory = Path(directory)
    out = []
    for path in sorted(directory.glob("*.csv")):
        out.append(plot_csv(path))
    return out
