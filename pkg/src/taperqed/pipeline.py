"""End-to-end evaluation of one coupler cross-section and of a width sweep."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .coupling import FiberMode, coupling_table, fiber_for, fiber_modes, overlap
from .emission import (
    CalibrationError, CouplerChannel, DipoleSpec, RadiationModel, RateTable, collection_efficiency,
    guided_rate,
)
from .geometry import CrossSectionSpec, GridSpec, rasterize, validate
from .modesolver import ModeBasis, Supermode, ordinal_of, relabel_map, solve_modes
from .transmission import beat_length, contrast_scan, lineshape, off_resonance

log = logging.getLogger(__name__)

# fiber polarisation / supermode family addressed by each dipole axis at the channel centre
AXIS_FAMILY = {"x": "hEx", "z": "hEy"}


@dataclass
class ModeRecord:
    """Field-free summary of a supermode."""

    label: str
    family: str
    n_eff: complex
    beta: float
    S: float
    guided: bool
    ambiguous: bool
    pol_x: float


@dataclass
class PointResult:
    wch: float
    modes: list  # ModeRecord
    overlaps: dict  # label -> Overlap
    raw_rates: dict  # axis -> {label: (Gamma_m / Gamma_bulk, emission phase)}
    diagnostics: dict = field(default_factory=dict)
    basis: ModeBasis | None = field(default=None, repr=False)

    def relabel(self, mapping: dict) -> "PointResult":
        modes = [ModeRecord(**{**m.__dict__, "label": mapping[m.label]}) for m in self.modes]
        modes.sort(key=lambda m: (m.family, -m.n_eff.real))
        return PointResult(
            self.wch, modes,
            {mapping[k]: v for k, v in self.overlaps.items()},
            {ax: {mapping[k]: v for k, v in r.items()} for ax, r in self.raw_rates.items()},
            self.diagnostics, None,
        )

    def labels(self, family: str | None = None) -> list:
        return [m.label for m in self.modes if family is None or m.family == family]

    def mode(self, label: str) -> ModeRecord:
        return next(m for m in self.modes if m.label == label)

    def f(self, label: str) -> float:
        return self.overlaps[label].f

    def rate_table(self, axis: str, rad: RadiationModel) -> RateTable:
        labels = self.labels()
        rates = np.array([self.raw_rates[axis][lab][0] for lab in labels])
        phases = np.array([self.raw_rates[axis][lab][1] for lab in labels])
        if rad.value is None:
            rad = rad.calibrate(list(rates))
        return RateTable(labels, rates, phases, float(rad.value), {"radiation_model": rad})

    def channel(self, axis: str, rad: RadiationModel, family: str | None = None) -> CouplerChannel:
        family = family or AXIS_FAMILY[axis]
        table = self.rate_table(axis, rad)
        gam = dict(zip(table.labels, table.gamma))
        labels = self.labels(family)
        f = [self.overlaps[lab].f for lab in labels]
        phi = [self.raw_rates[axis][lab][1] + np.angle(self.overlaps[lab].to_fiber) for lab in labels]
        beta = [self.mode(lab).beta for lab in labels]
        return CouplerChannel(np.array(f), np.array([gam[lab] for lab in labels]), np.array(beta),
                              np.array(phi), labels)

    def collection(self, axis: str, rad: RadiationModel, z) -> dict:
        """Per-family collection curves plus their sum under key ``"total"``.

        The two fiber polarisations are orthogonal, so families add in power.
        """
        out = {}
        for fam in ("hEx", "hEy"):
            if self.labels(fam):
                out[fam] = collection_efficiency(self.channel(axis, rad, fam), z)
        curves = list(out.values())
        out["total"] = type(curves[0])(
            curves[0].z, sum(c.eta_plus for c in curves), sum(c.eta_minus for c in curves),
            sum(c.incoherent for c in curves),
        )
        return out


def solve_point(spec: CrossSectionSpec, grid: GridSpec, fibers: dict, wch: float,
                axes=("x", "z"), seed: int | None = None, keep_basis: bool = True) -> PointResult:
    """Supermodes, fiber fractions and raw emission rates at one channel width."""
    t0 = time.perf_counter()
    spec = spec.replace(channel_width=float(wch))
    validate(spec, grid)
    pmap = rasterize(spec, grid)
    basis = solve_modes(pmap, spec.wavelength, seed=seed)
    ctab = coupling_table(basis, fibers)
    raw = {}
    dipoles = {ax: DipoleSpec.centered(spec, ax) for ax in axes}
    for ax, d in dipoles.items():
        raw[ax] = {m.label: guided_rate(m, d, spec.channel_index) for m in basis}
    modes = [ModeRecord(m.label, m.family, m.n_eff, m.beta, m.S, m.guided, m.ambiguous, m.pol_x)
             for m in basis]
    solver = basis.provenance["solver"]
    diag = {
        "max_residual": max(v["max_residual"] for v in solver.values()),
        "restarts": sum(v["restarts"] for v in solver.values()),
        "ampere_residual": max(m.diagnostics["ampere_residual"] for m in basis),
        "invariants": point_invariants(basis, fibers, pmap, dipoles, spec.channel_index, seed),
        "wall_time_s": time.perf_counter() - t0,
    }
    return PointResult(float(wch), modes, dict(ctab.overlaps), raw, diag,
                       _thin(basis) if keep_basis else None)


def point_invariants(basis: ModeBasis, fibers: dict, pmap, dipoles: dict, n_ch: float,
                     seed: int | None = None, tol: float = 1e-9) -> dict:
    """Violation counts of the per-point invariants.

    Checks: mirror symmetry of the map and of every |E| profile, invariance
    of f_m and Gamma_m under random complex rescaling of either field, and
    the discrete divergence relation.
    """
    rng = np.random.default_rng(seed)
    v = {"mirror": 0, "f_scaling": 0, "rate_scaling": 0, "divergence": 0}
    worst = {"mirror": pmap.mirror_error() if pmap.symmetric else 0.0, "f_scaling": 0.0,
             "rate_scaling": 0.0, "divergence": 0.0}
    if worst["mirror"] > 0:
        v["mirror"] += 1
    for m in basis:
        if pmap.symmetric:
            err = max(float(np.abs(np.abs(m.fields[c]) - np.abs(m.fields[c][::-1])).max())
                      for c in ("Ex", "Ey", "Ez"))
            worst["mirror"] = max(worst["mirror"], err)
            v["mirror"] += err > 0
        c1, c2 = rng.normal(size=2) + 1j * rng.normal(size=2)
        fiber = fiber_for(m, fibers)
        ref = overlap(m, fiber).f
        sf = FiberMode(scale_fields(fiber.fields, c2), fiber.S, fiber.n_eff, fiber.polarization, fiber.grid)
        err = abs(overlap(m.scaled(c1), sf).f - ref)
        worst["f_scaling"] = max(worst["f_scaling"], err)
        v["f_scaling"] += err > tol
        for d in dipoles.values():
            r0 = guided_rate(m, d, n_ch)[0]
            err = abs(guided_rate(m.scaled(c1), d, n_ch)[0] - r0) / max(r0, 1e-300)
            err = err if r0 > 0 else 0.0
            worst["rate_scaling"] = max(worst["rate_scaling"], err)
            v["rate_scaling"] += err > tol
        err = divergence_residual(m, pmap)
        worst["divergence"] = max(worst["divergence"], err)
        v["divergence"] += err > 1e-6
    return {"violations": v, "worst": worst}


def scale_fields(fields: dict, c: complex) -> dict:
    return {k: c * a for k, a in fields.items()}


def divergence_residual(mode: Supermode, pmap) -> float:
    """Largest |div(eps E)| over interior nodes, relative to its largest term.

    div(eps E) = d/dx(eps_x Ex) + d/dy(eps_y Ey) + i beta eps_z Ez on the
    staggered grid.
    """
    g = mode.grid
    dx, dy = g.dx / 1000.0, g.dy / 1000.0
    f = mode.fields
    beta = mode.k0 * mode.n_eff
    dex = np.diff(pmap.eps_x * f["Ex"], axis=0)[:, 1:-1] / dx  # (nx-1, ny-1) interior nodes
    dey = np.diff(pmap.eps_y * f["Ey"], axis=1)[1:-1, :] / dy
    ez = 1j * beta * pmap.eps_z[1:-1, 1:-1] * f["Ez"][1:-1, 1:-1]
    div = dex + dey + ez
    scale = max(np.abs(dex).max(), np.abs(dey).max(), np.abs(ez).max())
    return float(np.abs(div).max() / scale)


def _thin(basis: ModeBasis) -> ModeBasis:
    """Keep only the transverse E planes needed for tracking."""
    modes = [Supermode(**{**m.__dict__, "fields": {c: m.fields[c] for c in ("Ex", "Ey")}})
             for m in basis]
    return ModeBasis(basis.wavelength, modes, basis.provenance)


def _worker(args):
    spec, grid, fibers, wch, axes, seed = args
    try:
        return solve_point(spec, grid, fibers, wch, axes, seed)
    except Exception as exc:  # recorded per point, the sweep continues
        log.exception("point W_ch=%g failed", wch)
        return f"{type(exc).__name__}: {exc}"


@dataclass
class SweepResult:
    config: RunConfig
    points: dict  # wch -> PointResult (tracked labels)
    failures: dict  # wch -> error message
    radiation: RadiationModel | None
    extra: dict = field(default_factory=dict)  # off-sweep points (reference, fig4)
    calibration_error: str | None = None

    def point(self, wch: float) -> PointResult:
        wch = float(wch)
        return self.points.get(wch) or self.extra[wch]


def run_points(cfg: RunConfig, widths, fibers=None, workers: int | None = None) -> tuple[dict, dict]:
    """Solve ``widths`` in order, tracking labels from each point to the next."""
    fibers = fibers if fibers is not None else fiber_modes(cfg.spec, cfg.grid)
    sw = cfg.sweep
    axes = tuple(sw.axes)
    if sw.radiation.get("kind", "calibrated") == "calibrated":
        # the calibration axis is always solved, whatever the requested outputs
        axes = tuple(dict.fromkeys(axes + (sw.radiation.get("reference_axis", "x"),)))
    jobs = [(cfg.spec, cfg.grid, fibers, w, axes, sw.seed) for w in widths]
    workers = workers or sw.workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = [_worker(j) for j in jobs]
    points, failures, prev = {}, {}, None
    for w, res in zip(widths, results):
        if isinstance(res, str):
            failures[float(w)] = res
            continue
        if prev is not None:
            mapping = relabel_map(prev, res.basis)
            thin = res.basis
            res = res.relabel(mapping)
            res.basis = ModeBasis(thin.wavelength, [m.relabeled(ordinal_of(mapping[m.label])) for m in thin],
                                  thin.provenance)
        prev = res.basis
        points[float(w)] = res
    for p in points.values():
        p.basis = None
    return points, failures


def calibrate(cfg: RunConfig, point: PointResult) -> RadiationModel:
    r = cfg.sweep.radiation
    if r.get("kind", "calibrated") == "explicit":
        return RadiationModel.explicit(r["value"])
    model = RadiationModel("calibrated", None, r.get("target", 0.73), r.get("reference_wch", 220.0),
                           r.get("reference_axis", "x"))
    return point.rate_table(model.reference_axis, model).meta["radiation_model"]


def sweep(cfg: RunConfig, workers: int | None = None) -> SweepResult:
    fibers = fiber_modes(cfg.spec, cfg.grid)
    points, failures = run_points(cfg, cfg.sweep.wch, fibers, workers)
    rcfg = cfg.sweep.radiation
    ref_w = float(rcfg.get("reference_wch", 220.0))
    need = [w for w in cfg.sweep.fig4_wch if w not in points]
    if rcfg.get("kind", "calibrated") == "calibrated" and ref_w not in points:
        need.append(ref_w)
    need = sorted(set(need) - set(failures))
    extra = {}
    for w in need:
        # isolated points: labels by n_eff order, no tracking neighbour
        p, f = run_points(cfg, [w], fibers, 1)
        extra.update(p)
        failures.update(f)
    res = SweepResult(cfg, points, failures, None, extra)
    try:
        ref = points.get(ref_w) or extra.get(ref_w)
        if rcfg.get("kind", "calibrated") == "calibrated" and ref is None:
            raise CalibrationError(f"reference point W_ch={ref_w:g} nm failed")
        res.radiation = calibrate(cfg, ref)
    except CalibrationError as exc:
        res.calibration_error = str(exc)
    return res


def transmission_setup(point: PointResult, rad: RadiationModel, axis: str = "x", z0="half_beat"):
    ch = point.channel(axis, rad)
    Lp = beat_length(ch) if ch.beta.size >= 2 else float("nan")
    z0v = 0.5 * Lp if z0 == "half_beat" else float(z0)
    if not np.isfinite(z0v):
        z0v = 0.0
    return ch, Lp, z0v


def transmission_curves(point: PointResult, rad: RadiationModel, sw) -> dict:
    ch, Lp, z0 = transmission_setup(point, rad, sw.transmit_axis, sw.z0)
    dz = np.linspace(0.0, sw.zmax, sw.t_points)
    scan = contrast_scan(ch, z0 + dz, z0, sw.detuning)
    r = scan.ratio
    fin = np.isfinite(r)
    # lineshape at the strongest contrast point of the scan
    with np.errstate(divide="ignore"):
        db = np.where(fin, np.abs(10 * np.log10(np.where(fin & (r > 0), r, 1.0))), -1)
    zl = float(scan.z[int(np.argmax(db))])
    deltas = np.linspace(-sw.lineshape_span, sw.lineshape_span, sw.lineshape_points)
    return {
        "channel": ch, "L_pi": Lp, "z0": z0, "scan": scan, "z_lineshape": zl,
        "deltas": deltas, "lineshape": lineshape(ch, zl, z0, deltas),
        "F0_lineshape": float(off_resonance(ch, zl)[0]),
    }


def f_crossing(widths, f_one, f_two) -> float | None:
    """Width where f_one - f_two changes sign, linearly interpolated."""
    w = np.asarray(widths, dtype=float)
    d = np.asarray(f_one) - np.asarray(f_two)
    for i in range(len(w) - 1):
        if d[i] == 0:
            return float(w[i])
        if np.sign(d[i]) != np.sign(d[i + 1]):
            return float(w[i] + (w[i + 1] - w[i]) * d[i] / (d[i] - d[i + 1]))
    return None
