"""Command-line interface: config-driven simulation, fitting, and export.

Configs are INI files ([section] key = value). Every key is validated
against the schema below; unknown sections or keys are hard errors so a
typo cannot silently fall back to a default. All file outputs are
written atomically (temp file in the target directory, then rename)
with fixed number formatting, so a command repeated with the same seed
produces byte-identical files.

Exit codes: 0 success, 2 validation or config error, 3 numerical
failure (fit or integration).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .core import (
    HC_EV_NM,
    ZPL_WAVELENGTH_NM,
    DefectSpectraError,
    EmitterParams,
    FitError,
    IntegrationError,
    InvalidArgumentError,
    ValidationError,
    delta_e_from_delta_lambda,
    delta_lambda_from_delta_e,
)
from .ensemble import (
    BiasedZSpec,
    DefectDensitySpec,
    SingleDefectSpec,
    UniformSpec,
    histogram_shifts,
    sample_biased_z,
    sample_defect_field,
    sample_uniform,
    synthesize_spectrum,
)
from .fitting import (
    fit_peaks,
    fit_power_law,
    fit_single_exponential,
)
from .kinetics import (
    DamageParams,
    DecayModelParams,
    IrradiationSchedule,
    ScheduleSegment,
    decompose_lifetimes,
    integrate_damage,
    pl_proxy,
    pulsed_schedule,
    rise_time,
    simulate_decay,
)
from .lattice import (
    Geometry,
    SupercellSpec,
    build_supercell,
    enumerate_candidates,
    place_gcenter,
    write_xyz,
)
from .strainfield import ElasticParams
from .zplmap import default_table, load_response_table

# ---------------------------------------------------------------------------
# config schema
# ---------------------------------------------------------------------------

def _float_or_none(text):
    if text.strip().lower() in ("none", ""):
        return None
    return float(text)


_SCHEMA = {
    "emitter": {
        "zpl_wavelength_nm": float,
        "homogeneous_fwhm_nm": float,
        "radiative_lifetime_ns": float,
    },
    "sampler": {
        "mode": str,
        "samples": int,
        "strain_low": float,
        "strain_high": float,
        "xy_threshold": float,
        "keep_fraction": float,
        "defect_kind": str,
        "separation_nm": float,
        "vacancy_density_cm3": float,
        "interstitial_density_cm3": float,
        "r_min_nm": float,
        "r_max_nm": float,
        "bin_width_mev": float,
    },
    "elastic": {
        "atomic_volume_nm3": float,
        "core_cutoff_nm": float,
    },
    "response": {
        "table": str,
    },
    "kinetics": {
        "tau_r_ns": float,
        "g_center_density_cm3": float,
        "capture_coefficient_g_cm3_ns": float,
        "trap_density_cm3": float,
        "capture_coefficient_trap_cm3_ns": float,
        "trap_saturation_density_cm3": _float_or_none,
        "pump_power_mw": float,
        "carrier_density_per_mw_cm3": float,
        "t_max_ns": float,
        "n_points": int,
        "fit_window_start_ns": float,
        "fit_window_stop_ns": float,
    },
    "damage": {
        "damage_rate_per_proton_nm": float,
        "active_depth_nm": float,
        "carbon_areal_density_cm2": float,
        "formation_coefficient_cm2": float,
        "formation_enhancement_flux": float,
        "formation_enhancement_exponent": float,
        "destruction_coefficient_cm2": float,
        "destruction_activation_energy_ev": float,
        "destruction_suppression_flux": float,
        "temperature_k": float,
        "trap_formation_per_proton": _float_or_none,
        "dynamic_annealing_rate_s": float,
        "clustering_threshold_flux": float,
        "trap_clustering_exponent": float,
        "trap_lifetime_coupling_cm2_ns": float,
        "background_tau_nr_ns": float,
    },
    "schedule": {
        "file": str,
        "template": str,
        "fluences": str,
    },
    "output": {
        "directory": str,
    },
}


class RunConfig:
    """Validated config: typed values from the file over schema defaults."""

    def __init__(self, values, base_dir="."):
        self.values = values
        self.base_dir = base_dir

    def get(self, section, key, fallback=None):
        return self.values.get(section, {}).get(key, fallback)

    def has_section(self, section):
        return section in self.values

    def path(self, section, key):
        """Resolve a configured path relative to the config file."""
        raw = self.get(section, key)
        if raw is None:
            return None
        return raw if os.path.isabs(raw) else os.path.join(self.base_dir, raw)


def load_config(path=None) -> RunConfig:
    """Parse and validate an INI config; None means all defaults."""
    if path is None:
        return RunConfig({})
    if not os.path.exists(path):
        raise ValidationError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ValidationError(f"config parse error in {path}: {exc}")
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ValidationError(
                f"unknown config section [{section}] in {path}; known "
                f"sections: {', '.join(sorted(_SCHEMA))}")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ValidationError(
                    f"unknown config key [{section}] {key} in {path}; known "
                    f"keys: {', '.join(sorted(_SCHEMA[section]))}")
            caster = _SCHEMA[section][key]
            try:
                values[section][key] = caster(raw)
            except ValueError:
                raise ValidationError(
                    f"config key [{section}] {key} has invalid value {raw!r}")
    cfg = RunConfig(values, base_dir=os.path.dirname(os.path.abspath(path)))
    for section, key in (("response", "table"), ("schedule", "file"),
                         ("schedule", "template")):
        ref = cfg.path(section, key)
        if ref is not None and not os.path.exists(ref):
            raise ValidationError(
                f"config key [{section}] {key} points to a missing file: {ref}")
    return cfg


def config_help_text() -> str:
    lines = ["config file keys (INI sections):"]
    for section, keys in _SCHEMA.items():
        lines.append(f"  [{section}]")
        for key in keys:
            lines.append(f"    {key}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.10g}"


def write_atomic(path: str, text: str):
    """Write text to path via a temp file and rename, never partially."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) if isinstance(v, (int, float, np.floating,
                                                   np.integer)) else str(v)
                         for v in row])
    write_atomic(path, buf.getvalue())


def svg_line_plot(x, y, xlabel: str, ylabel: str) -> str:
    """Minimal self-contained SVG polyline plot."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    width, height = 800, 500
    ml, mr, mt, mb = 70, 20, 20, 50
    pw, ph = width - ml - mr, height - mt - mb
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(y.min()), float(y.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    px = ml + (x - x0) / (x1 - x0) * pw
    py = mt + (1.0 - (y - y0) / (y1 - y0)) * ph
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    ticks = []
    for i in range(6):
        fx = x0 + (x1 - x0) * i / 5
        cx = ml + pw * i / 5
        ticks.append(f'<line x1="{cx:.1f}" y1="{mt + ph}" x2="{cx:.1f}" '
                     f'y2="{mt + ph + 5}" stroke="black"/>')
        ticks.append(f'<text x="{cx:.1f}" y="{mt + ph + 18}" '
                     f'text-anchor="middle" font-size="11">{fx:.4g}</text>')
        fy = y0 + (y1 - y0) * i / 5
        cy = mt + ph - ph * i / 5
        ticks.append(f'<line x1="{ml - 5}" y1="{cy:.1f}" x2="{ml}" '
                     f'y2="{cy:.1f}" stroke="black"/>')
        ticks.append(f'<text x="{ml - 8}" y="{cy + 4:.1f}" '
                     f'text-anchor="end" font-size="11">{fy:.4g}</text>')
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
        f'stroke="black"/>\n'
        + "\n".join(ticks) + "\n"
        + f'<text x="{ml + pw / 2}" y="{height - 12}" text-anchor="middle" '
          f'font-size="13">{xlabel}</text>\n'
        f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {mt + ph / 2})">{ylabel}</text>\n'
        f'<polyline points="{pts}" fill="none" stroke="#1f6fb2" '
        f'stroke-width="1.5"/>\n</svg>\n')


def _write_fit_report(path, entries):
    """entries: list of (parameter, value, stderr)."""
    write_csv(path, ["parameter", "value", "stderr"], entries)


# ---------------------------------------------------------------------------
# builders from config
# ---------------------------------------------------------------------------

def _emitter_from(cfg: RunConfig) -> EmitterParams:
    return EmitterParams(
        zpl_wavelength_nm=cfg.get("emitter", "zpl_wavelength_nm",
                                  ZPL_WAVELENGTH_NM),
        homogeneous_fwhm_nm=cfg.get("emitter", "homogeneous_fwhm_nm", 0.073),
        radiative_lifetime_ns=cfg.get("emitter", "radiative_lifetime_ns", 45.0))


def _table_from(cfg: RunConfig):
    path = cfg.path("response", "table")
    if path is None:
        return default_table()
    return load_response_table(path)


def _elastic_from(cfg: RunConfig) -> ElasticParams:
    return ElasticParams(
        atomic_volume_nm3=cfg.get("elastic", "atomic_volume_nm3", 0.0200),
        core_cutoff_nm=cfg.get("elastic", "core_cutoff_nm", 0.25))


def _decay_params_from(cfg: RunConfig) -> DecayModelParams:
    kw = {}
    for key in ("tau_r_ns", "g_center_density_cm3",
                "capture_coefficient_g_cm3_ns", "trap_density_cm3",
                "capture_coefficient_trap_cm3_ns", "pump_power_mw",
                "carrier_density_per_mw_cm3"):
        val = cfg.get("kinetics", key)
        if val is not None:
            kw[key] = val
    if "kinetics" in cfg.values and "trap_saturation_density_cm3" in \
            cfg.values["kinetics"]:
        kw["trap_saturation_density_cm3"] = \
            cfg.values["kinetics"]["trap_saturation_density_cm3"]
    t_max = cfg.get("kinetics", "t_max_ns", 100.0)
    n_points = cfg.get("kinetics", "n_points", 4001)
    kw["time_grid_ns"] = np.linspace(0.0, t_max, n_points)
    return DecayModelParams(**kw)


def _damage_params_from(cfg: RunConfig) -> DamageParams:
    kw = {}
    for key in _SCHEMA["damage"]:
        if cfg.get("damage", key) is not None:
            kw[key] = cfg.values["damage"][key]
    return DamageParams(**kw)


def _read_schedule_rows(path):
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    rows = [r for r in rows if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ValidationError(f"schedule file {path} is empty")
    header = [c.strip() for c in rows[0]]
    if header[:3] != ["flux_cm2_s", "duration_s", "gap_s"] or \
            header[3:] not in ([], ["repeat"]):
        raise ValidationError(
            f"schedule file {path} must start with header "
            "flux_cm2_s,duration_s,gap_s with optional repeat column, "
            f"got {','.join(header)}")
    return [[c.strip() for c in r] for r in rows[1:]], len(header) == 4


def read_schedule(path) -> IrradiationSchedule:
    rows, has_repeat = _read_schedule_rows(path)
    segments = []
    for row in rows:
        flux, duration, gap = (float(row[0]), float(row[1]), float(row[2]))
        repeat = int(row[3]) if has_repeat and len(row) > 3 and row[3] else 1
        segments.extend([ScheduleSegment(flux, duration, gap)] * repeat)
    return IrradiationSchedule(tuple(segments))


def schedule_from_template(path, target_fluence_cm2: float) -> IrradiationSchedule:
    """Instantiate a schedule template at a target fluence.

    Placeholder cells: {duration} (duration = fluence share / flux),
    {flux} (flux = share / duration), or {pulses} in the repeat column
    (the row becomes a pulse train delivering the share). The target
    fluence minus any fixed rows is split equally across placeholder
    rows. A {duration} row with zero flux gets duration zero: it cannot
    deliver fluence.
    """
    rows, has_repeat = _read_schedule_rows(path)
    placeholder_rows = []
    fixed_fluence = 0.0
    for i, row in enumerate(rows):
        cells = row + [""] * (4 - len(row))
        if "{duration}" in cells or "{flux}" in cells or "{pulses}" in cells:
            placeholder_rows.append(i)
        else:
            repeat = int(cells[3]) if has_repeat and cells[3] else 1
            fixed_fluence += float(cells[0]) * float(cells[1]) * repeat
    if not placeholder_rows:
        raise ValidationError(
            f"schedule template {path} has no {{flux}}, {{duration}}, or "
            "{pulses} placeholder to absorb the target fluence")
    share = (target_fluence_cm2 - fixed_fluence) / len(placeholder_rows)
    if share < 0:
        raise ValidationError(
            f"fixed rows of {path} already exceed the target fluence "
            f"{target_fluence_cm2:g} cm^-2")
    segments = []
    for i, row in enumerate(rows):
        cells = row + [""] * (4 - len(row))
        if i not in placeholder_rows:
            repeat = int(cells[3]) if has_repeat and cells[3] else 1
            segments.extend([ScheduleSegment(float(cells[0]), float(cells[1]),
                                             float(cells[2]))] * repeat)
            continue
        gap = float(cells[2])
        if cells[3] == "{pulses}":
            flux, duration = float(cells[0]), float(cells[1])
            if share > 0:
                train = pulsed_schedule(share, flux, duration, duration + gap)
                segments.extend(train.segments)
            continue
        if "{duration}" in cells:
            flux = float(cells[0])
            duration = share / flux if flux > 0 else 0.0
            segments.append(ScheduleSegment(flux, duration, gap))
        else:
            duration = float(cells[1])
            flux = share / duration if duration > 0 else 0.0
            segments.append(ScheduleSegment(flux, duration, gap))
    return IrradiationSchedule(tuple(segments))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate_spectrum(args) -> int:
    cfg = load_config(args.config)
    emitter = _emitter_from(cfg)
    table = _table_from(cfg)
    mode = args.mode or cfg.get("sampler", "mode", "uniform")
    n = args.samples or cfg.get("sampler", "samples", 10000)
    low = cfg.get("sampler", "strain_low", -0.01)
    high = cfg.get("sampler", "strain_high", 0.01)

    if mode == "uniform":
        ens = sample_uniform(UniformSpec(low, high), n, args.seed, table)
    elif mode == "biased-z":
        spec = BiasedZSpec(low, high,
                           cfg.get("sampler", "xy_threshold", 0.001),
                           cfg.get("sampler", "keep_fraction", 0.1))
        ens = sample_biased_z(spec, n, args.seed, table)
    elif mode == "defect-field":
        if not cfg.has_section("elastic"):
            raise ValidationError(
                "sampler mode defect-field needs an [elastic] config "
                "section (atomic_volume_nm3, core_cutoff_nm)")
        elastic = _elastic_from(cfg)
        v_dens = cfg.get("sampler", "vacancy_density_cm3")
        i_dens = cfg.get("sampler", "interstitial_density_cm3")
        if v_dens is not None or i_dens is not None:
            spec = DefectDensitySpec(
                vacancy_density_cm3=v_dens or 0.0,
                interstitial_density_cm3=i_dens or 0.0,
                r_min_nm=cfg.get("sampler", "r_min_nm", 0.9),
                r_max_nm=cfg.get("sampler", "r_max_nm", 1.4))
        else:
            spec = SingleDefectSpec(
                kind=cfg.get("sampler", "defect_kind", "vacancy"),
                separation_nm=cfg.get("sampler", "separation_nm", 0.9))
        ens = sample_defect_field(spec, n, args.seed, table, elastic)
    else:
        raise ValidationError(
            f"sampler mode {mode!r} is not one of uniform, biased-z, "
            "defect-field")

    out = args.out or cfg.get("output", "directory", "out")
    grid, intensity = synthesize_spectrum(ens.shifts_mev, emitter)
    write_csv(os.path.join(out, "spectrum.csv"),
              ["wavelength_nm", "intensity"], zip(grid, intensity))
    edges, counts = histogram_shifts(
        ens.shifts_mev, cfg.get("sampler", "bin_width_mev", 0.25))
    centers = 0.5 * (edges[:-1] + edges[1:])
    write_csv(os.path.join(out, "histogram.csv"), ["shift_mev", "count"],
              zip(centers, counts))
    write_atomic(os.path.join(out, "spectrum.svg"),
                 svg_line_plot(grid, intensity, "wavelength (nm)",
                               "intensity (peak-normalized)"))
    if args.dump_samples:
        header = ["sample_id", "e_xx", "e_yy", "e_zz", "e_xy", "e_xz",
                  "e_yz", "shift_mev"]
        rows = ([i, *ens.strains[i], ens.shifts_mev[i]]
                for i in range(len(ens)))
        write_csv(os.path.join(out, "samples.csv"), header, rows)
    prov = ens.provenance
    print(f"{mode}: {prov.n_retained} samples "
          f"({prov.n_raw_draws} raw draws, "
          f"{prov.n_range_rejections} out of table range), "
          f"spectrum/histogram/svg written to {out}")
    return 0


def cmd_simulate_decay(args) -> int:
    cfg = load_config(args.config)
    params = _decay_params_from(cfg)
    trace = simulate_decay(params)
    out = args.out or cfg.get("output", "directory", "out")
    write_csv(os.path.join(out, "trace.csv"), ["time_ns", "counts"],
              zip(trace.time_ns, trace.intensity))
    write_atomic(os.path.join(out, "trace.svg"),
                 svg_line_plot(trace.time_ns, trace.intensity, "time (ns)",
                               "photon rate"))
    window = None
    start = cfg.get("kinetics", "fit_window_start_ns")
    stop = cfg.get("kinetics", "fit_window_stop_ns")
    if start is not None and stop is not None:
        window = (start, stop)
    fit = fit_single_exponential(trace.time_ns, trace.intensity,
                                 window_ns=window)
    tau_fit = fit.parameters["tau_ns"]
    lifetimes = decompose_lifetimes(min(tau_fit, params.tau_r_ns),
                                    params.tau_r_ns)
    entries = [
        ("amplitude", fit.parameters["amplitude"], fit.stderr["amplitude"]),
        ("tau_ns", tau_fit, fit.stderr["tau_ns"]),
        ("baseline", fit.parameters["baseline"], fit.stderr["baseline"]),
        ("tau_eff_ns", lifetimes.tau_eff_ns, 0.0),
        ("tau_nr_ns", lifetimes.tau_nr_ns, 0.0),
        ("qe", lifetimes.qe, 0.0),
        ("rise_time_ns", rise_time(trace), 0.0),
    ]
    _write_fit_report(os.path.join(out, "fit_report.csv"), entries)
    print(f"decay: tau_eff {lifetimes.tau_eff_ns:.3f} ns, "
          f"qe {lifetimes.qe:.3f}, outputs in {out}")
    return 0


def cmd_sweep_fluence(args) -> int:
    cfg = load_config(args.config)
    template = args.template or cfg.path("schedule", "template")
    if template is None:
        raise ValidationError(
            "sweep-fluence needs a schedule template "
            "(--template or [schedule] template)")
    if not os.path.exists(template):
        raise ValidationError(f"schedule template not found: {template}")
    if args.fluences:
        fluences = [float(tok) for tok in args.fluences.split(",") if tok]
    else:
        raw = cfg.get("schedule", "fluences",
                      "1e11,3.16e11,1e12,3.16e12,1e13,3.16e13,1e14")
        fluences = [float(tok) for tok in raw.split(",") if tok]
    if len(fluences) < 2:
        raise ValidationError("fluence sweep needs at least 2 points")
    params = _damage_params_from(cfg)

    rows = []
    for fluence in fluences:
        schedule = schedule_from_template(template, fluence)
        history = integrate_damage(schedule, params)
        n_g = history.n_g_cm2[-1]
        n_trap = history.n_trap_cm2[-1]
        tau_eff = history.tau_eff_ns[-1]
        lifetimes = decompose_lifetimes(tau_eff, params.tau_r_ns)
        intensity = pl_proxy(n_g, lifetimes)["integrated_intensity"]
        rows.append((fluence, n_g, n_trap, tau_eff, intensity))

    out = args.out or cfg.get("output", "directory", "out")
    write_csv(os.path.join(out, "sweep.csv"),
              ["fluence_cm2", "n_G", "n_trap", "tau_eff_ns", "intensity"],
              rows)
    try:
        fit = fit_power_law([r[0] for r in rows], [r[4] for r in rows])
    except InvalidArgumentError as exc:
        # data-driven failure of the scaling fit is a numerical error,
        # not a config problem
        raise FitError(f"power-law fit of the sweep failed: {exc}")
    _write_fit_report(os.path.join(out, "scaling_fit.csv"), [
        ("exponent", fit.parameters["exponent"], fit.stderr["exponent"]),
        ("prefactor", fit.parameters["prefactor"], fit.stderr["prefactor"]),
    ])
    write_atomic(os.path.join(out, "sweep.svg"),
                 svg_line_plot(np.log10([r[0] for r in rows]),
                               np.log10([max(r[4], 1e-300) for r in rows]),
                               "log10 fluence (cm^-2)", "log10 intensity"))
    print(f"sweep: {len(rows)} fluences, exponent "
          f"{fit.parameters['exponent']:.3f} "
          f"+- {fit.stderr['exponent']:.3f}, outputs in {out}")
    return 0


_FIT_HEADERS = {
    ("time_ns", "counts"): "exponential",
    ("wavelength_nm", "intensity"): "peaks",
    ("fluence_cm2", "intensity"): "power-law",
}


def cmd_fit(args) -> int:
    if not os.path.exists(args.input):
        raise ValidationError(f"input file not found: {args.input}")
    with open(args.input, newline="") as handle:
        reader = csv.reader(handle)
        rows = [r for r in reader if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ValidationError(f"{args.input} is empty")
    header = tuple(c.strip() for c in rows[0])
    model = args.model or _FIT_HEADERS.get(header)
    if model is None:
        known = " | ".join(",".join(h) for h in _FIT_HEADERS)
        raise ValidationError(
            f"unrecognized CSV header {','.join(header)!r}; expected one "
            f"of: {known}")
    if header not in _FIT_HEADERS:
        raise ValidationError(
            f"CSV header {','.join(header)!r} does not match the "
            f"documented input formats")
    try:
        data = np.array([[float(c) for c in row] for row in rows[1:]])
    except ValueError:
        raise ValidationError(f"non-numeric data row in {args.input}")
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValidationError(f"{args.input} must have exactly 2 columns")
    x, y = data[:, 0], data[:, 1]

    entries = []
    if model == "exponential":
        window = None
        if args.window:
            lo, _, hi = args.window.partition(":")
            window = (float(lo), float(hi))
        fit = fit_single_exponential(x, y, window_ns=window)
        entries = [(k, fit.parameters[k], fit.stderr[k])
                   for k in ("amplitude", "tau_ns", "baseline")]
        summary = f"tau = {fit.parameters['tau_ns']:.4g} ns"
    elif model == "peaks":
        peaks = fit_peaks(x, y, args.peaks)
        for i, peak in enumerate(peaks.peaks):
            entries.append((f"center_{i}_nm", peak.center_nm,
                            peaks.stderr.get(f"center_{i}", 0.0)))
            entries.append((f"fwhm_{i}_nm", peak.fwhm_nm,
                            peaks.stderr.get(f"fwhm_{i}", 0.0)))
            entries.append((f"amplitude_{i}", peak.amplitude,
                            peaks.stderr.get(f"amplitude_{i}", 0.0)))
        entries.append(("baseline", peaks.baseline,
                        peaks.stderr.get("baseline", 0.0)))
        summary = ", ".join(f"{p.center_nm:.4f} nm" for p in peaks.peaks)
    else:
        fit = fit_power_law(x, y)
        entries = [(k, fit.parameters[k], fit.stderr[k])
                   for k in ("exponent", "prefactor")]
        summary = f"exponent = {fit.parameters['exponent']:.4g}"

    report = args.report or "fit_report.csv"
    _write_fit_report(report, entries)
    print(f"fit ({model}): {summary}; report written to {report}")
    return 0


def cmd_enumerate_sites(args) -> int:
    spec = SupercellSpec(repeats=args.repeats)
    geom = build_supercell(spec)
    geom = place_gcenter(geom)
    rows = []
    kinds = (["vacancy", "interstitial-void"] if args.kind == "both"
             else [args.kind])
    for kind in kinds:
        cands = enumerate_candidates(geom, kind)
        for pos, sep in zip(cands.positions_frac, cands.separation_nm):
            rows.append((kind, pos[0], pos[1], pos[2], sep))
    out = args.out or "out"
    write_csv(os.path.join(out, "sites.csv"),
              ["kind", "frac_x", "frac_y", "frac_z", "separation_nm"], rows)
    if args.xyz:
        buf = io.StringIO()
        write_xyz(geom, buf)
        write_atomic(os.path.join(out, "supercell.xyz"), buf.getvalue())
    counts = {k: sum(1 for r in rows if r[0] == k) for k in kinds}
    print("sites: " + ", ".join(f"{v} {k}" for k, v in counts.items())
          + f", written to {out}")
    return 0


def cmd_convert(args) -> int:
    given = [name for name in ("wavelength_nm", "energy_ev", "shift_mev",
                               "shift_nm") if getattr(args, name) is not None]
    if len(given) != 1:
        raise ValidationError(
            "convert needs exactly one of --wavelength-nm, --energy-ev, "
            "--shift-mev, --shift-nm")
    ref = args.reference_nm
    if args.wavelength_nm is not None:
        print(f"energy_ev = {HC_EV_NM / args.wavelength_nm:.10g}")
    elif args.energy_ev is not None:
        if args.energy_ev <= 0:
            raise InvalidArgumentError("energy must be positive")
        print(f"wavelength_nm = {HC_EV_NM / args.energy_ev:.10g}")
    elif args.shift_mev is not None:
        dl = delta_lambda_from_delta_e(args.shift_mev, ref)
        print(f"shift_nm = {dl:.10g}")
    else:
        de = delta_e_from_delta_lambda(args.shift_nm, ref)
        print(f"shift_mev = {de:.10g}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="defect-spectra",
        description="Strain-broadened emission spectra, decay kinetics, "
                    "and fits for point-defect emitters.",
        epilog=config_help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate-spectrum",
                         help="sample a strain ensemble and synthesize the "
                              "inhomogeneous spectrum")
    sim.add_argument("--config", help="INI config file")
    sim.add_argument("--mode", choices=["uniform", "biased-z", "defect-field"])
    sim.add_argument("--samples", type=int)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--out", help="output directory")
    sim.add_argument("--dump-samples", action="store_true",
                     help="also write per-sample strains and shifts")
    sim.set_defaults(func=cmd_simulate_spectrum)

    dec = sub.add_parser("simulate-decay",
                         help="integrate the pump-decay model and fit the "
                              "effective lifetime")
    dec.add_argument("--config", help="INI config file")
    dec.add_argument("--seed", type=int, required=True,
                     help="recorded for reproducibility; the decay model "
                          "itself is deterministic")
    dec.add_argument("--out", help="output directory")
    dec.set_defaults(func=cmd_simulate_decay)

    swp = sub.add_parser("sweep-fluence",
                         help="run the damage model over a fluence sweep "
                              "and fit the intensity power law")
    swp.add_argument("--config", help="INI config file")
    swp.add_argument("--template", help="schedule template CSV")
    swp.add_argument("--fluences", help="comma-separated fluences (cm^-2)")
    swp.add_argument("--out", help="output directory")
    swp.set_defaults(func=cmd_sweep_fluence)

    fit = sub.add_parser("fit", help="fit a CSV data file")
    fit.add_argument("--input", required=True, help="input CSV")
    fit.add_argument("--model", choices=["exponential", "peaks", "power-law"],
                     help="fit model; inferred from the CSV header if omitted")
    fit.add_argument("--peaks", type=int, default=1,
                     help="number of Lorentzian peaks (peaks model)")
    fit.add_argument("--window", help="fit window start:stop in ns "
                                      "(exponential model)")
    fit.add_argument("--report", help="output report path")
    fit.set_defaults(func=cmd_fit)

    enum = sub.add_parser("enumerate-sites",
                          help="dump defect candidate sites around the "
                               "embedded emitter")
    enum.add_argument("--kind",
                      choices=["vacancy", "interstitial-void", "both"],
                      default="both")
    enum.add_argument("--repeats", type=int, default=3)
    enum.add_argument("--out", help="output directory")
    enum.add_argument("--xyz", action="store_true",
                      help="also write the supercell as XYZ")
    enum.set_defaults(func=cmd_enumerate_sites)

    conv = sub.add_parser("convert", help="energy/wavelength conversions")
    conv.add_argument("--wavelength-nm", type=float, dest="wavelength_nm")
    conv.add_argument("--energy-ev", type=float, dest="energy_ev")
    conv.add_argument("--shift-mev", type=float, dest="shift_mev")
    conv.add_argument("--shift-nm", type=float, dest="shift_nm")
    conv.add_argument("--reference-nm", type=float, dest="reference_nm",
                      default=ZPL_WAVELENGTH_NM,
                      help="reference line for shift conversions")
    conv.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FitError, IntegrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DefectSpectraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
