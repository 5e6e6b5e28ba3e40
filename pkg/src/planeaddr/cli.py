"""Command-line front end.

Every command reads an optional TOML config (one table per command plus
``[run]``), rejects unknown keys, writes CSV/PGM artifacts into ``--out`` and
echoes the resolved configuration as ``config_resolved.toml``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python < 3.11
    import tomli as tomllib

from . import budget as bud
from . import crosstalk as xt
from . import hologram as holo
from . import inference as inf
from .core import ConfigurationError, DegenerateInputError, DomainError, NumericalFailure, TrapParams, TruncationWarning
from .fields import ArrayGeometry, FieldConfig, plane_sensitivity
from .lineshape import AmbiguousWidthError, SpectrumTrace, fwhm, synth_triple_lorentzian, write_trace_csv

log = logging.getLogger("planeaddr")

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_TRAP = {
    "trap_frequency_Hz": 28e3,
    "lamb_dicke": 0.4,
    "mean_phonon": 0.59,
    "fock_dim": 10,
    "depth_uK": 50.0,
}

SCHEMA = {
    "run": {"seed": 0, "samples": 1000, "threads": 1},
    "spectrum": {
        "gamma_Hz": 7.6e3,
        "rabi_Hz": 10e3,
        **_TRAP,
        "gradient_G_per_cm": 20.5,
        "bias_z_G": 0.9,
        "array_offset_um": [0.0, 0.0, 1200.0],
        "zeeman_per_mF_Hz_per_G": 2.5e6,
        "m_F": 1.5,
        "nx": 4,
        "ny": 4,
        "nz": 3,
        "dxy_um": 10.0,
        "dz_um": 30.0,
        "noise_fwhm_Hz": 0.0,
        "pitch_Hz": 100.0,
        "margin_Hz": 250e3,
        "carrier_fwhm_Hz": 53.1e3,
        "sideband_fwhm_Hz": 51.7e3,
        "sideband_height": "auto",
    },
    "budget": {
        "rabi_Hz": 10e3,
        **_TRAP,
        "power_broadening_carrier_Hz": 13.1e3,
        "power_broadening_sideband_Hz": 4.7e3,
        "field_inhomogeneity_Hz": 0.3e3,
        "coil_fluctuation_Hz": 51.4e3,
        "stray_field_Hz": 2.5e3,
        "laser_linewidth_Hz": 0.2e3,
        "light_shift_Hz": 0.3e3,
    },
    "crosstalk": {
        "rabi_Hz": 1e3,
        "gamma_Hz": 14.6e-3,
        **{**_TRAP, "mean_phonon": 0.2},
        "gradient_G_per_cm": 300.0,
        "bias_z_G": 500.0,
        "array_offset_um": [0.0, 0.0, 0.0],
        "zeeman_per_mF_Hz_per_G": 2.5e6,
        "m_F": 1.5,
        "nplanes": 11,
        "dxy_um": 4.0,
        "sizes": [4, 40],
        "noise_G": [100e-6, 1e-3],
        "dz_um": [round(1.0 + 0.2 * k, 6) for k in range(26)],
        "threshold": 1e-3,
        "spectrum_dz_um": 3.0,
        "spectrum_size": 40,
        "spectrum_noise_G": 100e-6,
        "pitch_Hz": 100.0,
    },
    "hologram": {
        "nx": 4,
        "ny": 4,
        "nz": 3,
        "dxy_um": 10.0,
        "dz_um": 30.0,
        "sites_csv": "",
        "magnification": 5.0 / 3.0,
        "focal_length_mm": 20.0,
        "wavelength_nm": 532.0,
        "pitch_um": 12.5,
        "pixels": 1024,
        "iterations": 0,
        "gamma": 0.5,
        "tolerance_um": 1.0,
        "write_csv": True,
    },
    "fit": {"model": "shelved_rabi", "data": "", "P_s": 0.744, "P_r": 0.982, "rabi_guess_Hz": 0.0},
}


def _type_ok(default, value):
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, list):
        return isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    if default == "auto":
        return value == "auto" or (isinstance(value, (int, float)) and not isinstance(value, bool))
    return isinstance(value, str)


def load_config(path, command: str) -> dict:
    """Defaults for ``command`` and ``run`` overlaid with the file; unknown keys are errors."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    cfg = {"run": copy.deepcopy(SCHEMA["run"]), command: copy.deepcopy(SCHEMA[command])}
    for section, table in raw.items():
        if section not in SCHEMA:
            raise ConfigurationError(f"unknown config section [{section}]")
        if not isinstance(table, dict):
            raise ConfigurationError(f"[{section}] must be a table")
        if section not in cfg:
            continue  # other commands' tables may share the file
        for key, value in table.items():
            if key not in SCHEMA[section]:
                raise ConfigurationError(f"unknown key {section}.{key}")
            default = SCHEMA[section][key]
            if not _type_ok(default, value):
                raise ConfigurationError(f"{section}.{key}: expected {type(default).__name__}, got {value!r}")
            cfg[section][key] = float(value) if isinstance(default, float) else value
    return cfg


def _trap(c) -> TrapParams:
    return TrapParams(c["trap_frequency_Hz"], c["lamb_dicke"], c["mean_phonon"], c["fock_dim"], c["depth_uK"])


def _field(c) -> FieldConfig:
    return FieldConfig(c["bias_z_G"], c["gradient_G_per_cm"], tuple(c["array_offset_um"]), c["zeeman_per_mF_Hz_per_G"])


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return repr(float(x))


def cmd_spectrum(cfg, out: Path):
    c = cfg["spectrum"]
    trap = _trap(c)
    geom = ArrayGeometry.cuboid(c["nx"], c["ny"], c["nz"], c["dxy_um"], c["dz_um"])
    field = _field(c)
    noise_G = c["noise_fwhm_Hz"] / (abs(c["m_F"]) * field.zeeman_per_mF)
    sc = xt.AddressingScenario(geom, field, noise_G=noise_G, rabi=c["rabi_Hz"], gamma=c["gamma_Hz"], trap=trap, m_F=c["m_F"])
    shifts = xt.plane_shifts(sc)
    centres = [float(shifts[geom.plane_indices(p)].mean()) for p in range(geom.n_planes)]
    lo = min(centres) - c["margin_Hz"]
    hi = max(centres) + c["margin_Hz"]
    pitch = c["pitch_Hz"]
    grid = np.arange(np.floor(lo / pitch), np.ceil(hi / pitch) + 1) * pitch
    traces = xt.plane_spectra(sc, grid)
    summary = []
    for p, (tr, f0) in enumerate(zip(traces, centres)):
        write_trace_csv(tr, out / f"spectrum_plane{p}.csv")
        window = np.abs(grid - f0) <= c["margin_Hz"]
        try:
            width = fwhm(SpectrumTrace(grid[window], tr.values[window]))
        except AmbiguousWidthError as exc:
            width = exc.candidates[0] if exc.candidates else float("nan")
        summary.append([p, _fmt(f0), _fmt(width)])
    _write_rows(out / "spectrum_summary.csv", ["plane", "carrier_center_Hz", "fwhm_Hz"], summary)
    height = None if c["sideband_height"] == "auto" else float(c["sideband_height"])
    span = 3 * max(c["carrier_fwhm_Hz"], c["sideband_fwhm_Hz"]) + trap.trap_frequency
    sgrid = np.arange(-np.ceil(span / pitch), np.ceil(span / pitch) + 1) * pitch
    synth = synth_triple_lorentzian(c["carrier_fwhm_Hz"], c["sideband_fwhm_Hz"], trap.trap_frequency, height, grid=sgrid, trap=trap)
    write_trace_csv(synth, out / "spectrum_synth.csv")
    sens = plane_sensitivity(field.gradient, c["m_F"], field)
    _write_rows(out / "spectrum_synth_summary.csv", ["quantity", "value"], [
        ["synth_total_fwhm_Hz", _fmt(fwhm(synth))],
        ["plane_sensitivity_Hz_per_um", _fmt(sens)],
    ])
    log.info("spectrum: %d planes, synthesized FWHM %.1f kHz", geom.n_planes, fwhm(synth) / 1e3)


def cmd_budget(cfg, out: Path):
    c = cfg["budget"]
    run = cfg["run"]
    rows = [
        ("Power broadening", c["power_broadening_carrier_Hz"], c["power_broadening_sideband_Hz"], False),
        ("Inhomogeneity of magnetic field", c["field_inhomogeneity_Hz"], c["field_inhomogeneity_Hz"], True),
        ("Magnetic fluctuation by gradient coil", c["coil_fluctuation_Hz"], c["coil_fluctuation_Hz"], True),
        ("Stray magnetic field", c["stray_field_Hz"], c["stray_field_Hz"], True),
        ("Laser linewidth", c["laser_linewidth_Hz"], c["laser_linewidth_Hz"], True),
        ("Differential light shift", c["light_shift_Hz"], c["light_shift_Hz"], True),
    ]
    budget = bud.NoiseBudget(tuple(bud.BudgetComponent(*r) for r in rows))
    table = bud.budget_table(budget, _trap(c), c["rabi_Hz"], run["samples"], run["seed"], run["threads"])
    bud.write_budget_csv(table, out / "budget.csv")
    _write_rows(out / "budget_totals.csv", ["kind", "quadrature_total_kHz"], [
        ["carrier", f"{bud.quadrature_total(budget, 'carrier') / 1e3:.4f}"],
        ["sideband", f"{bud.quadrature_total(budget, 'sideband') / 1e3:.4f}"],
    ])
    log.info("budget: total infidelity %.2f%%", 100 * table[-1].infidelity)


def _xt_scenario(c, nxy, dz, noise):
    geom = ArrayGeometry.cuboid(nxy, nxy, c["nplanes"], c["dxy_um"], dz)
    return xt.AddressingScenario(geom, _field(c), noise_G=noise, rabi=c["rabi_Hz"], gamma=c["gamma_Hz"], trap=_trap(c), m_F=c["m_F"])


def cmd_crosstalk(cfg, out: Path):
    c = cfg["crosstalk"]
    threads = cfg["run"]["threads"]
    dz = [float(v) for v in c["dz_um"]]
    sweep = []
    crossings = []
    for nxy in c["sizes"]:
        base = _xt_scenario(c, int(nxy), dz[0], 0.0)
        for noise in c["noise_G"]:
            rows = xt.distance_sweep(base, dz, [float(noise)], [(int(nxy), int(nxy))], c["nplanes"], c["dxy_um"], threads)
            sweep.extend(rows)
            cross = xt.threshold_crossing(dz, [r.total for r in rows], c["threshold"])
            crossings.append([int(nxy), _fmt(noise), "" if cross is None else _fmt(cross)])
    xt.write_sweep_csv(sweep, out / "crosstalk_sweep.csv")
    _write_rows(out / "crosstalk_crossing.csv", ["nxy", "noise_G", "dz_at_threshold_um"], crossings)
    sc = _xt_scenario(c, int(c["spectrum_size"]), c["spectrum_dz_um"], c["spectrum_noise_G"])
    res = xt.crosstalk_error(sc, workers=threads)
    _write_rows(out / "crosstalk_planes.csv", ["plane", "average", "worst_site", "site_sum"], [
        [p, _fmt(a), _fmt(w), _fmt(s)] for p, (a, w, s) in enumerate(zip(res.per_plane, res.worst_site, res.site_sum))
    ])
    shifts = xt.plane_shifts(sc)
    centres = [shifts[sc.geometry.plane_indices(p)].mean() for p in range(sc.geometry.n_planes)]
    pitch = c["pitch_Hz"]
    margin = max(abs(centres[1] - centres[0]) if len(centres) > 1 else 0.0, 100e3)
    grid = np.arange(np.floor((min(centres) - margin) / pitch), np.ceil((max(centres) + margin) / pitch) + 1) * pitch
    for p, tr in enumerate(xt.plane_spectra(sc, grid)):
        write_trace_csv(tr, out / f"crosstalk_spectrum_plane{p}.csv")
    log.info("crosstalk: total %.3g at dz=%.2f um", res.total, c["spectrum_dz_um"])


def cmd_hologram(cfg, out: Path):
    c = cfg["hologram"]
    seed = cfg["run"]["seed"]
    if c["sites_csv"]:
        sites = ArrayGeometry.from_csv(c["sites_csv"]).sites
    else:
        sites = ArrayGeometry.cuboid(c["nx"], c["ny"], c["nz"], c["dxy_um"], c["dz_um"]).sites
    optics = holo.OpticsParams(c["magnification"], c["focal_length_mm"], c["wavelength_nm"])
    grid = holo.SlmGrid(c["pitch_um"], c["pixels"], c["pixels"])
    mask, weights, history = holo.homogenize_loop(sites, grid, optics, c["iterations"], c["gamma"], seed)
    holo.write_mask_pgm(mask, out / "mask.pgm")
    if c["write_csv"]:
        holo.write_mask_csv(mask, out / "mask.csv")
    rows = []
    for k, z in enumerate(np.unique(sites[:, 2])):
        plane = holo.propagate(mask, z, optics)
        expected = sites[sites[:, 2] == z]
        rep = holo.verify_spots(plane, expected, c["tolerance_um"])
        holo.write_spot_csv(rep, expected, out / f"spots_plane{k}.csv")
        holo.write_intensity_pgm(plane, out / f"intensity_plane{k}.pgm")
        rows.append([k, _fmt(z), len(expected), rep.n_found, _fmt(rep.uniformity)])
    _write_rows(out / "hologram_report.csv", ["plane", "z_um", "expected", "found", "uniformity"], rows)
    _write_rows(out / "hologram_homogenization.csv", ["iteration", "uniformity"], [[i, _fmt(u)] for i, u in enumerate(history)])
    missing = sum(r[2] - r[3] for r in rows)
    log.info("hologram: %d sites, %d missing", len(sites), missing)


def cmd_fit(cfg, out: Path):
    c = cfg["fit"]
    if not c["data"]:
        raise ConfigurationError("fit needs a data file (--data or fit.data)")
    x, y, sigma = inf.read_xy_csv(c["data"])
    if c["model"] == "shelved_rabi":
        guess = c["rabi_guess_Hz"] or None
        res = inf.fit_shelved_rabi(x, y, sigma, P_s=c["P_s"], P_r=c["P_r"], rabi_guess=guess)
        p = res.params
        rows = [
            ("P_exc", p.P_exc, res.errors["P_exc"]),
            ("rabi_Hz", p.rabi, res.errors["rabi"]),
            ("phase_rad", p.phase, res.errors["phase"]),
            ("chi2", res.chi2, 0.0),
        ]
        text = [f"P_exc = {p.P_exc:.6f} +/- {res.errors['P_exc']:.6f}", f"rabi = {p.rabi:.6g} Hz +/- {res.errors['rabi']:.3g}"]
        if res.rabi_unconstrained:
            text.append("warning: Rabi frequency is not constrained by the data")
    elif c["model"] == "rb":
        res = inf.rb_decay_fit(x, y, sigma)
        rows = [("p", res.p, res.p_error), ("A0", res.A0, res.A0_error), ("fidelity", res.fidelity, res.fidelity_error)]
        text = [f"average fidelity = {res.fidelity:.6f} +/- {res.fidelity_error:.6f}"]
    else:
        raise ConfigurationError(f"fit.model must be 'shelved_rabi' or 'rb', got {c['model']!r}")
    inf.write_fit_csv(rows, out / "fit.csv")
    (out / "fit_summary.txt").write_text("\n".join(text) + "\n", encoding="utf-8")
    log.info("fit: %s", text[0])


COMMANDS = {
    "spectrum": cmd_spectrum,
    "budget": cmd_budget,
    "crosstalk": cmd_crosstalk,
    "hologram": cmd_hologram,
    "fit": cmd_fit,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planeaddr", description="Plane-selective addressing simulations")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="TOML configuration file")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "fit":
            p.add_argument("--data", type=Path, default=None, help="CSV with t_or_depth,value,sigma")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.command)
        for key in ("seed", "samples", "threads"):
            val = getattr(args, key)
            if val is not None:
                cfg["run"][key] = val
        if cfg["run"]["samples"] < 1 or cfg["run"]["threads"] < 1 or cfg["run"]["seed"] < 0:
            raise ConfigurationError("samples and threads must be >= 1, seed >= 0")
        if args.command == "fit" and args.data is not None:
            cfg["fit"]["data"] = str(args.data)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("always", TruncationWarning)
            COMMANDS[args.command](cfg, out)
        with (out / "config_resolved.toml").open("wb") as fh:
            tomli_w.dump(cfg, fh)
    except (ConfigurationError, DomainError, DegenerateInputError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, inf.FitFailure, AmbiguousWidthError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
