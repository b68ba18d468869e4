"""Dispatch validated experiment configs to the simulation and fitting modules."""

from __future__ import annotations

import contextlib
import math
import os
import warnings
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import constants as C
from . import dnp, fitting, pulses, relaxation, spectra
from .config import ExperimentConfig, resolve
from .results import ResultTable, atomic_write_texts, format_value
from .spin import SpinSpecies, SpinSystem, electron, nucleus
from .svg import PlotSpec, render_svg

OUTPUT_ENV = "HFQUBIT_OUT"
DEFAULT_OUTPUT_DIR = "hfqubit-out"
FIT_KINDS = ("fit_t1", "fit_arrhenius")


class RunError(RuntimeError):
    """A module rejected the configured values; the message starts with the key path."""


class RunOutput(NamedTuple):
    table: ResultTable
    files: list[Path]


@contextlib.contextmanager
def _at(path: str):
    try:
        yield
    except RunError:
        raise
    except (ValueError, ZeroDivisionError, FloatingPointError, np.linalg.LinAlgError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        raise RunError(f"{path}: {msg}") from exc


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT_DIR)


# ---------------------------------------------------------------------------
# builders from config mappings


def build_spin_system(body: dict) -> SpinSystem:
    species: list[SpinSpecies] = [electron(e["label"], e["g"]) for e in body["electrons"]]
    n_e = len(species)
    species += [nucleus(n["isotope"], n["label"]) for n in body["nuclei"]]
    couplings = []
    for i, c in enumerate(body["couplings"]):
        if c["electron"] >= n_e or c["nucleus"] >= len(body["nuclei"]):
            raise ValueError(f"couplings[{i}] references a missing electron or nucleus")
        couplings.append((c["electron"], n_e + c["nucleus"], c["a_hz"]))
    return SpinSystem(tuple(species), tuple(couplings), body["max_dim"])


def build_b1(body: dict, attenuation_db: float = 0.0) -> pulses.B1Distribution:
    kind = body["kind"]
    count = 1 if kind == "delta" else len(body["amplitudes_t"]) if kind == "empirical" else body["samples"]
    dist = pulses.B1Distribution(
        kind, body["mean_t"], body["sd_t"], body["low_t"], body["high_t"],
        tuple(body["amplitudes_t"]), tuple(body["weights"]), count,
    )
    return dist.scaled(10.0 ** (-attenuation_db / 20.0)) if attenuation_db else dist


def build_four_level(body: dict, temperature: float) -> dnp.FourLevelSystem:
    b0 = C.resonant_field(body["g"], body["nu_e_hz"])
    nu_n = C.isotope(body["isotope"]).gamma_hz_per_t * b0
    return dnp.FourLevelSystem(
        body["nu_e_hz"], nu_n, body["a_hz"], temperature, body["w_e_per_s"], body["w_n_per_s"],
        body["eta"], body["w_e_temp_power"], body["w_e_ref_temp_k"],
    )


def build_t1_model(body: dict) -> relaxation.T1Model:
    if body["delta_k"] is not None:
        delta = body["delta_k"]
    elif body["delta_cm"] is not None:
        delta = C.wavenumber_to_kelvin(body["delta_cm"])
    else:
        delta = 0.0
    if body["a_direct"] is not None:
        return relaxation.T1Model(body["a_direct"], body["n_exponent"], body["a_orbach_per_s"], delta, body["orbach_form"])
    return relaxation.T1Model.from_reference(
        body["rate_ref_per_s"], body["nu_ref_hz"], body["temp_ref_k"], body["n_exponent"],
        body["a_orbach_per_s"], delta, body["orbach_form"],
    )


def build_t2_model(body: dict) -> relaxation.T2Model:
    return relaxation.T2Model.calibrated(body["t2_floor_s"], body["t2_cal_s"], body["cal_nu_hz"], body["cal_temp_k"])


def build_center(body: dict) -> spectra.CenterDescriptor:
    return spectra.CenterDescriptor(
        body["label"] or f"g={body['g']}", body["g"],
        tuple((h["a_hz"], h["spin"]) for h in body["hyperfine"]),
        body["weight"], body["fwhm_t"], body["lorentz_fraction"], body["tentative"],
    )


def _temperatures(p: dict) -> np.ndarray:
    if p["spacing"] == "log":
        return np.geomspace(p["temp_min_k"], p["temp_max_k"], p["points"])
    return np.linspace(p["temp_min_k"], p["temp_max_k"], p["points"])


# ---------------------------------------------------------------------------
# one function per kind; each returns (columns, summary metadata)


def _spectrum(cfg: ExperimentConfig):
    p = cfg.params
    with _at("params.centers"):
        centers = [build_center(resolve("centers", c)) for c in p["centers"]]
    nu = p["nu_hz"]
    if p["field_min_t"] is None:
        lines = np.concatenate([spectra.center_lines(c, nu)[0] for c in centers])
        pad = 10.0 * max(c.linewidth for c in centers)
        lo, hi = lines.min() - pad, lines.max() + pad
    else:
        lo, hi = p["field_min_t"], p["field_max_t"]
    with _at("params"):
        spec = spectra.synthesize_epr_spectrum(centers, nu, np.linspace(lo, hi, p["points"]), p["derivative"])
    cols = {"field_t": spec.axis, "g_eff": spectra.effective_g(spec.axis, nu), "intensity": spec.intensity}
    meta = {f"centroid_t.{c.label}": spectra.centroid_field(c, nu) for c in centers}
    if spec.metadata["warnings"]:
        meta["warning"] = "; ".join(spec.metadata["warnings"])
    return cols, meta


def _endor(cfg: ExperimentConfig):
    p = cfg.params
    b0 = p["b0_t"] if p["b0_t"] is not None else C.resonant_field(p["g"], p["nu_hz"])
    with _at("params.nuclei"):
        body = resolve("endor_nuclei", p["nuclei"])
        nuclei = [
            spectra.EndorNucleus(n["label"] or n["isotope"], C.isotope(n["isotope"]).gamma_hz_per_t, n["a_hz"], n["weight"])
            for n in body["nuclei"]
        ]
    lw = p["linewidth_hz"]
    if p["freq_min_hz"] is None:
        lines = np.array([f for n in nuclei for f in spectra.endor_frequencies(n.gamma, b0, n.a)])
        lo, hi = max(lines.min() - 10 * lw, 0.0), lines.max() + 10 * lw
    else:
        lo, hi = p["freq_min_hz"], p["freq_max_hz"]
    with _at("params"):
        spec = spectra.synthesize_endor_spectrum(nuclei, b0, np.linspace(lo, hi, p["points"]), lw)
    meta = {"b0_t": b0}
    for n in nuclei:
        meta[f"larmor_hz.{n.label}"] = abs(n.gamma) * b0
    return {"freq_hz": spec.axis, "intensity": spec.intensity}, meta


def _rabi(cfg: ExperimentConfig, echo: bool):
    p = cfg.params
    with _at("params.system"):
        system = build_spin_system(resolve("spin_systems", p["system"]))
    with _at("params.b1"):
        dist = build_b1(resolve("b1_distributions", p["b1"]), p["attenuation_db"])
    e_idx = system.indices("electron")[0]
    g = system.species[e_idx].g_or_gamma
    b0 = p["b0_t"] if p["b0_t"] is not None else C.resonant_field(g, p["mw_freq_hz"])
    base = p["mw_freq_hz"] if p["mw_freq_hz"] is not None else C.electron_larmor_hz(g, b0)
    frame = base + p["detuning_hz"]
    tp = np.linspace(0.0, p["tp_max_s"], p["points"])
    with _at("params"):
        if echo:
            t2 = math.inf if p["t2_s"] is None else p["t2_s"]
            table = pulses.hahn_echo_rabi(system, b0, dist, tp, p["tau_s"], t2, frame, p["temperature_k"])
        else:
            det = pulses.Detection(p["detection"], e_idx)
            table = pulses.rabi_nutation(system, b0, dist, tp, det, frame, p["temperature_k"])
    sig = table["signal"]
    baseline = float(np.mean(sig))
    w1 = pulses.rabi_frequency(system.species[e_idx], dist.nominal())
    meta = {
        "b0_t": b0,
        "rabi_freq_hz": w1 / (2 * math.pi),
        "resolvable_extrema": int(pulses.resolvable_extrema(sig).size),
        "damping_time_s": pulses.damping_time(tp, sig, baseline),
    }
    return {"tp_s": tp, "signal": sig}, meta


def _t1_sweep(cfg: ExperimentConfig):
    p = cfg.params
    with _at("params.model"):
        model = build_t1_model(resolve("t1_models", p["model"]))
    nu, temp = np.meshgrid(np.asarray(p["nu_hz"]), _temperatures(p), indexing="ij")
    nu, temp = nu.ravel(), temp.ravel()
    with _at("params"):
        rate = np.asarray(relaxation.t1_rate(model, nu, temp))
    meta = {"a_direct": model.a_direct, "delta_orbach_k": model.delta_orbach}
    return {"nu_hz": nu, "temp_k": temp, "rate_per_s": rate, "t1_s": 1.0 / rate}, meta


def _t2_sweep(cfg: ExperimentConfig):
    p = cfg.params
    with _at("params.model"):
        model = build_t2_model(resolve("t2_models", p["model"]))
    nu, temp = np.meshgrid(np.asarray(p["nu_hz"]), _temperatures(p), indexing="ij")
    nu, temp = nu.ravel(), temp.ravel()
    with _at("params"):
        ff = np.asarray(relaxation.flip_flop_factor(nu, temp))
        t2 = np.asarray(relaxation.t2_time(model, nu, temp))
    meta = {"r_floor_per_s": model.r_floor, "c_flipflop_per_s": model.c_flipflop}
    return {"nu_hz": nu, "temp_k": temp, "flipflop_factor": ff, "t2_s": t2}, meta


def _dnp_pump(cfg: ExperimentConfig):
    p = cfg.params
    with _at("params.system"):
        sys = build_four_level(resolve("four_level_systems", p["system"]), p["temperature_k"])
    rate = p["saturation_rate_per_s"]
    meta = {}
    with _at("params"), warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        mw = dnp.epr_line(sys, p["line"], rate)
        if p["protocol"] == "overhauser":
            drives = [mw]
            traj = dnp.simulate_overhauser_pump(sys, mw, p["duration_s"], p["points"])
        else:
            rf = dnp.DriveSpec("endor", p["endor_ms"], rate)
            drives = [mw, rf]
            schedule = "cw" if p["protocol"] == "endor_cw" else "pulsed"
            traj = dnp.simulate_endor_assisted(sys, mw, rf, p["duration_s"], schedule, p["points"], p["cycle_time_s"])
        if p["protocol"] != "endor_pulsed":
            meta["p_nuclear_steady"] = float(dnp.nuclear_polarization(sys, dnp.dnp_steady_state(sys, drives)))
            meta["t90_s"] = dnp.time_to_fraction(sys, drives, 0.9)
    if caught:
        meta["warning"] = "; ".join(sorted({str(w.message) for w in caught}))
    meta["p_nuclear_final"] = traj.final
    meta["flip_flop_rate_per_s"] = sys.flip_flop_rate
    cols = {"t_s": traj.times, "p_nuclear": traj.p_nuclear, "p_electron": dnp.electron_polarization(sys, traj.populations)}
    return cols, meta


def _dnp_decay(cfg: ExperimentConfig):
    p = cfg.params
    temps = p["temperatures_k"]
    with _at("params.system"):
        sys = build_four_level(resolve("four_level_systems", p["system"]), temps[0])
    with _at("params.temperatures_k"):
        res = dnp.extract_t1n(sys, temps)
    cols = {
        "temp_k": res.temperatures,
        "t1n_s": res.t1n,
        "log_residual": res.residuals,
        "quality": np.array(["ok" if q else "poor_fit" for q in res.quality_ok], dtype=object),
    }
    meta = {
        "delta_e_k": res.delta_e,
        "delta_e_sigma_k": res.arrhenius.sigma("delta_e"),
        "prefactor_per_s": res.arrhenius.params["A"],
        "electron_zeeman_k": C.hz_to_kelvin(sys.nu_e),
    }
    return cols, meta


def _t1_dataset(cfg: ExperimentConfig) -> fitting.DataSet:
    data = cfg.params["data"]
    if data["synthetic"] is not None:
        s = data["synthetic"]
        with _at("params.data.synthetic.model"):
            model = build_t1_model(resolve("t1_models", s["model"]))
        temps = np.linspace(s["temp_min_k"], s["temp_max_k"], s["temp_points"])
        return fitting.synthetic_t1_data(model, s["nu_hz"], temps, s["rel_noise"], cfg.seed, s["trial"])
    with _at("params.data.csv"):
        table = ResultTable.read_csv(_data_path(cfg, data["csv"]))
        cols = {"nu_hz": table["nu_hz"], "temp_k": table["temp_k"]}
        if "rate_per_s" in table.columns:
            cols["value"] = table["rate_per_s"]
        elif "t1_s" in table.columns:
            cols["value"] = 1.0 / np.asarray(table["t1_s"], float)
        else:
            cols["value"] = table["value"]
        return fitting.DataSet(cols, provenance=str(data["csv"]))


def _data_path(cfg: ExperimentConfig, name: str) -> Path:
    path = Path(name)
    if not path.is_absolute() and cfg.base_dir is not None:
        path = cfg.base_dir / path
    return path


def _param_table(result: fitting.FitResult, extra: list[tuple[str, float]] = ()) -> dict:
    names = list(result.params) + [e[0] for e in extra]
    quality = "ok" if result.converged else "not_converged"
    return {
        "parameter": np.array(names, dtype=object),
        "value": np.array([result.params[n] for n in result.params] + [e[1] for e in extra], float),
        "sigma": np.array([result.sigma(n) for n in result.params] + [math.nan] * len(extra), float),
        "quality": np.array([quality] * len(names), dtype=object),
    }


def _fit_t1(cfg: ExperimentConfig):
    p = cfg.params
    data = _t1_dataset(cfg)
    with _at("params"):
        result = fitting.fit_t1_model(data, p["free"], p["fixed"])
        model = relaxation.T1Model(
            result["a_direct"], result["n_exponent"], result["a_orbach"], result["delta_orbach"]
        )
        extra = [
            (f"t1_s@{e['nu_hz']:g}Hz/{e['temp_k']:g}K", 1.0 / relaxation.t1_rate(model, e["nu_hz"], e["temp_k"]))
            for e in p["evaluate"]
        ]
    meta = {
        "converged": result.converged,
        "iterations": result.iterations,
        "residual_norm": result.residual_norm,
        "data_rows": len(data),
        "flags": ";".join(result.flags) or "none",
    }
    return _param_table(result, extra), meta


def _fit_arrhenius(cfg: ExperimentConfig):
    data = cfg.params["data"]
    if data["points"] is not None:
        temps = np.array([pt[0] for pt in data["points"]])
        taus = np.array([pt[1] for pt in data["points"]])
    elif data["synthetic"] is not None:
        s = data["synthetic"]
        temps = np.asarray(s["temps_k"], float)
        clean = s["t1n_ref_s"] * np.exp(s["delta_e_k"] * (1.0 / temps - 1.0 / s["temp_ref_k"]))
        taus = fitting.multiplicative_noise(clean, s["rel_noise"], fitting.seeded_rng(cfg.seed, s["trial"]))
    else:
        with _at("params.data.csv"):
            table = ResultTable.read_csv(_data_path(cfg, data["csv"]))
            temps, taus = np.asarray(table["temp_k"], float), np.asarray(table["t1n_s"], float)
    with _at("params.data"):
        if temps.size == 2:
            de = fitting.arrhenius_two_point(temps[0], taus[0], temps[1], taus[1])
            a = math.exp(de / temps[0]) / taus[0]
            result = fitting.FitResult({"A": a, "delta_e": de}, converged=True, message="two-point inversion")
            method = "two_point"
        else:
            result = fitting.fit_arrhenius(temps, taus)
            method = "regression"
    cols = _param_table(result)
    cols["parameter"] = np.array(["A_per_s", "delta_e_k"], dtype=object)
    return cols, {"method": method, "points": int(temps.size)}


KIND_RUNNERS = {
    "spectrum": _spectrum,
    "endor": _endor,
    "rabi": lambda cfg: _rabi(cfg, echo=False),
    "echo_rabi": lambda cfg: _rabi(cfg, echo=True),
    "t1_sweep": _t1_sweep,
    "t2_sweep": _t2_sweep,
    "dnp_pump": _dnp_pump,
    "dnp_decay": _dnp_decay,
    "fit_t1": _fit_t1,
    "fit_arrhenius": _fit_arrhenius,
}


def compute(config: ExperimentConfig) -> ResultTable:
    """Run the experiment in memory; a pure function of the config."""
    from . import __version__

    columns, summary = KIND_RUNNERS[config.kind](config)
    meta = {
        "config_hash": config.config_hash(),
        "kind": config.kind,
        "preset": config.preset or "none",
        "seed": str(config.seed),
        "version": __version__,
    }
    for key, value in summary.items():
        meta[key] = format_value(value)
    with _at("params"):
        return ResultTable(columns, meta)


def plot_spec(config: ExperimentConfig, table: ResultTable) -> PlotSpec:
    plot = config.output["plot"]
    if plot is None:
        numeric = [n for n in table.names if table[n].dtype.kind in "fiu"]
        if len(numeric) < 2:
            raise RunError("output.plot: table has no two numeric columns to plot by default")
        return PlotSpec(numeric[0], [numeric[-1]], title=config.name)
    return PlotSpec(plot["x"], [plot["y"]], plot["logx"], plot["logy"], plot["title"] or config.name)


def run(config: ExperimentConfig, out_dir: str | os.PathLike | None = None) -> RunOutput:
    """Compute and write the CSV (and SVG if requested); a failed run leaves earlier files untouched."""
    out_dir = Path(out_dir) if out_dir is not None else default_output_dir()
    table = compute(config)
    stem = config.output["csv"] or f"{config.name}.csv"
    csv_path = out_dir / stem
    targets = [csv_path]
    svg_text = None
    if config.output["svg"]:
        with _at("output.plot"):
            svg_text = render_svg(table, plot_spec(config, table))
        targets.append(csv_path.with_suffix(".svg"))
    texts = {csv_path: table.to_csv()}
    if svg_text is not None:
        texts[targets[1]] = svg_text
    written = atomic_write_texts(texts)
    return RunOutput(table, written)
