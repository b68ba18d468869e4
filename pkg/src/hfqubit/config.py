"""Experiment configuration: YAML documents validated against a key-by-key schema.

A config has a ``kind``, an optional experiment ``preset`` whose body it
overrides, a ``seed``, a kind-specific ``params`` block and an ``output``
block. Validation collects every violation (with its dotted key path) before
failing, and fills defaults so that ``parse_config(serialize_config(c)) == c``.
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import yaml

from . import constants as C
from . import presets

DEFAULT_SEED = 20240615
KINDS = (
    "spectrum", "endor", "rabi", "echo_rabi", "t1_sweep", "t2_sweep",
    "dnp_pump", "dnp_decay", "fit_t1", "fit_arrhenius",
)
T1_PARAM_NAMES = ("a_direct", "n_exponent", "a_orbach", "delta_orbach")


class ConfigError(ValueError):
    """One or more schema violations; ``errors`` lists them as 'path: message'."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


class _Issues:
    def __init__(self, strict: bool):
        self.strict = strict
        self.errors: list[str] = []
        self.warnings: list[str] = []

    def error(self, path: str, msg: str):
        self.errors.append(f"{path or '<root>'}: {msg}")

    def unknown(self, path: str):
        if self.strict:
            self.error(path, "unknown key")
        else:
            self.warnings.append(f"{path}: unknown key ignored")


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


# ---------------------------------------------------------------------------
# schema nodes; each returns the normalised value (or None after an error)


REQUIRED = object()


class Node:
    def check(self, value, path: str, issues: _Issues):
        raise NotImplementedError


@dataclass
class Num(Node):
    low: float | None = None
    high: float | None = None
    strict_low: bool = False
    integer: bool = False

    def check(self, value, path, issues):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            issues.error(path, f"expected a number, got {value!r}")
            return None
        if self.integer:
            if isinstance(value, float) and not value.is_integer():
                issues.error(path, f"expected an integer, got {value!r}")
                return None
            value = int(value)
        else:
            value = float(value)
        if not math.isfinite(value):
            issues.error(path, f"must be finite, got {value!r}")
            return None
        if self.low is not None:
            if self.strict_low and not value > self.low:
                issues.error(path, f"must be > {self.low:g}, got {value!r}")
                return None
            if not self.strict_low and value < self.low:
                issues.error(path, f"must be >= {self.low:g}, got {value!r}")
                return None
        if self.high is not None and value > self.high:
            issues.error(path, f"must be <= {self.high:g}, got {value!r}")
            return None
        return value


def Pos() -> Num:
    return Num(0.0, strict_low=True)


def NonNeg() -> Num:
    return Num(0.0)


def Count(low: int = 1) -> Num:
    return Num(low, integer=True)


@dataclass
class Bool(Node):
    def check(self, value, path, issues):
        if not isinstance(value, bool):
            issues.error(path, f"expected true or false, got {value!r}")
            return None
        return value


@dataclass
class Str(Node):
    choices: tuple | None = None

    def check(self, value, path, issues):
        if not isinstance(value, str):
            issues.error(path, f"expected text, got {value!r}")
            return None
        if self.choices is not None and value not in self.choices:
            issues.error(path, f"must be one of {list(self.choices)}, got {value!r}")
            return None
        return value


@dataclass
class Choice(Node):
    choices: tuple

    def check(self, value, path, issues):
        if isinstance(value, bool) or value not in self.choices:
            issues.error(path, f"must be one of {list(self.choices)}, got {value!r}")
            return None
        return value


@dataclass
class Optional(Node):
    inner: Node

    def check(self, value, path, issues):
        return None if value is None else self.inner.check(value, path, issues)


@dataclass
class ListOf(Node):
    item: Node
    min_len: int = 0

    def check(self, value, path, issues):
        if not isinstance(value, list):
            issues.error(path, f"expected a list, got {value!r}")
            return None
        if len(value) < self.min_len:
            issues.error(path, f"needs at least {self.min_len} entries, got {len(value)}")
            return None
        return [self.item.check(v, _join(path, i), issues) for i, v in enumerate(value)]


@dataclass
class Section(Node):
    fields: dict[str, tuple[Node, Any]]
    rule: Callable[[dict, str, _Issues], None] | None = None

    def check(self, value, path, issues):
        if not isinstance(value, dict):
            issues.error(path, f"expected a mapping, got {value!r}")
            return None
        n_before = len(issues.errors)
        out = {}
        for key in value:
            if key not in self.fields:
                issues.unknown(_join(path, key))
        for key, (node, default) in self.fields.items():
            sub = _join(path, key)
            if key in value:
                out[key] = node.check(value[key], sub, issues)
            elif default is REQUIRED:
                issues.error(sub, "missing required key")
            else:
                out[key] = copy.deepcopy(default)
        if self.rule is not None and len(issues.errors) == n_before:
            self.rule(out, path, issues)
        return out


@dataclass
class NameMap(Node):
    """Mapping of arbitrary names (validated by ``key``) to values of ``value``."""

    key: Node
    value: Node

    def check(self, value, path, issues):
        if not isinstance(value, dict):
            issues.error(path, f"expected a mapping, got {value!r}")
            return None
        return {k: self.value.check(v, _join(path, k), issues) for k, v in value.items()
                if self.key.check(k, _join(path, k), issues) is not None}


@dataclass
class Ref(Node):
    """Either the name of a material preset in ``table`` or an inline section."""

    table: str
    inline: Section

    def check(self, value, path, issues):
        if isinstance(value, str):
            if value not in presets.material_table(self.table):
                known = sorted(presets.material_table(self.table))
                issues.error(path, f"unknown {self.table} preset {value!r}; known: {known}")
                return None
            return value
        return self.inline.check(value, path, issues)


NOTE = (Optional(Str()), None)


def _exactly_one(keys: tuple[str, ...]):
    def rule(out, path, issues):
        given = [k for k in keys if out.get(k) is not None]
        if len(given) != 1:
            issues.error(path, f"give exactly one of {list(keys)}, got {given}")

    return rule


def _all_rules(*rules):
    def rule(out, path, issues):
        for r in rules:
            r(out, path, issues)

    return rule


# ---------------------------------------------------------------------------
# material sub-schemas


ISOTOPE = Str(tuple(C.ISOTOPES))

SPIN_SYSTEM = Section(
    {
        "note": NOTE,
        "electrons": (ListOf(Section({"label": (Str(), "e"), "g": (Pos(), REQUIRED)}), 1), REQUIRED),
        "nuclei": (ListOf(Section({"isotope": (ISOTOPE, REQUIRED), "label": (Optional(Str()), None)})), []),
        "couplings": (
            ListOf(Section({"electron": (Count(0), REQUIRED), "nucleus": (Count(0), REQUIRED), "a_hz": (NonNeg(), REQUIRED)})),
            [],
        ),
        "max_dim": (Count(1), 64),
    }
)

FOUR_LEVEL = Section(
    {
        "note": NOTE,
        "nu_e_hz": (Pos(), 240.0e9),
        "g": (Pos(), 1.9985),
        "isotope": (ISOTOPE, "31P"),
        "a_hz": (NonNeg(), 117.53e6),
        "w_e_per_s": (Pos(), 1.0e3),
        "w_n_per_s": (NonNeg(), 0.0),
        "w_e_temp_power": (Num(), 0.0),
        "w_e_ref_temp_k": (Pos(), 3.0),
        "eta": (Optional(NonNeg()), None),
    }
)


def _b1_rule(out, path, issues):
    kind = out["kind"]
    if kind == "uniform" and not out["low_t"] <= out["high_t"]:
        issues.error(_join(path, "high_t"), "must be >= low_t")
    if kind == "empirical":
        if not out["amplitudes_t"] or len(out["amplitudes_t"]) != len(out["weights"]):
            issues.error(_join(path, "weights"), "needs one weight per entry of amplitudes_t")


B1 = Section(
    {
        "note": NOTE,
        "kind": (Str(("delta", "uniform", "gaussian", "empirical")), REQUIRED),
        "mean_t": (NonNeg(), 0.0),
        "sd_t": (NonNeg(), 0.0),
        "low_t": (NonNeg(), 0.0),
        "high_t": (NonNeg(), 0.0),
        "amplitudes_t": (ListOf(NonNeg()), []),
        "weights": (ListOf(NonNeg()), []),
        "samples": (Count(1), 256),
    },
    rule=_b1_rule,
)

CENTER = Section(
    {
        "note": NOTE,
        "label": (Optional(Str()), None),
        "g": (Pos(), REQUIRED),
        "hyperfine": (ListOf(Section({"a_hz": (Num(), REQUIRED), "spin": (Choice((0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4.5)), REQUIRED)})), []),
        "weight": (NonNeg(), 1.0),
        "fwhm_t": (Pos(), REQUIRED),
        "lorentz_fraction": (Num(0.0, 1.0), 0.0),
        "tentative": (Bool(), False),
    }
)

ENDOR_NUCLEI = Section(
    {
        "note": NOTE,
        "nuclei": (
            ListOf(Section({"isotope": (ISOTOPE, REQUIRED), "a_hz": (NonNeg(), 0.0), "weight": (NonNeg(), 1.0), "label": (Optional(Str()), None)}), 1),
            REQUIRED,
        ),
    }
)

T1_MODEL = Section(
    {
        "note": NOTE,
        "a_direct": (Optional(NonNeg()), None),
        "rate_ref_per_s": (Optional(NonNeg()), None),
        "nu_ref_hz": (Optional(Pos()), None),
        "temp_ref_k": (Optional(Pos()), None),
        "n_exponent": (Num(0.0, 6.0), 4.0),
        "a_orbach_per_s": (NonNeg(), 0.0),
        "delta_k": (Optional(NonNeg()), None),
        "delta_cm": (Optional(NonNeg()), None),
        "orbach_form": (Str(("exponential", "bose")), "exponential"),
    },
    rule=_all_rules(
        _exactly_one(("a_direct", "rate_ref_per_s")),
        lambda out, path, issues: (
            out["rate_ref_per_s"] is not None and (out["nu_ref_hz"] is None or out["temp_ref_k"] is None)
            and issues.error(path, "rate_ref_per_s needs nu_ref_hz and temp_ref_k")
        ),
        lambda out, path, issues: (
            out["delta_k"] is not None and out["delta_cm"] is not None
            and issues.error(path, "give at most one of delta_k and delta_cm")
        ),
    ),
)

T2_MODEL = Section(
    {
        "note": NOTE,
        "t2_floor_s": (Pos(), REQUIRED),
        "t2_cal_s": (Pos(), REQUIRED),
        "cal_nu_hz": (Pos(), REQUIRED),
        "cal_temp_k": (Pos(), REQUIRED),
    }
)

MATERIAL_SCHEMAS = {
    "spin_systems": SPIN_SYSTEM,
    "four_level_systems": FOUR_LEVEL,
    "b1_distributions": B1,
    "centers": CENTER,
    "endor_nuclei": ENDOR_NUCLEI,
    "t1_models": T1_MODEL,
    "t2_models": T2_MODEL,
}


# ---------------------------------------------------------------------------
# kind-specific parameter blocks


def _temp_axis(default_points: int) -> dict:
    return {
        "temp_min_k": (Pos(), REQUIRED),
        "temp_max_k": (Pos(), REQUIRED),
        "points": (Count(2), default_points),
        "spacing": (Str(("linear", "log")), "log"),
    }


def _temp_order(out, path, issues):
    if out["temp_max_k"] < out["temp_min_k"]:
        issues.error(_join(path, "temp_max_k"), "must be >= temp_min_k")


def _rabi_fields(echo: bool) -> dict:
    fields = {
        "system": (Ref("spin_systems", SPIN_SYSTEM), REQUIRED),
        "b0_t": (Optional(Pos()), None),
        "mw_freq_hz": (Optional(Pos()), None),
        "detuning_hz": (Num(), 0.0),
        "b1": (Ref("b1_distributions", B1), REQUIRED),
        "attenuation_db": (NonNeg(), 0.0),
        "tp_max_s": (Pos(), REQUIRED),
        "points": (Count(2), 401),
        "temperature_k": (Pos(), 3.0),
    }
    if echo:
        fields["tau_s"] = (Pos(), REQUIRED)
        fields["t2_s"] = (Optional(Pos()), None)
    else:
        fields["detection"] = (Str(("x", "y", "z")), "z")
    return fields


def _field_or_freq(out, path, issues):
    if out["b0_t"] is None and out["mw_freq_hz"] is None:
        issues.error(path, "give b0_t, mw_freq_hz or both")


def _endor_rule(out, path, issues):
    if out["b0_t"] is None and (out["nu_hz"] is None or out["g"] is None):
        issues.error(path, "give b0_t, or nu_hz together with g")
    lo, hi = out["freq_min_hz"], out["freq_max_hz"]
    if (lo is None) != (hi is None):
        issues.error(path, "give both freq_min_hz and freq_max_hz or neither")
    elif lo is not None and not hi > lo:
        issues.error(_join(path, "freq_max_hz"), "must be > freq_min_hz")


def _spectrum_rule(out, path, issues):
    lo, hi = out["field_min_t"], out["field_max_t"]
    if (lo is None) != (hi is None):
        issues.error(path, "give both field_min_t and field_max_t or neither")
    elif lo is not None and not hi > lo:
        issues.error(_join(path, "field_max_t"), "must be > field_min_t")


def _pump_rule(out, path, issues):
    if out["protocol"] == "endor_pulsed" and out["cycle_time_s"] is None:
        issues.error(_join(path, "cycle_time_s"), "required for the endor_pulsed protocol")


SYNTHETIC_T1 = Section(
    {
        "model": (Ref("t1_models", T1_MODEL), REQUIRED),
        "nu_hz": (ListOf(Pos(), 1), REQUIRED),
        "temp_min_k": (Pos(), REQUIRED),
        "temp_max_k": (Pos(), REQUIRED),
        "temp_points": (Count(4), 8),
        "rel_noise": (NonNeg(), 0.05),
        "trial": (Count(0), 0),
    },
    rule=_temp_order,
)

SYNTHETIC_ARRHENIUS = Section(
    {
        "delta_e_k": (Pos(), REQUIRED),
        "t1n_ref_s": (Pos(), REQUIRED),
        "temp_ref_k": (Pos(), REQUIRED),
        "temps_k": (ListOf(Pos(), 2), REQUIRED),
        "rel_noise": (NonNeg(), 0.05),
        "trial": (Count(0), 0),
    }
)

PARAMS: dict[str, Section] = {
    "spectrum": Section(
        {
            "nu_hz": (Pos(), REQUIRED),
            "centers": (ListOf(Ref("centers", CENTER), 1), REQUIRED),
            "field_min_t": (Optional(Pos()), None),
            "field_max_t": (Optional(Pos()), None),
            "points": (Count(2), 2001),
            "derivative": (Bool(), False),
        },
        rule=_spectrum_rule,
    ),
    "endor": Section(
        {
            "b0_t": (Optional(Pos()), None),
            "nu_hz": (Optional(Pos()), None),
            "g": (Optional(Pos()), None),
            "nuclei": (Ref("endor_nuclei", ENDOR_NUCLEI), REQUIRED),
            "freq_min_hz": (Optional(NonNeg()), None),
            "freq_max_hz": (Optional(Pos()), None),
            "points": (Count(2), 4001),
            "linewidth_hz": (Pos(), REQUIRED),
        },
        rule=_endor_rule,
    ),
    "rabi": Section(_rabi_fields(False), rule=_field_or_freq),
    "echo_rabi": Section(_rabi_fields(True), rule=_field_or_freq),
    "t1_sweep": Section(
        {"model": (Ref("t1_models", T1_MODEL), REQUIRED), "nu_hz": (ListOf(Pos(), 1), REQUIRED), **_temp_axis(50)},
        rule=_temp_order,
    ),
    "t2_sweep": Section(
        {"model": (Ref("t2_models", T2_MODEL), REQUIRED), "nu_hz": (ListOf(Pos(), 1), REQUIRED), **_temp_axis(50)},
        rule=_temp_order,
    ),
    "dnp_pump": Section(
        {
            "system": (Ref("four_level_systems", FOUR_LEVEL), REQUIRED),
            "temperature_k": (Pos(), 3.0),
            "protocol": (Str(("overhauser", "endor_cw", "endor_pulsed")), "overhauser"),
            "line": (Str(("high", "low")), "high"),
            "endor_ms": (Choice((0.5, -0.5)), 0.5),
            "saturation_rate_per_s": (NonNeg(), 1.0e6),
            "duration_s": (Pos(), REQUIRED),
            "points": (Count(2), 201),
            "cycle_time_s": (Optional(Pos()), None),
        },
        rule=_pump_rule,
    ),
    "dnp_decay": Section(
        {
            "system": (Ref("four_level_systems", FOUR_LEVEL), REQUIRED),
            "temperatures_k": (ListOf(Pos(), 3), REQUIRED),
        }
    ),
    "fit_t1": Section(
        {
            "data": (
                Section(
                    {"csv": (Optional(Str()), None), "synthetic": (Optional(SYNTHETIC_T1), None)},
                    rule=_exactly_one(("csv", "synthetic")),
                ),
                REQUIRED,
            ),
            "free": (ListOf(Str(T1_PARAM_NAMES), 1), list(T1_PARAM_NAMES)),
            "fixed": (NameMap(Str(T1_PARAM_NAMES), NonNeg()), {}),
            "evaluate": (ListOf(Section({"nu_hz": (Pos(), REQUIRED), "temp_k": (Pos(), REQUIRED)})), []),
        }
    ),
    "fit_arrhenius": Section(
        {
            "data": (
                Section(
                    {
                        "csv": (Optional(Str()), None),
                        "points": (Optional(ListOf(ListOf(Pos(), 2), 2)), None),
                        "synthetic": (Optional(SYNTHETIC_ARRHENIUS), None),
                    },
                    rule=_exactly_one(("csv", "points", "synthetic")),
                ),
                REQUIRED,
            ),
        }
    ),
}

OUTPUT = Section(
    {
        "csv": (Optional(Str()), None),
        "svg": (Bool(), False),
        "plot": (
            Optional(
                Section(
                    {
                        "x": (Str(), REQUIRED),
                        "y": (Str(), REQUIRED),
                        "logx": (Bool(), False),
                        "logy": (Bool(), False),
                        "title": (Str(), ""),
                    }
                )
            ),
            None,
        ),
    }
)


# ---------------------------------------------------------------------------
# config object


@dataclass
class ExperimentConfig:
    kind: str
    params: dict
    output: dict
    seed: int = DEFAULT_SEED
    preset: str | None = None
    base_dir: Path | None = field(default=None, compare=False, repr=False)
    warnings: list[str] = field(default_factory=list, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "preset": self.preset,
            "seed": self.seed,
            "params": copy.deepcopy(self.params),
            "output": copy.deepcopy(self.output),
        }

    def config_hash(self) -> str:
        return hashlib.sha256(serialize_config(self).encode("utf-8")).hexdigest()[:16]

    @property
    def name(self) -> str:
        return self.preset or self.kind


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


TOP_KEYS = ("kind", "preset", "seed", "params", "output")


def validate(doc: Any, strict: bool = True, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a loaded document; raises ConfigError listing every violation."""
    issues = _Issues(strict)
    if not isinstance(doc, dict):
        raise ConfigError(["<root>: config must be a mapping"])
    preset = doc.get("preset")
    if preset is not None:
        if not isinstance(preset, str) or preset not in presets.experiment_names():
            raise ConfigError([f"preset: unknown experiment preset {preset!r}; see `presets list`"])
        doc = _merge(presets.experiment(preset), doc)
    for key in doc:
        if key not in TOP_KEYS:
            issues.unknown(str(key))
    kind = doc.get("kind")
    if kind is None:
        issues.error("kind", "missing required key")
    elif kind not in KINDS:
        issues.error("kind", f"must be one of {list(KINDS)}, got {kind!r}")
    seed = doc.get("seed", DEFAULT_SEED)
    seed = DEFAULT_SEED if seed is None else Num(0, integer=True).check(seed, "seed", issues)
    params = None
    if kind in KINDS:
        params = PARAMS[kind].check(doc.get("params", {}), "params", issues)
    output = OUTPUT.check(doc.get("output") or {}, "output", issues)
    if issues.errors:
        raise ConfigError(issues.errors)
    return ExperimentConfig(kind, params, output, seed, preset, base_dir, issues.warnings)


def parse_config(text: str, strict: bool = True, base_dir: Path | None = None) -> ExperimentConfig:
    try:
        doc = presets.load_yaml(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"<root>: not valid YAML ({exc})"]) from None
    return validate(doc if doc is not None else {}, strict, base_dir)


def load_config(path: str | Path, strict: bool = True) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), strict, path.parent)


def serialize_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=False)


def preset_config(name: str, seed: int | None = None) -> ExperimentConfig:
    doc: dict = {"preset": name}
    if seed is not None:
        doc["seed"] = seed
    return validate(doc)


def resolve(table: str, value) -> dict:
    """Material reference (preset name or inline mapping) as a defaults-filled mapping."""
    if isinstance(value, str):
        issues = _Issues(True)
        body = MATERIAL_SCHEMAS[table].check(presets.material_table(table)[value], f"{table}.{value}", issues)
        if issues.errors:
            raise ConfigError(issues.errors)
        if table == "centers" and body["label"] is None:
            body["label"] = value
        return body
    return copy.deepcopy(value)


def validate_materials() -> list[str]:
    """Schema check of every shipped material preset (used by tests)."""
    issues = _Issues(True)
    for table, schema in MATERIAL_SCHEMAS.items():
        for name, body in presets.material_table(table).items():
            schema.check(body, f"{table}.{name}", issues)
    return issues.errors
