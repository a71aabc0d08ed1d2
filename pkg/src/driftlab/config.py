"""Experiment configuration.

The on-disk format is deliberately minimal and diffable: UTF-8 text, one
``key = value`` pair per line, grouped under ``[section]`` headers, with
``#`` starting a comment (full-line or trailing).  Booleans are written
``true``/``false`` and lists are comma-separated.  Every key has a default,
so the empty file is a valid configuration; unknown sections or keys are
rejected with the offending line number so typos cannot silently revert a
setting to its default.

Reproducibility: each configuration carries a single 64-bit ``seed``.
Individual runs inside a sweep draw from counter-based random streams
(:func:`run_rng`), so any run can be reproduced in isolation and the
streams are independent of scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .models import MODEL_IDS, get_model

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "dump_config",
    "apply_overrides",
    "run_rng",
]

EXPERIMENTS = ("simulate", "derive", "validate", "sweep", "spectra")
LEVELS = ("physical", "modulation")
CHARTS = ("none", "K1", "K2", "K3")
SCHEMES = ("auto", "ETD-RK4", "IMEX-BDF2")


class ConfigError(ValueError):
    """A configuration file or override could not be accepted."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one experiment run.

    Zeros in the grid/solver fields mean "use the model's default"; the
    dispatch layer resolves them just before running.
    """

    # [run]
    experiment: str = "simulate"
    model: str = "m1"
    level: str = "physical"
    out: str = "runs"
    seed: int = 0
    workers: int = 0  # 0 -> one worker per logical core

    # [model] -- numeric parameter overrides, validated against the model
    model_params: dict = field(default_factory=dict)

    # [grid]
    grid_n_points: int = 0
    grid_length: float = 0.0
    grid_dimension: int = 0
    grid_n_y: int = 0

    # [solver]
    dt: float = 0.0
    t_end: float = 10.0
    record_stride: int = 10
    scheme: str = "auto"
    mu0: float = -0.05
    eps: float = 1e-3
    ic_amplitude: float = 1e-3
    ic_modes: int = 4

    # [chart] -- initial chart point for modulation-level runs
    chart: str = "none"
    chart_r: float = 0.1
    chart_slow: float = 0.1
    chart_beta: int = 0  # 0 -> the model's own temporal weight

    # [sweep]
    deltas: tuple = (0.2, 0.1, 0.05)
    sweep_eps: tuple = (1e-3, 1e-4)

    # [spectra]
    spectra_mu: float = 0.0
    xi_min: float = 0.0
    xi_max: float = 2.0
    samples: int = 201

    # [validate]
    threshold: float = 0.0  # 0 -> the model's default take-off threshold
    delay_mu0: float = -0.05
    delay_amplitude: float = 1e-6
    residual_fit: bool = False
    delay: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}"
            )
        if self.model not in MODEL_IDS:
            raise ConfigError(f"model must be one of {MODEL_IDS}, got {self.model!r}")
        if self.level not in LEVELS:
            raise ConfigError(f"level must be one of {LEVELS}, got {self.level!r}")
        if self.chart not in CHARTS:
            raise ConfigError(f"chart must be one of {CHARTS}, got {self.chart!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")
        if self.workers < 0:
            raise ConfigError(f"workers must be nonnegative, got {self.workers}")
        if self.samples < 2:
            raise ConfigError(f"samples must be at least 2, got {self.samples}")
        if self.record_stride < 1:
            raise ConfigError(
                f"record_stride must be positive, got {self.record_stride}"
            )
        if self.model_params:
            try:
                get_model(self.model, **self.model_params)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# schema: (section, key) -> (field name, value kind)
# --------------------------------------------------------------------------

_SCHEMA = {
    ("run", "experiment"): ("experiment", "choice:" + "|".join(EXPERIMENTS)),
    ("run", "model"): ("model", "choice:" + "|".join(MODEL_IDS)),
    ("run", "level"): ("level", "choice:" + "|".join(LEVELS)),
    ("run", "out"): ("out", "str"),
    ("run", "seed"): ("seed", "int"),
    ("run", "workers"): ("workers", "int"),
    ("grid", "n_points"): ("grid_n_points", "int"),
    ("grid", "length"): ("grid_length", "float"),
    ("grid", "dimension"): ("grid_dimension", "int"),
    ("grid", "n_y"): ("grid_n_y", "int"),
    ("solver", "dt"): ("dt", "float"),
    ("solver", "t_end"): ("t_end", "float"),
    ("solver", "record_stride"): ("record_stride", "int"),
    ("solver", "scheme"): ("scheme", "choice:" + "|".join(SCHEMES)),
    ("solver", "mu0"): ("mu0", "float"),
    ("solver", "eps"): ("eps", "float"),
    ("solver", "ic_amplitude"): ("ic_amplitude", "float"),
    ("solver", "ic_modes"): ("ic_modes", "int"),
    ("chart", "chart"): ("chart", "choice:" + "|".join(CHARTS)),
    ("chart", "r"): ("chart_r", "float"),
    ("chart", "slow"): ("chart_slow", "float"),
    ("chart", "beta"): ("chart_beta", "int"),
    ("sweep", "deltas"): ("deltas", "float_list"),
    ("sweep", "eps"): ("sweep_eps", "float_list"),
    ("spectra", "mu"): ("spectra_mu", "float"),
    ("spectra", "xi_min"): ("xi_min", "float"),
    ("spectra", "xi_max"): ("xi_max", "float"),
    ("spectra", "samples"): ("samples", "int"),
    ("validate", "threshold"): ("threshold", "float"),
    ("validate", "mu0"): ("delay_mu0", "float"),
    ("validate", "amplitude"): ("delay_amplitude", "float"),
    ("validate", "residual_fit"): ("residual_fit", "bool"),
    ("validate", "delay"): ("delay", "bool"),
}

_SECTIONS = ("run", "model", "grid", "solver", "chart", "sweep", "spectra", "validate")


def _convert(kind: str, text: str, where: str):
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() == "true":
                return True
            if text.lower() == "false":
                return False
            raise ValueError(f"expected true or false, got {text!r}")
        if kind == "float_list":
            items = [p.strip() for p in text.split(",")] if text else []
            if any(not p for p in items):
                raise ValueError(f"empty element in list {text!r}")
            return tuple(float(p) for p in items)
        if kind.startswith("choice:"):
            choices = kind.split(":", 1)[1].split("|")
            if text not in choices:
                raise ValueError(
                    f"expected one of {', '.join(choices)}, got {text!r}"
                )
            return text
        return text
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(text: str, *, source: str = "<config>") -> ExperimentConfig:
    """Parse configuration text; all errors carry ``source`` and a line number."""
    section = None
    seen: dict = {}
    values: dict = {}
    model_params: dict = {}
    model_value = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}, line {lineno}"
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(
                    f"{where}: unknown section [{section}] "
                    f"(known: {', '.join(_SECTIONS)})"
                )
            continue
        if "=" not in line:
            raise ConfigError(
                f"{where}: expected 'key = value' or '[section]', got {line!r}"
            )
        if section is None:
            raise ConfigError(f"{where}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if (section, key) in seen:
            raise ConfigError(
                f"{where}: duplicate key {key!r} in [{section}] "
                f"(first set on line {seen[(section, key)]})"
            )
        seen[(section, key)] = lineno
        if section == "model":
            model_params[key] = _convert("float", value, where)
            continue
        try:
            field_name, kind = _SCHEMA[(section, key)]
        except KeyError:
            known = sorted(k for (s, k) in _SCHEMA if s == section)
            raise ConfigError(
                f"{where}: unknown key {key!r} in [{section}] "
                f"(known: {', '.join(known)})"
            ) from None
        values[field_name] = _convert(kind, value, where)
        if field_name == "model":
            model_value = value

    if model_params:
        values["model_params"] = model_params
        # locate the model section for parameter-validation error context
        model_id = model_value or ExperimentConfig().model
        try:
            get_model(model_id, **model_params)
        except ValueError as exc:
            raise ConfigError(f"{source}, section [model]: {exc}") from exc
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def _format_value(kind: str, value) -> str:
    if kind == "float":
        return "%.17g" % value
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float_list":
        return ",".join("%.17g" % v for v in value)
    return str(value)


def dump_config(config: ExperimentConfig) -> str:
    """Canonical text for ``config``; parsing it reproduces ``config``."""
    by_section: dict = {s: [] for s in _SECTIONS}
    for (section, key), (field_name, kind) in _SCHEMA.items():
        value = getattr(config, field_name)
        by_section[section].append(f"{key} = {_format_value(kind, value)}")
    for name, value in sorted(config.model_params.items()):
        by_section["model"].append(f"{name} = {_format_value('float', value)}")
    blocks = []
    for section in _SECTIONS:
        lines = by_section[section]
        if not lines:
            continue
        blocks.append("\n".join([f"[{section}]"] + lines))
    return "\n\n".join(blocks) + "\n"


def apply_overrides(config: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply ``{"section.key": "text value"}`` overrides (CLI flags)."""
    updates: dict = {}
    params = dict(config.model_params)
    touched_params = False
    for dotted, text in overrides.items():
        section, _, key = dotted.partition(".")
        where = f"override {dotted}"
        if section == "model":
            params[key] = _convert("float", str(text), where)
            touched_params = True
            continue
        try:
            field_name, kind = _SCHEMA[(section, key)]
        except KeyError:
            raise ConfigError(f"{where}: unknown configuration key") from None
        updates[field_name] = _convert(kind, str(text), where)
    if touched_params:
        updates["model_params"] = params
    try:
        return replace(config, **updates)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    """Independent, scheduling-order-free random stream for one run.

    A counter-based (Philox) generator keyed by the experiment seed with the
    run index as the block counter: any run of a sweep can be reproduced
    alone, and streams never overlap.
    """
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed must fit in 64 bits, got {seed}")
    if run_index < 0:
        raise ConfigError(f"run index must be nonnegative, got {run_index}")
    bitgen = np.random.Philox(key=seed, counter=[0, 0, 0, run_index])
    return np.random.Generator(bitgen)


def config_fields() -> tuple:
    """(section, key, field name, kind) rows in canonical order."""
    return tuple(
        (section, key, field_name, kind)
        for (section, key), (field_name, kind) in _SCHEMA.items()
    )


_ALL_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}
assert all(name in _ALL_FIELD_NAMES for (name, _) in _SCHEMA.values())
