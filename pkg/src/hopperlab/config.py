"""Experiment configuration: INI-style sections of key = value pairs.

Every key has a documented default, so an empty file is a valid config.
Unknown sections or keys are rejected.  Controller and sweep stiffnesses
are given in N/cm (the convention of the hardware protocol this mirrors)
and converted to N/m at parse time; everything stored on the config
object is SI.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

from .controller import ControllerConfig
from .errors import ConfigError
from .linkage import LinkageParams
from .terrain import TerrainParams
from .simulator import NoiseConfig, SimConfig
from .identification import WeightConfig


@dataclass(frozen=True)
class EstimationConfig:
    """Observer gain and filter scaling knobs."""

    k_obs: float = 800.0     # momentum-observer bandwidth [1/s]
    p0_scale: float = 1e-2   # initial KF covariance diagonal

    def __post_init__(self):
        if self.k_obs <= 0.0 or self.p0_scale <= 0.0:
            raise ValueError("k_obs and p0_scale must be positive")


@dataclass(frozen=True)
class SweepConfig:
    """Hop and intrusion grids for the full experiment sweep."""

    speeds: tuple = (0.5, 0.8, 1.0, 1.2)                 # touchdown speeds [m/s]
    stiffnesses_n_per_cm: tuple = (2.50, 3.75, 5.00)     # compression stiffness grid
    seeds: tuple = (0, 1, 2, 3, 4)
    intrusion_speed_min: float = 0.022
    intrusion_speed_max: float = 1.1
    intrusion_speed_count: int = 50
    intrusion_repeats: int = 3
    intrusion_z_max: float = 0.05

    def __post_init__(self):
        if not self.speeds or not self.stiffnesses_n_per_cm or not self.seeds:
            raise ValueError("sweep grids must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("sweep seeds must be distinct")
        if not (0.0 < self.intrusion_speed_min < self.intrusion_speed_max):
            raise ValueError("intrusion speed range invalid")
        if self.intrusion_speed_count < 1 or self.intrusion_repeats < 1:
            raise ValueError("intrusion counts must be >= 1")
        if self.intrusion_z_max <= 0.0:
            raise ValueError("intrusion_z_max must be positive")

    def intrusion_speeds(self) -> list[float]:
        import numpy as np

        return list(np.linspace(self.intrusion_speed_min, self.intrusion_speed_max, self.intrusion_speed_count))


@dataclass
class ExperimentConfig:
    linkage: LinkageParams = field(default_factory=LinkageParams)
    terrain: TerrainParams = field(default_factory=TerrainParams)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    weight: WeightConfig = field(default_factory=WeightConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output_dir: str = "runs"
    unit_conversions: list = field(default_factory=list)


# Section -> {key: (target dataclass field, parser)}.  Controller
# stiffnesses carry the N/cm unit; everything else is SI.
def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _parse_int_list(text: str) -> tuple:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


_SCHEMA: dict[str, dict[str, tuple]] = {
    "linkage": {
        name: (name, float)
        for name in (
            "l_upper", "l_lower", "theta_min", "theta_max", "rotor_inertia",
            "torque_constant", "m_body", "m_foot", "mount_offset",
        )
    },
    "terrain": {
        name: (name, float)
        for name in ("k_stiff", "m_a_inf", "z_c", "d_grain", "surface_height")
    },
    "controller": {
        "k_compress": ("k_compress", "n_per_cm"),
        "k_extend": ("k_extend", "n_per_cm"),
        "l0_compress": ("l0_compress", float),
        "l0_extend": ("l0_extend", float),
        "b_stance": ("b_stance", float),
        "b_flight": ("b_flight", float),
        "contact_force_threshold": ("contact_force_threshold", float),
    },
    "sim": {
        "dt_truth": ("dt_truth", float),
        "sensor_rate_hz": ("sensor_rate_hz", float),
        "t_max": ("t_max", float),
        "post_liftoff_time": ("post_liftoff_time", float),
        "drop_speed": ("drop_speed", float),
        "seed": ("seed", int),
    },
    "noise": {
        "enabled": ("enabled", _parse_bool),
        "encoder_resolution": ("encoder_resolution", float),
        "encoder_sigma": ("encoder_sigma", float),
        "imu_sigma": ("imu_sigma", float),
        "imu_bias_max": ("imu_bias_max", float),
        "tof_sigma": ("tof_sigma", float),
        "current_sigma": ("current_sigma", float),
        "loadcell_sigma": ("loadcell_sigma", float),
    },
    "weight": {
        "sigma_good": ("sigma_good", float),
        "sigma_bad": ("sigma_bad", float),
        "k_w": ("k_w", float),
        "a0": ("a0", float),
    },
    "estimation": {
        "k_obs": ("k_obs", float),
        "p0_scale": ("p0_scale", float),
    },
    "sweep": {
        "speeds": ("speeds", _parse_float_list),
        "stiffnesses": ("stiffnesses_n_per_cm", "n_per_cm_list"),
        "seeds": ("seeds", _parse_int_list),
        "intrusion_speed_min": ("intrusion_speed_min", float),
        "intrusion_speed_max": ("intrusion_speed_max", float),
        "intrusion_speed_count": ("intrusion_speed_count", int),
        "intrusion_repeats": ("intrusion_repeats", int),
        "intrusion_z_max": ("intrusion_z_max", float),
    },
    "output": {
        "dir": ("output_dir", str),
    },
}

def default_config() -> ExperimentConfig:
    """All documented defaults (what an empty config file yields)."""
    return ExperimentConfig()


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate an experiment config file.

    Raises ConfigError with the offending line/section/key on any parse
    or validation problem.
    """
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";")
    )
    try:
        with open(path, "r", encoding="utf-8") as handle:
            parser.read_file(handle, source=path)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}")

    config = ExperimentConfig()
    overrides: dict[str, dict] = {}
    conversions: list[str] = []
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        schema = _SCHEMA[section]
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            target, kind = schema[key]
            try:
                if kind == "n_per_cm":
                    value = float(raw) * 100.0
                    conversions.append(f"{section}.{key}: {raw} N/cm -> {value:g} N/m")
                elif kind == "n_per_cm_list":
                    value = _parse_float_list(raw)
                    conversions.append(
                        f"{section}.{key}: {raw} N/cm (converted per condition)"
                    )
                else:
                    value = kind(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for [{section}] {key} = {raw!r}: {exc}")
            overrides.setdefault(section, {})[target] = value

    try:
        for section, values in overrides.items():
            if section == "output":
                config.output_dir = values["output_dir"]
                continue
            setattr(config, section, replace(getattr(config, section), **values))
        config.controller.validate_workspace(config.linkage)
        config.unit_conversions = conversions
    except (ValueError, ConfigError) as exc:
        raise ConfigError(str(exc))
    return config


def config_to_text(config: ExperimentConfig) -> str:
    """Render a config back to the file format (SI values; stiffness in N/cm)."""
    lines: list[str] = []

    def emit(section: str, obj, skip=()) -> None:
        lines.append(f"[{section}]")
        for f in fields(obj):
            if f.name in skip:
                continue
            value = getattr(obj, f.name)
            if f.name in ("k_compress", "k_extend") and section == "controller":
                value = value / 100.0
            if isinstance(value, tuple):
                value = ", ".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        lines.append("")

    emit("linkage", config.linkage)
    emit("terrain", config.terrain)
    emit("controller", config.controller)
    emit("sim", config.sim)
    emit("noise", config.noise)
    emit("weight", config.weight)
    emit("estimation", config.estimation)
    sweep = config.sweep
    lines.append("[sweep]")
    lines.append("speeds = " + ", ".join(str(v) for v in sweep.speeds))
    lines.append("stiffnesses = " + ", ".join(str(v) for v in sweep.stiffnesses_n_per_cm))
    lines.append("seeds = " + ", ".join(str(v) for v in sweep.seeds))
    for name in (
        "intrusion_speed_min", "intrusion_speed_max", "intrusion_speed_count",
        "intrusion_repeats", "intrusion_z_max",
    ):
        lines.append(f"{name} = {getattr(sweep, name)}")
    lines.append("")
    lines.append("[output]")
    lines.append(f"dir = {config.output_dir}")
    lines.append("")
    return "\n".join(lines)
