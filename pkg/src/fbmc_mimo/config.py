"""Scenario configuration (JSON round-trippable)."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

MODES = ("colocated", "cellfree")
IMPAIRMENTS = ("perfect", "est_error", "reciprocity", "both")
COMPENSATIONS = ("none", "statistical", "downlink_pilot", "correction_term")
POWER_ALLOCATIONS = ("max", "fractional")
PRECODERS = ("zf", "mrt")
PDP_SOURCES = ("true", "estimated")

# the five imperfection cases of the co-located study as (impairment, compensation, use_fsp)
CASES = {
    "i": ("reciprocity", "none", True),
    "ii": ("est_error", "statistical", True),
    "iii": ("both", "statistical", True),
    "iv": ("both", "downlink_pilot", True),
    "v": ("both", "none", False),
}


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = "colocated"
    num_subcarriers: int = 64
    overlap: int = 4
    num_users: int = 8
    # co-located array
    num_antennas: int = 64
    snr_db: float = 0.0
    # distributed antennas
    num_aps: int = 36
    antennas_per_ap: int = 4
    area_km: float = 2.0
    p_max_w: float = 0.25
    ue_power_w: float = 0.2
    bandwidth_hz: float = 20e6
    noise_figure_db: float = 9.0
    temperature_k: float = 290.0
    shadow_std_db: float = 8.0
    ap_threshold_db: float = -5.0
    power_allocation: str = "fractional"
    nu: float = 0.6
    gamma: float = 1.2
    # propagation
    sample_rate_hz: float = 15.36e6
    rms_delay_ns: tuple = (90.0, 110.0)
    # precoding and prefiltering
    precoder: str = "zf"
    use_fsp: bool = True
    fsp_length: int = 5
    fsp_mode: str = "zf"
    fsp_noise_weight: float = 0.0
    fsp_grid_points: int = 8
    # imperfections
    impairment: str = "perfect"
    compensation: str = "none"
    pilot_boost_db: float = 10.0
    sigma_et2: float | None = None
    xi_range: tuple = (0.98, 1.02)
    phi_max: float = 2.0 * math.pi / 9.0
    pdp_source: str = "true"
    debias_pdp: bool = True
    downlink_pilot_slots: int = 2
    # evaluation
    subcarrier_span: int = 1
    trials: int = 100
    seed: int = 0
    threads: int = 1
    mc_frames: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rms_delay_ns", tuple(float(v) for v in self.rms_delay_ns))
        object.__setattr__(self, "xi_range", tuple(float(v) for v in self.xi_range))
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.mode in MODES, f"mode must be one of {MODES}")
        need(self.impairment in IMPAIRMENTS, f"impairment must be one of {IMPAIRMENTS}")
        need(self.compensation in COMPENSATIONS, f"compensation must be one of {COMPENSATIONS}")
        need(self.power_allocation in POWER_ALLOCATIONS, f"power_allocation must be one of {POWER_ALLOCATIONS}")
        need(self.precoder in PRECODERS, f"precoder must be one of {PRECODERS}")
        need(self.pdp_source in PDP_SOURCES, f"pdp_source must be one of {PDP_SOURCES}")
        need(self.fsp_mode in ("zf", "mmse"), "fsp_mode must be 'zf' or 'mmse'")
        need(self.num_subcarriers >= 4 and self.num_subcarriers % 4 == 0, "num_subcarriers must be a positive multiple of 4")
        need(self.overlap in (2, 3, 4), "overlap must be 2, 3 or 4")
        need(self.num_users >= 1, "num_users must be >= 1")
        need(self.fsp_length >= 1, "fsp_length must be >= 1")
        need(self.trials >= 1, "trials must be >= 1")
        need(self.threads >= 1, "threads must be >= 1")
        need(self.mc_frames >= 0, "mc_frames must be >= 0")
        need(self.subcarrier_span >= 1, "subcarrier_span must be >= 1")
        need(len(self.rms_delay_ns) == 2 and 0 < self.rms_delay_ns[0] <= self.rms_delay_ns[1], "rms_delay_ns must be [low, high] with 0 < low <= high")
        need(len(self.xi_range) == 2 and 0 <= self.xi_range[0] <= self.xi_range[1], "xi_range must be [low, high]")
        need(self.sigma_et2 is None or self.sigma_et2 >= 0, "sigma_et2 must be nonnegative")
        need(self.downlink_pilot_slots >= 1, "downlink_pilot_slots must be >= 1")
        if self.mode == "colocated":
            need(self.num_antennas >= self.num_users or self.precoder == "mrt", "ZF needs num_antennas >= num_users")
            need(self.compensation != "correction_term", "correction_term compensation applies to the cellfree mode only")
        else:
            n_side = math.isqrt(self.num_aps)
            need(self.num_aps >= 1 and n_side * n_side == self.num_aps, "num_aps must be a perfect square")
            need(self.antennas_per_ap >= 1, "antennas_per_ap must be >= 1")
            need(
                self.compensation != "downlink_pilot",
                "downlink_pilot compensation is not applicable to the cellfree mode (the correction is not a scalar gain)",
            )
            need(self.precoder == "zf", "cellfree mode supports the zf precoder only")
        if self.impairment == "perfect":
            need(self.compensation == "none", "compensation requires an impairment")

    @property
    def total_antennas(self) -> int:
        return self.num_antennas if self.mode == "colocated" else self.num_aps * self.antennas_per_ap

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def with_case(self, case: str) -> "ScenarioConfig":
        """Apply one of the named imperfection cases ``i`` .. ``v``."""
        try:
            impairment, compensation, use_fsp = CASES[case]
        except KeyError:
            raise ConfigError(f"unknown case {case!r}; choose from {sorted(CASES)}") from None
        return self.replace(impairment=impairment, compensation=compensation, use_fsp=use_fsp)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["rms_delay_ns"] = list(self.rms_delay_ns)
        d["xi_range"] = list(self.xi_range)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        if "case" in data:
            case = data.pop("case")
            base = cls.from_dict(data)
            return base.with_case(case)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)


NUMERIC_AXES = tuple(
    f.name for f in dataclasses.fields(ScenarioConfig) if f.type in ("int", "float", "float | None")
)
