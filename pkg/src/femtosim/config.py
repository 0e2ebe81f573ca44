"""Scenario configuration: typed parameters, sweeps, and file parsing.

A scenario is one point in parameter space (scheme, geometry, radio
constants, drop counts). A sweep varies a single axis over a list of
values for a list of schemes. Config files are flat ``key = value``
text whose keys mirror the dataclass field names exactly; unknown keys
are hard errors so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .units import dbm_to_mw

SCHEMES = ("fixed_cap", "open_loop", "closed_loop", "no_femto")
SWEEP_AXES = ("d_m", "le_db", "m_per_cell")

_SWEEP_KEYS = ("axis", "axis_values", "schemes")


@dataclass
class ScenarioConfig:
    # scheme and run shape
    scheme: str = "fixed_cap"
    seed: int = 1
    drops: int = 20
    warmup_frames: int = 200
    ni0_window_frames: int = 100
    data_frames: int = 2000

    # geometry
    cell_radius_m: float = 800.0 / math.sqrt(3.0)
    macro_users_per_cell: int = 10
    femto_users_per_building: int = 4
    building_size_m: float = 50.0
    m_per_cell: int = 0           # buildings per macrocell (grid mode)
    d_m: float | None = None      # single-building distance from the center BS
    azimuth_deg: float | None = None  # fixed bearing for the single building, None = random
    le_db: float | None = None    # fixed external wall loss, None = sampled
    li_db: float | None = None    # fixed internal wall loss, None = sampled
    building_retry_limit: int = 2000

    # radio constants
    bandwidth_hz: float = 1.25e6
    carrier_mhz: float = 2500.0
    noise_floor_dbm: float = -109.0
    alpha_inr: float = 3.0        # allowed femto interference over thermal, linear
    pmax_dbm: float = 23.0        # hard transmit power cap, everyone
    eirp_dbm: float = 43.0        # macro downlink EIRP used for loss estimation
    speed_kmh: float = 3.0
    slot_s: float = 1.667e-3
    slots_per_frame: int = 4
    neighbor_list_size: int = 3
    pf_time_constant_frames: float = 100.0
    broadcast_delay_frames: int = 1  # 0 = idealized same-frame feedback

    # shadowing
    shadow_sigma_outdoor_db: float = 8.0
    shadow_rho_outdoor: float = 0.5
    shadow_sigma_indoor_db: float = 10.0
    shadow_rho_indoor: float = 0.7

    rate_table_path: str | None = None

    @property
    def frame_s(self) -> float:
        return self.slot_s * self.slots_per_frame

    @property
    def noise_floor_mw(self) -> float:
        return dbm_to_mw(self.noise_floor_dbm)

    @property
    def pmax_mw(self) -> float:
        return dbm_to_mw(self.pmax_dbm)

    @property
    def eirp_mw(self) -> float:
        return dbm_to_mw(self.eirp_dbm)

    @property
    def single_building(self) -> bool:
        return self.d_m is not None

    @property
    def n_buildings(self) -> int:
        if self.single_building:
            return 1
        return 19 * self.m_per_cell

    def validate(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.drops < 1:
            raise ValueError("drops must be >= 1")
        if self.ni0_window_frames < 1 or self.warmup_frames < self.ni0_window_frames:
            raise ValueError("need warmup_frames >= ni0_window_frames >= 1")
        if self.data_frames < 1:
            raise ValueError("data_frames must be >= 1")
        if self.m_per_cell < 0:
            raise ValueError("m_per_cell must be >= 0")
        if self.m_per_cell > 0 and self.d_m is not None:
            raise ValueError("d_m (single building) and m_per_cell (grid) are mutually exclusive")
        if self.d_m is not None and self.d_m <= 0:
            raise ValueError("d_m must be positive")
        if self.azimuth_deg is not None and self.d_m is None:
            raise ValueError("azimuth_deg only applies to single-building mode")
        if self.cell_radius_m <= 0 or self.building_size_m <= 0:
            raise ValueError("geometry lengths must be positive")
        if self.macro_users_per_cell < 1 or self.femto_users_per_building < 1:
            raise ValueError("user counts must be >= 1")
        if self.bandwidth_hz <= 0 or self.carrier_mhz <= 0:
            raise ValueError("bandwidth and carrier must be positive")
        if self.alpha_inr <= 0:
            raise ValueError("alpha_inr must be positive")
        if self.neighbor_list_size < 1:
            raise ValueError("neighbor_list_size must be >= 1")
        if self.pf_time_constant_frames <= 1:
            raise ValueError("pf_time_constant_frames must be > 1")
        if self.broadcast_delay_frames < 0:
            raise ValueError("broadcast_delay_frames must be >= 0")
        if not (0 <= self.shadow_rho_outdoor <= 1 and 0 <= self.shadow_rho_indoor <= 1):
            raise ValueError("shadowing correlations must be in [0, 1]")
        if self.slot_s <= 0 or self.slots_per_frame < 1:
            raise ValueError("slot timing must be positive")

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)


@dataclass
class SweepSpec:
    """One axis swept over several values for several schemes."""

    base: ScenarioConfig
    axis: str | None = None
    values: tuple = ()
    schemes: tuple = ()

    def validate(self) -> None:
        self.base.validate()
        if self.axis is None:
            if self.values:
                raise ValueError("axis_values given without an axis")
            return
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            raise ValueError("sweep needs at least one axis value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("axis values must be strictly increasing")
        if not self.schemes:
            raise ValueError("sweep needs at least one scheme")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r} in sweep")
        for v in self.values:
            self.point(self.schemes[0], v).validate()

    def point(self, scheme: str, value) -> ScenarioConfig:
        """Config for one (scheme, axis value) cell of the sweep."""
        kw = {"scheme": scheme}
        if self.axis == "m_per_cell":
            kw["m_per_cell"] = int(value)
            kw["d_m"] = None
        elif self.axis is not None:
            kw[self.axis] = float(value)
        return self.base.replace(**kw)

    def cells(self):
        """All (scheme, axis_value, config) combinations, schemes outermost."""
        if self.axis is None:
            yield self.base.scheme, None, self.base
            return
        for scheme in self.schemes:
            for value in self.values:
                yield scheme, value, self.point(scheme, value)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}


def _coerce(key: str, raw: str):
    """Parse one config value according to its dataclass field type."""
    typ = _FIELD_TYPES[key]
    if raw.lower() in ("none", "null"):
        if "None" in typ:
            return None
        raise ValueError(f"{key} does not accept none")
    if typ.startswith("int"):
        return int(raw)
    if typ.startswith("float"):
        return float(raw)
    if typ.startswith("str"):
        return raw
    raise ValueError(f"cannot parse config field {key} of type {typ}")


def parse_config_text(text: str, source: str = "<config>") -> SweepSpec:
    """Parse flat ``key = value`` text into a SweepSpec.

    A file without sweep keys parses to a degenerate sweep (axis None)
    holding a single scenario. Raises ValueError naming the offending
    line for unknown keys, duplicates, or bad literals.
    """
    scenario_kw = {}
    sweep_kw = {"axis": None, "values": (), "schemes": ()}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in seen:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        if key == "axis":
            sweep_kw["axis"] = value
        elif key == "axis_values":
            parts = [p.strip() for p in value.split(",") if p.strip()]
            sweep_kw["values"] = tuple(float(p) for p in parts)
        elif key == "schemes":
            sweep_kw["schemes"] = tuple(p.strip() for p in value.split(",") if p.strip())
        elif key in _FIELD_TYPES:
            try:
                scenario_kw[key] = _coerce(key, value)
            except ValueError as exc:
                raise ValueError(f"{source}:{lineno}: {exc}") from None
        else:
            raise ValueError(f"{source}:{lineno}: unknown config key {key!r}")
    base = ScenarioConfig(**scenario_kw)
    spec = SweepSpec(base=base, **sweep_kw)
    spec.validate()
    return spec


def format_config(spec: SweepSpec) -> str:
    """Render a SweepSpec back to parseable config text."""
    lines = []
    defaults = ScenarioConfig()
    for f in dataclasses.fields(ScenarioConfig):
        val = getattr(spec.base, f.name)
        marker = "" if val != getattr(defaults, f.name) else "  # default"
        lines.append(f"{f.name} = {val if val is not None else 'none'}{marker}")
    if spec.axis is not None:
        lines.append(f"axis = {spec.axis}")
        lines.append("axis_values = " + ", ".join(_fmt_num(v) for v in spec.values))
        lines.append("schemes = " + ", ".join(spec.schemes))
    return "\n".join(lines) + "\n"


def _fmt_num(v) -> str:
    return str(int(v)) if float(v).is_integer() else str(v)
