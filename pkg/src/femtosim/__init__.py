"""Two-tier uplink simulator: macro and in-building cells sharing one band."""

from .config import ScenarioConfig, SweepSpec, parse_config_text
from .engine import DropResult, run_drop, run_drop_indexed

__version__ = "0.1.0"

__all__ = [
    "ScenarioConfig",
    "SweepSpec",
    "parse_config_text",
    "DropResult",
    "run_drop",
    "run_drop_indexed",
    "__version__",
]
