"""Multi-UAV network-slicing simulator with multi-agent RL learners."""
__version__ = "0.1.0"

from .config import ConfigError, ScenarioConfig, UserClass, load_scenario, reduced_rural  # noqa: E402
from .env import UAVSliceEnv  # noqa: E402

__all__ = ["ConfigError", "ScenarioConfig", "UAVSliceEnv", "UserClass", "load_scenario", "reduced_rural", "__version__"]
