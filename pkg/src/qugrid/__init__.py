"""qugrid: a deterministic cyber-physical simulator of quantum-secured microgrids.

Couples per-node power dispatch, a multi-topology message network,
abstracted quantum security services (key pools, tokens, intrusion probes),
and a staged attack/defense pipeline into a single seeded event loop.
"""

from .config import ScenarioConfig, parse_scenario
from .metrics import RunLog, summarize
from .sim import run

__version__ = "0.1.0"

__all__ = ["ScenarioConfig", "parse_scenario", "RunLog", "summarize", "run", "__version__"]
