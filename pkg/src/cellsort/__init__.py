"""Five-phase parallel positive-integer sort on a simulated cell machine."""

from .driver import RunConfig, RunReport, run
from .fabric import CommStats, Fabric, FabricConfig
from .keygen import KeySpec, generate
from .verify import VerifyReport, verify

__all__ = [
    "RunConfig", "RunReport", "run",
    "CommStats", "Fabric", "FabricConfig",
    "KeySpec", "generate",
    "VerifyReport", "verify",
]
