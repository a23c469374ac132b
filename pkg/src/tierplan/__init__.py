"""Planning-stage resource reservation for three-tier edge computing."""

from .cost import AppProfile, ReservationDecision, UsageBreakdown, Weights
from .storage import Placement
from .topology import ServerRecord, Tier, Topology, build_topology, validate
from .workload import Snapshot, WorkloadParams

__version__ = "0.1.0"

__all__ = [
    "AppProfile",
    "Placement",
    "ReservationDecision",
    "ServerRecord",
    "Snapshot",
    "Tier",
    "Topology",
    "UsageBreakdown",
    "Weights",
    "WorkloadParams",
    "build_topology",
    "validate",
    "__version__",
]
