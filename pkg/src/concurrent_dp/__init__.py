"""Exact privacy analysis of concurrently composed finite interactive systems."""

from .core import (
    ACK,
    SKIP,
    Adversary,
    ApproxDP,
    ComposedSystem,
    ConditionedSystem,
    ExhaustedSystemError,
    InteractiveSystem,
    RDP,
    SubMeasureSystem,
    SystemPair,
    TCDP,
    ZCDP,
    compose,
    compose_pairs,
    path_products,
    validate_system,
)
from .engine import (
    EnumerationCapExceeded,
    TranscriptDistribution,
    enumerate_adversaries,
    normalize_alternating,
    transcript_distribution,
)
from .divergence import (
    check_dominance,
    hockey_stick,
    max_hockey_stick,
    max_renyi,
    renyi_divergence,
    verify_approx_dp,
    verify_rdp,
)
from .decompose import ConstructionError, Decomposition, decompose, simulate_via_rr
from .renyi import budget_monitor, cdp_compose, check_tracker, rdp_to_dp, verify_concurrent_rdp
from .calculators import advanced_composition, basic_composition, optimal_homogeneous

__version__ = "0.1.0"
