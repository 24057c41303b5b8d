"""Simulation and equilibrium verification for a two-tier (peer audit + on-chain inspection) storage protocol."""

from .commitments import (
    Digest,
    InclusionProof,
    VectorCommitment,
    build_commitment,
    commit_responses,
    open_inclusion,
    verify_inclusion,
)
from .config import ConfigError, ScenarioConfig, load_config
from .equilibrium import (
    DeviationReport,
    NashReport,
    UniquenessReport,
    best_response,
    coalition_best_deviation,
    verify_nash,
    verify_strong_equilibrium,
    verify_uniqueness,
)
from .kernel import BACKEND
from .model import (
    CoalitionSpec,
    ConditionReport,
    PairAction,
    ProtocolParams,
    ReportRule,
    StorageMode,
    Strategy,
    UtilityBreakdown,
    check_conditions,
    collusive_profile,
    dishonest_profile,
    expected_pair_utility,
    expected_utility,
    fully_dishonest_strategy,
    honest_profile,
    honest_strategy,
)
from .simulator import SimulationSummary, run_epoch, run_simulation

__version__ = "0.1.0"
