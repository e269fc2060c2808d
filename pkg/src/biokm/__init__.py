"""TCP messenger measurement workbench.

A relay server and scripted clients run chat and file-transfer
workloads over real TCP while every socket-boundary frame is counted.
The captured telemetry feeds two utilization models for cross-checking:
aggregate response (received throughput over link capacity) and
classical M/M/1 Little's law analytics.  Topology comes along for the
ride: per-client round trips become a distance matrix, Neighbor-Joining
turns it into a tree, and a binary link/path filter matrix answers
failure-robustness queries.
"""

from .loadgen import Mode as ScenarioMode, ScenarioSpec, generate_schedule, run_scenario
from .phylo import (
    DistanceMatrix,
    PhyloTree,
    from_newick,
    net_divergence,
    nj_build,
    star_distances,
    to_newick,
)
from .queueing import (
    QueueStats,
    SimulationResult,
    SteadyStateRow,
    UnstableQueue,
    mm1_stats,
    simulate_mm1,
    steady_state_table,
)
from .report import (
    ComparisonReport,
    Mode as ReportMode,
    PipelineResult,
    compare,
    full_pipeline,
)
from .route_filter import (
    FilterMatrix,
    build_filter,
    relation_domain,
    relation_range,
    surviving_paths,
    transpose,
)
from .server import MessengerServer, ServerConfig, start_server
from .telemetry import (
    AggregateResponse,
    RunMetrics,
    SessionMetrics,
    aggregate_response,
    analyze_capture,
    average_runs,
    capacity_bps,
    rates,
    synthesize_capture,
    throughput_bps,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateResponse",
    "ComparisonReport",
    "DistanceMatrix",
    "FilterMatrix",
    "MessengerServer",
    "PhyloTree",
    "PipelineResult",
    "QueueStats",
    "ReportMode",
    "RunMetrics",
    "ScenarioMode",
    "ScenarioSpec",
    "ServerConfig",
    "SessionMetrics",
    "SimulationResult",
    "SteadyStateRow",
    "UnstableQueue",
    "aggregate_response",
    "analyze_capture",
    "average_runs",
    "build_filter",
    "capacity_bps",
    "compare",
    "from_newick",
    "full_pipeline",
    "generate_schedule",
    "mm1_stats",
    "net_divergence",
    "nj_build",
    "rates",
    "relation_domain",
    "relation_range",
    "run_scenario",
    "simulate_mm1",
    "star_distances",
    "start_server",
    "steady_state_table",
    "surviving_paths",
    "synthesize_capture",
    "throughput_bps",
    "to_newick",
    "transpose",
]
