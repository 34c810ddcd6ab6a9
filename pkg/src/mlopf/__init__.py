"""Multi-level primal-dual OPF solver for radial multi-phase feeders."""

__version__ = "0.1.0"

from .network import (
    Bus,
    Line,
    Network,
    NetworkError,
    load_network,
    network_to_document,
    save_network,
    validate_radial,
)
from .sensitivity import (
    OMEGA,
    SensitivityMatrices,
    build_sensitivity,
    dv_dp_entry,
    dv_dq_entry,
    read_sensitivity,
    voltage_linear,
    write_sensitivity,
)
from .partition import (
    Area,
    PartitionHierarchy,
    Subarea,
    area_dual_aggregates,
    auto_partition,
    load_partition,
    partition_to_document,
    save_partition,
    validate_partition,
)
from .opf import (
    Device,
    DualState,
    Problem,
    ProblemError,
    SolverConfig,
    VoltageBounds,
    cost_and_gradient,
    dual_update,
    lagrangian_value,
    load_problem,
    make_problem,
    project_box,
    saddle_residual,
)
from .coupling import (
    AggregateMessage,
    BilevelEngine,
    CouplingResult,
    EngineError,
    FlatEngine,
    FlowRecord,
    PathOracle,
    PrivacyReport,
    TrilevelEngine,
    coupling_bilevel,
    coupling_flat,
    coupling_trilevel,
    make_engine,
    privacy_audit,
)
from .powerflow import (
    ModelDivergence,
    SweepError,
    VoltageSolution,
    backward_forward_sweep,
    compare_models,
)
from .solver import (
    LinearVoltageModel,
    RunResult,
    SolverError,
    SolverState,
    SweepVoltageModel,
    Trace,
    TraceRecord,
    initial_state,
    run,
    step,
)
from .feedergen import FeederSpec, GeneratedFeeder, feeder_documents, generate
from .bench import bench_sweep, bench_table, bench_csv, fit_loglog, two_level_feeder
