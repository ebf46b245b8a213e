"""Desk-scale engine for bid-based transactive distribution markets.

A linearized three-phase feeder model, a distribution-level aggregation LP
with dual extraction, bid/offer prequalification, wholesale clearing, ex-post
rectification of mutually contingent resources, and differential retail
price signals.
"""

from .ders import (
    Der,
    DerPopulation,
    GenerationSpec,
    gamma_price,
    generate_population,
    load_ders,
    per_phase_injection,
    population_document,
    reactive_ratio,
)
from .errors import (
    ConfigError,
    DomainError,
    GridclearError,
    InfeasibleError,
    InternalError,
    SchemaError,
    ShapeError,
    StateError,
    TopologyError,
)
from .network import (
    Bus,
    Line,
    Network,
    NetworkMatrices,
    build_matrices,
    flows_from_injections,
    head_injection,
    lindistflow_voltages,
    load_network,
    phase_coupled_impedance,
)
from .pipeline import (
    AffineLmp,
    Bins,
    CurveStep,
    IdsoQuote,
    WpmOutcome,
    aggregate_curves,
    build_bins,
    dispatch_check,
    evaluate_dispatch,
    expost_rectify,
    make_quotes,
    mc_ids,
    naive_quotes,
    qualification_prices,
    resolve_lmp,
    wpm_clear,
)
from .retail import RetailSignal, congestion_on_feed_path, retail_signals
from .scenario import (
    ScenarioConfig,
    ScenarioResult,
    bundled_feeder,
    emit_plot_data,
    load_scenario,
    run_scenario,
)
from .tdopf import (
    TdopfParams,
    TdopfProblem,
    TdopfSolution,
    assemble,
    kkt_residuals,
    qualification_price,
    solution_document,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "Bus",
    "Line",
    "Network",
    "NetworkMatrices",
    "build_matrices",
    "flows_from_injections",
    "head_injection",
    "lindistflow_voltages",
    "load_network",
    "phase_coupled_impedance",
    "Der",
    "DerPopulation",
    "GenerationSpec",
    "gamma_price",
    "generate_population",
    "load_ders",
    "per_phase_injection",
    "population_document",
    "reactive_ratio",
    "TdopfParams",
    "TdopfProblem",
    "TdopfSolution",
    "assemble",
    "solve",
    "kkt_residuals",
    "qualification_price",
    "solution_document",
    "AffineLmp",
    "Bins",
    "CurveStep",
    "IdsoQuote",
    "WpmOutcome",
    "aggregate_curves",
    "build_bins",
    "dispatch_check",
    "evaluate_dispatch",
    "expost_rectify",
    "make_quotes",
    "mc_ids",
    "naive_quotes",
    "qualification_prices",
    "resolve_lmp",
    "wpm_clear",
    "RetailSignal",
    "retail_signals",
    "congestion_on_feed_path",
    "ScenarioConfig",
    "ScenarioResult",
    "bundled_feeder",
    "emit_plot_data",
    "load_scenario",
    "run_scenario",
    "GridclearError",
    "SchemaError",
    "TopologyError",
    "ShapeError",
    "DomainError",
    "ConfigError",
    "StateError",
    "InfeasibleError",
    "InternalError",
    "__version__",
]
