from .dgp import (
    DGPConfig,
    SimReplicate,
    gen_model1,
    gen_model2,
    generate,
    model2_tau_mc,
    true_gram,
    true_tau,
    true_tau_with_se,
)
from .montecarlo import KindMetrics, MCResult, ReplicateError, run_monte_carlo, summarize_metrics

__all__ = [
    "DGPConfig",
    "KindMetrics",
    "MCResult",
    "ReplicateError",
    "SimReplicate",
    "gen_model1",
    "gen_model2",
    "generate",
    "model2_tau_mc",
    "run_monte_carlo",
    "summarize_metrics",
    "true_gram",
    "true_tau",
    "true_tau_with_se",
]
