"""Cost model, factorization and forward passes for convolutional layers."""

from ._cdpkit import (
    Activation,
    AlphaBound,
    ArchSpec,
    CostReport,
    DirectiveRejected,
    LayerCost,
    LayerKind,
    LayerSpec,
    ParseError,
    UnsupportedConfiguration,
    WeightMismatch,
    alpha_bound,
    apply_plan,
    arch_from_json,
    equivalent_kernel,
    evbmf_rank,
    forward,
    hooi_tucker2,
    l2net,
    load_arch,
    merge_depthsep,
    model_cost,
    model_forward,
    random_weights,
    read_weights,
    run_cli,
    superpoint,
    svd,
    verify,
    write_weights,
)

__all__ = [name for name in dir() if not name.startswith("_")]
