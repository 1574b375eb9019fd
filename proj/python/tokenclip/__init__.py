"""Token-to-subspace dynamic alignment: entropic transport, sparse assignment,
training, and anomaly-scoring metrics, backed by the C++ core."""

from ._core import (
    AssignmentMatrix,
    Dataset,
    LabeledSample,
    LossBreakdown,
    SubspaceModel,
    SyntheticSpec,
    TokenGrid,
    TrainConfig,
    aupro,
    auroc,
    average_precision,
    bilinear_upsample,
    cost_matrix,
    entropic_objective,
    evaluate,
    exact_ot_bruteforce,
    finite_diff_check,
    forward_losses,
    generate_synthetic,
    init_model,
    load_checkpoint,
    load_dataset,
    load_mask_pgm,
    load_token_file,
    marginal_residual,
    save_checkpoint,
    save_dataset,
    save_mask_pgm,
    save_token_file,
    score_sample,
    sinkhorn,
    sparsify_topk,
    train,
    van_assignment,
)

__all__ = [
    "AssignmentMatrix",
    "Dataset",
    "LabeledSample",
    "LossBreakdown",
    "SubspaceModel",
    "SyntheticSpec",
    "TokenGrid",
    "TrainConfig",
    "aupro",
    "auroc",
    "average_precision",
    "bilinear_upsample",
    "cost_matrix",
    "entropic_objective",
    "evaluate",
    "exact_ot_bruteforce",
    "finite_diff_check",
    "forward_losses",
    "generate_synthetic",
    "init_model",
    "load_checkpoint",
    "load_dataset",
    "load_mask_pgm",
    "load_token_file",
    "marginal_residual",
    "save_checkpoint",
    "save_dataset",
    "save_mask_pgm",
    "save_token_file",
    "score_sample",
    "sinkhorn",
    "sparsify_topk",
    "train",
    "van_assignment",
]

__version__ = "0.1.0"
