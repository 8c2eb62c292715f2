"""Python bindings for the hierarchical sparse autoencoder core."""

from ._hhsae import (
    HhsaeError,
    Model,
    affinity_from_codes,
    auc,
    auprc,
    best_f1,
    detect_modules,
    fit_linear_probe,
    forward,
    generate_synthetic_manifold,
    init_model,
    load_checkpoint,
    recall_at_specificity,
    run_cli,
    save_checkpoint,
    train,
)

__all__ = [
    "HhsaeError",
    "Model",
    "affinity_from_codes",
    "auc",
    "auprc",
    "best_f1",
    "detect_modules",
    "fit_linear_probe",
    "forward",
    "generate_synthetic_manifold",
    "init_model",
    "load_checkpoint",
    "recall_at_specificity",
    "run_cli",
    "save_checkpoint",
    "train",
]
