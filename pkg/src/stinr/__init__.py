"""stinr: frequency-encoded factorized coordinate networks for
reconstructing sparsely observed spatiotemporal fields.

The package trains per-axis coordinate MLPs with multi-scale Fourier
input encodings and sine activations, joined by a transform core, and
ships the supporting dense linear algebra, graph spectral embeddings,
low-rank baselines, and a CLI.
"""

__version__ = "0.1.0"

from .data import (
    GridField,
    MetricsReport,
    Normalizer,
    ObservationSet,
    fit_grid_normalizer,
    load_grid_csv,
    metrics,
    sample_mask,
    save_grid_csv,
    synth_graph_signal,
    synth_low_rank,
    synth_wave_field,
)
from .features import FourierConfig, FourierMap, composed_kernel, encode, sample_fourier_map
from .graph import GraphSpec, SpectralEmbedding, normalized_laplacian, spectral_embedding
from .model import (
    FactorizedInr,
    FreqMlp,
    SineLayer,
    expand_sine_layer,
    forward_factorized,
    forward_grid,
    forward_mlp,
    init_factorized_inr,
    init_freq_mlp,
)
from .modelio import ModelBundle, load_model, save_model
from .train import TrainConfig, backward, grad_check, mse_loss, train

__all__ = [
    "FactorizedInr",
    "FourierConfig",
    "FourierMap",
    "FreqMlp",
    "GraphSpec",
    "GridField",
    "MetricsReport",
    "ModelBundle",
    "Normalizer",
    "ObservationSet",
    "SineLayer",
    "SpectralEmbedding",
    "TrainConfig",
    "backward",
    "composed_kernel",
    "encode",
    "expand_sine_layer",
    "fit_grid_normalizer",
    "forward_factorized",
    "forward_grid",
    "forward_mlp",
    "grad_check",
    "init_factorized_inr",
    "init_freq_mlp",
    "load_grid_csv",
    "load_model",
    "metrics",
    "mse_loss",
    "normalized_laplacian",
    "sample_fourier_map",
    "sample_mask",
    "save_grid_csv",
    "save_model",
    "spectral_embedding",
    "synth_graph_signal",
    "synth_low_rank",
    "synth_wave_field",
    "train",
]
