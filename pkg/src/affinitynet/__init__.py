"""kNN attention pooling networks with feature attention for few-shot learning."""

from . import affinity, data, layers, metrics, ndcore, training
from .data import Dataset, SplitPlan, gen_synthetic, load_csv, split, top_variance_select
from .layers import ModelSpec, affinitynet_spec, init_params, model_forward, neuralnet_spec
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "affinity", "data", "layers", "metrics", "ndcore", "training",
    "Dataset", "SplitPlan", "gen_synthetic", "load_csv", "split", "top_variance_select",
    "ModelSpec", "affinitynet_spec", "init_params", "model_forward", "neuralnet_spec",
    "TrainConfig", "train",
]
