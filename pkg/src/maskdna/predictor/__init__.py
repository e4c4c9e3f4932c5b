from .base import MaskPredictor, UniformPredictor
from .tabular import TabularPredictor, fit_tabular
from .transformer import (TinyTransformer, TinyTransformerConfig, backward, extract_embeddings,
                          forward, init_params, mean_pool, param_shapes)

__all__ = [
    "MaskPredictor", "UniformPredictor", "TabularPredictor", "fit_tabular",
    "TinyTransformer", "TinyTransformerConfig", "backward", "extract_embeddings",
    "forward", "init_params", "mean_pool", "param_shapes",
]
