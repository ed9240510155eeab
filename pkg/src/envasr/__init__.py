"""envasr: environment-aware speech recognition at desk scale.

Stage one pretrains a multimodal masked-prediction encoder over k-means
quantized audio/video patches; stage two trains a conformer transducer that
cross-attends to the frozen embeddings through deep-fusion layers.
"""

from .autodiff import Tensor, no_grad
from .optim import AdamHyper, ParameterSet, adam_step, count_parameters

__version__ = "0.1.0"

__all__ = ["Tensor", "no_grad", "AdamHyper", "ParameterSet", "adam_step",
           "count_parameters", "__version__"]
