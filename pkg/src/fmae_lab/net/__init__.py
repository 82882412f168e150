from .adam import AdamState, adam_step
from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    ForwardCache,
    ParameterSet,
    backward,
    empirical_receptive_field,
    encode,
    forward,
    forward_with_cache,
    init_params,
    zero_params,
)
from .spec import (
    LayerSpec,
    NetworkSpec,
    build_connear_spec,
    build_waveunet_spec,
    receptive_field,
)

__all__ = [
    "AdamState", "adam_step", "load_checkpoint", "save_checkpoint", "ForwardCache",
    "ParameterSet", "backward", "empirical_receptive_field", "encode", "forward",
    "forward_with_cache", "init_params", "zero_params", "LayerSpec", "NetworkSpec",
    "build_connear_spec", "build_waveunet_spec", "receptive_field",
]
