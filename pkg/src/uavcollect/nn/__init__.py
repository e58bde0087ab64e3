from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import check_gradients, finite_difference, gradcheck_layers
from .layers import (MLP, CausalSelfAttention, CausalTransformer, LayerNorm, LoraLinear,
                     attention_mask, gelu, lora_linear, mish)
from .optim import AdamW

__all__ = [
    "AdamW", "CausalSelfAttention", "CausalTransformer", "LayerNorm", "LoraLinear", "MLP",
    "attention_mask", "check_gradients", "finite_difference", "gelu", "gradcheck_layers",
    "load_checkpoint", "lora_linear", "mish", "save_checkpoint",
]
