"""Central finite-difference check of backpropagated gradients."""
from __future__ import annotations

from typing import Callable

import torch

from .layers import (MLP, GELU, CausalSelfAttention, LayerNorm, LoraLinear, Mish,
                     is_lora_param)


def finite_difference(fn: Callable[[], torch.Tensor], tensor: torch.Tensor, h: float = 1e-5,
                      max_entries: int | None = None, generator: torch.Generator | None = None):
    """Central differences of scalar ``fn()`` w.r.t. entries of ``tensor``.

    Returns (flat indices, estimates). With ``max_entries`` a random subset
    of entries is probed.
    """
    flat = tensor.data.view(-1)
    n = flat.numel()
    if max_entries is not None and n > max_entries:
        idx = torch.randperm(n, generator=generator)[:max_entries]
    else:
        idx = torch.arange(n)
    est = torch.empty(len(idx), dtype=torch.float64)
    with torch.no_grad():
        for k, i in enumerate(idx.tolist()):
            orig = flat[i].item()
            flat[i] = orig + h
            up = float(fn())
            flat[i] = orig - h
            down = float(fn())
            flat[i] = orig
            est[k] = (up - down) / (2 * h)
    return idx, est


def relative_error(analytic: torch.Tensor, numeric: torch.Tensor, floor: float = 1e-12) -> float:
    """Norm-wise relative error; ``floor`` bounds the scale from below."""
    diff = torch.linalg.vector_norm(analytic - numeric)
    scale = max(float(torch.linalg.vector_norm(analytic)), float(torch.linalg.vector_norm(numeric)), floor)
    return float(diff) / scale


def check_gradients(fn: Callable[[], torch.Tensor], tensors: dict[str, torch.Tensor], h: float = 1e-5,
                    max_entries: int | None = 64, seed: int = 0) -> dict[str, float]:
    """Relative error between autograd and finite differences per tensor."""
    for t in tensors.values():
        t.grad = None
    fn().backward()
    gen = torch.Generator().manual_seed(seed)
    pairs = {}
    for name, t in tensors.items():
        grad = t.grad if t.grad is not None else torch.zeros_like(t)
        idx, est = finite_difference(fn, t, h, max_entries, gen)
        pairs[name] = (grad.reshape(-1)[idx].double(), est)
    # tensors with an identically zero gradient are judged against the layer's scale
    floor = 1e-3 * max((float(torch.linalg.vector_norm(a)) for a, _ in pairs.values()), default=0.0)
    return {name: relative_error(a, n, max(floor, 1e-12)) for name, (a, n) in pairs.items()}

def _layer_cases(seed: int = 0):
    torch.manual_seed(seed)
    d = 8
    x = torch.randn(3, 5, d, dtype=torch.float64, requires_grad=True)
    w_out = torch.randn(3, 5, d, dtype=torch.float64)

    def case(module, inputs, weight=None, filt=lambda n: True):
        module = module.double()
        tensors = {f"param:{n}": p for n, p in module.named_parameters() if filt(n)}
        tensors.update({f"input{i}": t for i, t in enumerate(inputs)})
        wt = weight if weight is not None else torch.randn_like(module(*inputs))

        def fn():
            return (module(*inputs) * wt).sum()
        return fn, tensors

    lin = torch.nn.Linear(d, d)
    yield "linear", case(lin, [x], w_out)
    ln = LayerNorm(d)
    with torch.no_grad():
        ln.weight.normal_()
        ln.bias.normal_()
    yield "layernorm", case(ln, [x], w_out)
    yield "gelu", case(GELU(), [x], w_out)
    yield "mish", case(Mish(), [x], w_out)
    attn = CausalSelfAttention(d, 2, lora_rank=2, lora_alpha=4.0)
    with torch.no_grad():
        for name, p in attn.named_parameters():
            if name.endswith("lora_b"):
                p.normal_()  # non-zero B so gradients reach A
    yield "attention", case(attn, [x], w_out)
    lora = LoraLinear(d, d, rank=3, alpha=6.0)
    with torch.no_grad():
        lora.lora_b.normal_()
    lora.weight.requires_grad_(False)
    lora.bias.requires_grad_(False)
    yield "lora", case(lora, [x], w_out, filt=is_lora_param)
    critic = MLP(d + 3, 16, 1, n_hidden=3)
    sa = torch.randn(7, d + 3, dtype=torch.float64, requires_grad=True)
    yield "critic_mlp", case(critic, [sa])


def gradcheck_layers(h: float = 1e-5, seed: int = 0) -> dict[str, float]:
    """Worst relative error per layer type (float64)."""
    out = {}
    for name, (fn, tensors) in _layer_cases(seed):
        errs = check_gradients(fn, tensors, h=h, seed=seed)
        out[name] = max(errs.values())
    return out
