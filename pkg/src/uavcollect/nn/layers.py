"""Transformer building blocks with low-rank adapters.

Autodiff is torch's; the layers themselves are written out here so that the
adapter placement and the masking rules are explicit.
"""
from __future__ import annotations

import math

import torch
from torch import nn


def gelu(x: torch.Tensor) -> torch.Tensor:
    """Tanh approximation used by GPT-2."""
    return 0.5 * x * (1.0 + torch.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x ** 3)))


def mish(x: torch.Tensor) -> torch.Tensor:
    # softplus is evaluated stably; identical to ln(1 + e^x)
    return x * torch.tanh(nn.functional.softplus(x))


class GELU(nn.Module):
    def forward(self, x):
        return gelu(x)


class Mish(nn.Module):
    def forward(self, x):
        return mish(x)


class LayerNorm(nn.Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))

    def normalize(self, x: torch.Tensor) -> torch.Tensor:
        mu = x.mean(dim=-1, keepdim=True)
        var = ((x - mu) ** 2).mean(dim=-1, keepdim=True)
        return (x - mu) / torch.sqrt(var + self.eps)

    def forward(self, x):
        return self.normalize(x) * self.weight + self.bias


class LoraLinear(nn.Module):
    """Linear map whose frozen weight is shifted by a scaled low-rank product.

    ``y = x W^T + b + (alpha / r) * (x A^T) B^T`` with A of shape (r, d_in)
    drawn from a Gaussian and B of shape (d_out, r) starting at zero, so a
    fresh adapter leaves the layer unchanged. ``rank == 0`` means no adapter.
    """

    def __init__(self, d_in: int, d_out: int, rank: int = 0, alpha: float = 1.0, bias: bool = True):
        super().__init__()
        if rank < 0 or rank > min(d_in, d_out):
            raise ValueError(f"LoRA rank {rank} exceeds layer size {min(d_in, d_out)}")
        base = nn.Linear(d_in, d_out, bias=bias)
        self.weight = base.weight
        self.bias = base.bias
        self.rank = rank
        self.alpha = alpha
        if rank:
            self.lora_a = nn.Parameter(torch.randn(rank, d_in) / math.sqrt(d_in))
            self.lora_b = nn.Parameter(torch.zeros(d_out, rank))
        else:
            self.register_parameter("lora_a", None)
            self.register_parameter("lora_b", None)

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank if self.rank else 0.0

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = nn.functional.linear(x, self.weight, self.bias)
        if self.rank:
            y = y + self.scaling * ((x @ self.lora_a.T) @ self.lora_b.T)
        return y


def lora_linear(x: torch.Tensor, w_frozen: torch.Tensor, a: torch.Tensor, b: torch.Tensor,
                alpha: float) -> torch.Tensor:
    """Functional form of :class:`LoraLinear` without bias; never forms B @ A."""
    r = a.shape[0]
    if r > min(w_frozen.shape):
        raise ValueError("LoRA rank exceeds hidden size")
    return x @ w_frozen.detach().T + (alpha / r) * ((x @ a.T) @ b.T)


def attention_mask(valid: torch.Tensor) -> torch.Tensor:
    """(B, L) validity -> (B, 1, L, L) boolean mask of allowed key positions.

    A query sees keys at or before itself that are valid; every token also
    sees itself so padded rows stay finite.
    """
    L = valid.shape[-1]
    causal = torch.ones(L, L, dtype=torch.bool, device=valid.device).tril()
    eye = torch.eye(L, dtype=torch.bool, device=valid.device)
    allowed = causal & (valid[:, None, :] | eye)
    return allowed[:, None]


class CausalSelfAttention(nn.Module):
    def __init__(self, dim: int, n_heads: int, lora_rank: int = 0, lora_alpha: float = 1.0):
        super().__init__()
        if dim % n_heads:
            raise ValueError("dim must be divisible by n_heads")
        self.n_heads = n_heads
        self.q_proj = LoraLinear(dim, dim, lora_rank, lora_alpha)
        self.k_proj = LoraLinear(dim, dim, lora_rank, lora_alpha)
        self.v_proj = LoraLinear(dim, dim, lora_rank, lora_alpha)
        self.out_proj = LoraLinear(dim, dim, lora_rank, lora_alpha)
        self.last_weights: torch.Tensor | None = None

    def forward(self, x: torch.Tensor, allowed: torch.Tensor | None = None) -> torch.Tensor:
        B, L, D = x.shape
        h = self.n_heads

        def split(t):
            return t.view(B, L, h, D // h).transpose(1, 2)

        q, k, v = split(self.q_proj(x)), split(self.k_proj(x)), split(self.v_proj(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(D // h)
        if allowed is None:
            allowed = attention_mask(torch.ones(B, L, dtype=torch.bool, device=x.device))
        scores = scores.masked_fill(~allowed, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        self.last_weights = weights.detach()
        out = (weights @ v).transpose(1, 2).reshape(B, L, D)
        return self.out_proj(out)


class Block(nn.Module):
    """Pre-norm GPT-2 style block."""

    def __init__(self, dim: int, n_heads: int, lora_rank: int = 0, lora_alpha: float = 1.0):
        super().__init__()
        self.ln1 = LayerNorm(dim)
        self.attn = CausalSelfAttention(dim, n_heads, lora_rank, lora_alpha)
        self.ln2 = LayerNorm(dim)
        self.fc = nn.Linear(dim, 4 * dim)
        self.proj = nn.Linear(4 * dim, dim)

    def forward(self, x, allowed=None):
        x = x + self.attn(self.ln1(x), allowed)
        return x + self.proj(gelu(self.fc(self.ln2(x))))


class CausalTransformer(nn.Module):
    def __init__(self, dim: int, n_layers: int, n_heads: int, lora_rank: int = 0, lora_alpha: float = 1.0):
        super().__init__()
        self.blocks = nn.ModuleList(Block(dim, n_heads, lora_rank, lora_alpha) for _ in range(n_layers))
        self.ln_f = LayerNorm(dim)

    def forward(self, x: torch.Tensor, valid: torch.Tensor | None = None) -> torch.Tensor:
        allowed = None if valid is None else attention_mask(valid)
        for block in self.blocks:
            x = block(x, allowed)
        return self.ln_f(x)


class MLP(nn.Module):
    """Stack of Linear + activation layers ending in a linear head."""

    def __init__(self, d_in: int, width: int, d_out: int, n_hidden: int = 3, act=Mish):
        super().__init__()
        layers: list[nn.Module] = []
        d = d_in
        for _ in range(n_hidden):
            layers += [nn.Linear(d, width), act()]
            d = width
        layers.append(nn.Linear(d, d_out))
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


def is_lora_param(name: str) -> bool:
    return name.endswith("lora_a") or name.endswith("lora_b")
