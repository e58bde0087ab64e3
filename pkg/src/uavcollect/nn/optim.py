"""Adam with decoupled weight decay."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch


@dataclass
class OptimizerState:
    lr: float
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    exp_avg: dict[str, torch.Tensor] = field(default_factory=dict)
    exp_avg_sq: dict[str, torch.Tensor] = field(default_factory=dict)


class AdamW:
    """Updates named parameters in place.

    Weight decay multiplies the parameter by ``1 - lr * wd`` and never enters
    the moment estimates.
    """

    def __init__(self, named_params, lr: float, weight_decay: float = 0.0,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params: dict[str, torch.nn.Parameter] = dict(named_params)
        self.state = OptimizerState(lr, weight_decay, tuple(betas), eps)
        for name, p in self.params.items():
            self.state.exp_avg[name] = torch.zeros_like(p)
            self.state.exp_avg_sq[name] = torch.zeros_like(p)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    @torch.no_grad()
    def step(self) -> None:
        st = self.state
        for name, p in self.params.items():
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
        st.step += 1
        b1, b2 = st.betas
        bc1 = 1.0 - b1 ** st.step
        bc2 = 1.0 - b2 ** st.step
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if st.weight_decay:
                p.mul_(1.0 - st.lr * st.weight_decay)
            m, v = st.exp_avg[name], st.exp_avg_sq[name]
            m.mul_(b1).add_(g, alpha=1.0 - b1)
            v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
            denom = (v / bc2).sqrt_().add_(st.eps)
            p.addcdiv_(m, denom, value=-st.lr / bc1)


def clip_grad_norm(params, max_norm: float) -> float:
    grads = [p.grad for p in params if p.grad is not None]
    if not grads:
        return 0.0
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm:
        for g in grads:
            g.mul_(max_norm / (total + 1e-12))
    return total
