"""Kernel-scaled readout: two parallel 1-D convolutions along the node axis
(one wide, one narrow), each batch-normalised, summed, pooled and classified.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch
from torch import nn
from torch.nn import functional as F

from .eagcn import ACTIVATIONS, DimensionMismatch

TRAIN = "train"
EVAL = "eval"


@dataclass
class KsrConfig:
    in_channels: int = 100
    out_channels: int = 100
    large_kernel: int = 11
    small_kernel: int = 3
    fc_hidden: int = 100
    pooling: str = "max"
    activation: str = "relu"
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        for k in (self.large_kernel, self.small_kernel):
            if k < 1 or k % 2 == 0:
                raise ValueError(f"kernel sizes must be odd and positive, got {k}")
        if self.small_kernel > self.large_kernel:
            raise ValueError("small kernel must not exceed the large kernel")
        if self.pooling not in ("max", "mean"):
            raise ValueError(f"unknown pooling {self.pooling!r}")


def batch_norm_channel(x: Sequence[float], gamma: float = 1.0, beta: float = 0.0,
                       running_mean: float = 0.0, running_var: float = 1.0, eps: float = 1e-5,
                       momentum: float = 0.1, mode: str = TRAIN):
    """Normalise one channel's values; returns ``(output, (running_mean, running_var))``.

    Train mode uses the biased batch variance for normalising and folds the
    unbiased one into the running estimate.
    """
    xs = [float(v) for v in x]
    if mode == TRAIN:
        n = len(xs)
        mean = math.fsum(xs) / n
        var = math.fsum((v - mean) ** 2 for v in xs) / n
        unbiased = var * n / (n - 1) if n > 1 else var
        new_stats = ((1 - momentum) * running_mean + momentum * mean,
                     (1 - momentum) * running_var + momentum * unbiased)
    elif mode == EVAL:
        mean, var = running_mean, running_var
        new_stats = (running_mean, running_var)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    scale = 1.0 / math.sqrt(var + eps)
    return [gamma * (v - mean) * scale + beta for v in xs], new_stats


class MaskedBatchNorm(nn.Module):
    """Per-channel batch norm over (batch, position) that ignores padded positions."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.register_buffer("running_mean", torch.zeros(channels))
        self.register_buffer("running_var", torch.ones(channels))

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        # x: (B, C, L); mask: (B, L) bool
        m = mask.unsqueeze(1).to(x.dtype)
        if self.training:
            count = m.sum()
            mean = (x * m).sum(dim=(0, 2)) / count
            centred = (x - mean.view(1, -1, 1)) * m
            var = (centred * centred).sum(dim=(0, 2)) / count
            with torch.no_grad():
                unbiased = var * count / (count - 1) if count > 1 else var
                self.running_mean.mul_(1 - self.momentum).add_(self.momentum * mean.detach())
                self.running_var.mul_(1 - self.momentum).add_(self.momentum * unbiased.detach())
        else:
            mean, var = self.running_mean, self.running_var
        y = (x - mean.view(1, -1, 1)) / torch.sqrt(var.view(1, -1, 1) + self.eps)
        return (y * self.weight.view(1, -1, 1) + self.bias.view(1, -1, 1)) * m


def lengths_to_mask(lengths: Sequence[int], max_len: int) -> torch.Tensor:
    lengths = torch.as_tensor(list(lengths), dtype=torch.long)
    return torch.arange(max_len).unsqueeze(0) < lengths.unsqueeze(1)


class KernelScaledRepresentation(nn.Module):
    def __init__(self, config: KsrConfig):
        super().__init__()
        self.config = config
        c_in, c_out = config.in_channels, config.out_channels
        self.conv_large = nn.Conv1d(c_in, c_out, config.large_kernel,
                                    padding=config.large_kernel // 2, bias=False)
        self.conv_small = nn.Conv1d(c_in, c_out, config.small_kernel,
                                    padding=config.small_kernel // 2, bias=False)
        self.bn_large = MaskedBatchNorm(c_out, config.bn_eps, config.bn_momentum)
        self.bn_small = MaskedBatchNorm(c_out, config.bn_eps, config.bn_momentum)
        self.fc1 = nn.Linear(c_out, config.fc_hidden)
        self.fc2 = nn.Linear(config.fc_hidden, 2)
        self.act = ACTIVATIONS[config.activation]

    def feature_map(self, X: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """``X``: (B, L, d) zero-padded node matrices -> (B, C_out, L)."""
        if X.dim() == 2:
            X = X.unsqueeze(0)
        if X.shape[-1] != self.config.in_channels or X.shape[1] < 1:
            raise DimensionMismatch(
                f"expected (B, L>=1, {self.config.in_channels}) input, got {tuple(X.shape)}")
        x = X.transpose(1, 2)
        return (self.bn_large(self._conv(self.conv_large, x, mask), mask)
                + self.bn_small(self._conv(self.conv_small, x, mask), mask))

    @staticmethod
    def _conv(conv: nn.Conv1d, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        # Each graph is convolved over its true length only. The backend picks its
        # blocking from the sequence length, so one batched call over the padded
        # width would not be bit-identical to the unpadded graph.
        L = x.shape[2]
        outs = []
        for b, n in enumerate(mask.sum(dim=1).tolist()):
            y = conv(x[b:b + 1, :, :n])
            outs.append(F.pad(y, (0, L - n)) if n < L else y)
        return torch.cat(outs)

    def pool(self, K: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        m = mask.unsqueeze(1)
        if self.config.pooling == "max":
            return K.masked_fill(~m, -math.inf).amax(dim=2)
        return (K * m).sum(dim=2) / m.sum(dim=2).clamp(min=1)

    def logits(self, K: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(self.pool(K, mask))))

    def classify(self, K: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """(B, 2) probabilities ``(p_nonvul, p_vul)``."""
        return F.softmax(self.logits(K, mask), dim=-1)

    def forward(self, X: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return self.logits(self.feature_map(X, mask), mask)


def kernel_scaled_output(H: torch.Tensor, module: KernelScaledRepresentation,
                         lengths: Sequence[int] | None = None) -> torch.Tensor:
    """Feature map of a single node matrix (L, d) or a padded batch (B, L, d)."""
    X = H if H.dim() == 3 else H.unsqueeze(0)
    if lengths is None:
        lengths = [X.shape[1]] * X.shape[0]
    K = module.feature_map(X, lengths_to_mask(lengths, X.shape[1]))
    return K if H.dim() == 3 else K[0]


def classify(K: torch.Tensor, module: KernelScaledRepresentation,
             lengths: Sequence[int] | None = None) -> torch.Tensor:
    batched = K.dim() == 3
    K3 = K if batched else K.unsqueeze(0)
    if lengths is None:
        lengths = [K3.shape[2]] * K3.shape[0]
    p = module.classify(K3, lengths_to_mask(lengths, K3.shape[2]))
    return p if batched else p[0]
