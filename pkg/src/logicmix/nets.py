"""Neural building blocks: actor with shared raw-observation trunk, raw
critic head, object-centric critic, and the optional neural blender."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn


def layer_init(layer, std=np.sqrt(2), bias_const=0.0):
    torch.nn.init.orthogonal_(layer.weight, std)
    torch.nn.init.constant_(layer.bias, bias_const)
    return layer


class ActorNet(nn.Module):
    """Flattened raw observation -> action logits, plus a value head that
    shares the 512-unit trunk."""

    def __init__(self, raw_dim: int, n_actions: int, hidden: int = 512):
        super().__init__()
        self.trunk = nn.Sequential(
            layer_init(nn.Linear(raw_dim, hidden)),
            nn.ReLU(),
        )
        self.policy_head = layer_init(nn.Linear(hidden, n_actions), std=0.01)
        self.value_head = layer_init(nn.Linear(hidden, 1), std=1.0)
        self.double()

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.policy_head(self.trunk(torch.flatten(x, start_dim=1)))

    def value(self, x: torch.Tensor) -> torch.Tensor:
        return self.value_head(self.trunk(torch.flatten(x, start_dim=1))).squeeze(-1)

    def forward(self, x: torch.Tensor):
        h = self.trunk(torch.flatten(x, start_dim=1))
        return self.policy_head(h), self.value_head(h).squeeze(-1)


class ObjectCentricCritic(nn.Module):
    """Flattened object-centric state -> scalar value (120 -> 60 hidden)."""

    def __init__(self, z_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            layer_init(nn.Linear(z_dim, 120)),
            nn.ReLU(),
            layer_init(nn.Linear(120, 60)),
            nn.ReLU(),
            layer_init(nn.Linear(60, 1), std=1.0),
        )
        self.double()

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.net(torch.flatten(z, start_dim=1)).squeeze(-1)


class NeuralBlender(nn.Module):
    """Flattened raw observation -> one blending logit."""

    def __init__(self, raw_dim: int, hidden: int = 64):
        super().__init__()
        self.net = nn.Sequential(
            layer_init(nn.Linear(raw_dim, hidden)),
            nn.ReLU(),
            layer_init(nn.Linear(hidden, 1), std=0.01),
        )
        self.double()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(torch.flatten(x, start_dim=1)).squeeze(-1)
