"""Logic, neural, and blended action distributions plus the hybrid value.

The logic policy deduces action-atom values by forward reasoning and takes
a softmax over them; the blender produces the state-dependent weight beta
of the neural policy; the blended distribution is the convex mixture
beta * neural + (1 - beta) * logic, with the value blended the same way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .grounding import build_graph, ground_program
from .lang import RuleSet
from .reasoning import AtomValues, default_infer_steps, forward_reason, softor
from .valuation import ValuationPlan, ValuationRegistry

BLENDER_MODES = ("logic", "neural", "rigid-logic")


class PolicyConfigError(ValueError):
    pass


def weight_logit(w: float) -> float:
    w = min(max(w, 1e-6), 1.0 - 1e-6)
    return math.log(w / (1.0 - w))


@dataclass
class BlendedPolicyOutput:
    dist: torch.Tensor          # (B, A)
    beta: torch.Tensor          # (B,)
    value: torch.Tensor         # (B,)
    logic_dist: torch.Tensor    # (B, A)
    neural_dist: torch.Tensor   # (B, A)
    atom_values: AtomValues     # action-graph atom values, (B, n_atoms)


class LogicComponent(nn.Module):
    """Shared machinery: grounded rule set + trainable weight logits."""

    def __init__(self, ruleset: RuleSet, registry: ValuationRegistry,
                 infer_steps: int | None = None, gamma: float = 0.01):
        super().__init__()
        self.ruleset = ruleset
        self.registry = registry
        registry.validate(ruleset.language)
        self.gp = ground_program(ruleset)
        self.graph = build_graph(self.gp)
        self.infer_steps = (
            infer_steps if infer_steps is not None
            else default_infer_steps(ruleset.language)
        )
        self.gamma = gamma
        logits = torch.tensor(
            [weight_logit(r.weight) for r in ruleset.rules], dtype=torch.float64
        )
        self.weight_logits = nn.Parameter(logits)
        self._plan = None
        self._plan_key = None

    def rule_weights(self) -> torch.Tensor:
        return torch.sigmoid(self.weight_logits)

    def atom_values(self, x0: AtomValues, return_conj: bool = False):
        return forward_reason(
            self.graph, x0, self.rule_weights(),
            T=self.infer_steps, gamma=self.gamma, return_conj=return_conj,
        )

    def state_atoms(self, z: torch.Tensor, slot_types) -> AtomValues:
        key = tuple(slot_types)
        if self._plan_key != key:
            self._plan = ValuationPlan(self.gp, key)
            self._plan_key = key
        return self._plan.evaluate(z, self.registry)


class LogicPolicy(LogicComponent):
    """Action distribution = softmax over deduced action-atom values."""

    def __init__(self, ruleset, registry, action_names, infer_steps=None, gamma=0.01):
        super().__init__(ruleset, registry, infer_steps, gamma)
        declared = ruleset.language.action_names
        if list(action_names) != declared:
            raise PolicyConfigError(
                f"action set mismatch: env has {list(action_names)}, "
                f"language declares {declared}"
            )
        self.action_atoms = []
        for name in declared:
            idxs = self.gp.atoms_of_predicate(name)
            if not idxs:
                raise PolicyConfigError(f"action predicate {name} has no ground atoms")
            self.action_atoms.append(idxs)

    def action_values(self, atoms: AtomValues) -> torch.Tensor:
        """Per-action value; multiple groundings of one head merge by softor."""
        cols = []
        for idxs in self.action_atoms:
            if len(idxs) == 1:
                cols.append(atoms.values[..., idxs[0]])
            else:
                cols.append(softor(atoms.values[..., idxs], self.gamma))
        return torch.stack(cols, dim=-1)

    def distribution_from_atoms(self, x0: AtomValues, return_details: bool = False):
        atoms, conj = self.atom_values(x0, return_conj=True)
        dist = torch.softmax(self.action_values(atoms), dim=-1)
        if return_details:
            return dist, atoms, conj
        return dist

    def distribution(self, z: torch.Tensor, slot_types,
                     return_details: bool = False):
        return self.distribution_from_atoms(
            self.state_atoms(z, slot_types), return_details
        )


class LogicBlender(LogicComponent):
    """beta from the deduced neural/1 and logic/1 atom values."""

    def __init__(self, ruleset, registry, infer_steps=None, gamma=0.01,
                 rigid: bool = False):
        super().__init__(ruleset, registry, infer_steps, gamma)
        self.rigid = rigid
        self.neural_atoms = self.gp.atoms_of_predicate("neural")
        self.logic_atoms = self.gp.atoms_of_predicate("logic")
        if not self.neural_atoms or not self.logic_atoms:
            raise PolicyConfigError(
                "logic blending needs neural/1 and logic/1 atoms in the language"
            )

    def blend_values_from_atoms(self, x0: AtomValues):
        atoms = self.atom_values(x0)
        v_n = atoms.values[..., self.neural_atoms[0]]
        v_l = atoms.values[..., self.logic_atoms[0]]
        return v_n, v_l

    def blend_values(self, z, slot_types):
        return self.blend_values_from_atoms(self.state_atoms(z, slot_types))

    def beta_from_atoms(self, x0: AtomValues) -> torch.Tensor:
        v_n, v_l = self.blend_values_from_atoms(x0)
        b = torch.softmax(torch.stack((v_n, v_l), dim=-1), dim=-1)[..., 0]
        if self.rigid:
            b = (b > 0.5).to(b.dtype)
        return b

    def beta(self, z, slot_types) -> torch.Tensor:
        return self.beta_from_atoms(self.state_atoms(z, slot_types))


class BlendedPolicy(nn.Module):
    """Full agent: logic policy + neural actor/critics + blending module."""

    def __init__(self, logic_policy: LogicPolicy, actor, oc_critic,
                 blender, slot_types, force_beta: float | None = None):
        super().__init__()
        self.logic_policy = logic_policy
        self.actor = actor
        self.oc_critic = oc_critic
        self.blender = blender  # LogicBlender | NeuralBlender | None
        self.slot_types = tuple(slot_types)
        if force_beta is not None and not 0.0 <= force_beta <= 1.0:
            raise PolicyConfigError(f"force_beta {force_beta} outside [0,1]")
        self.force_beta = force_beta
        if force_beta is None and blender is None:
            raise PolicyConfigError("need a blender unless force_beta is set")
        # both graphs enumerate atoms from the same language, so the state-atom
        # vector can be computed once and shared
        self._shared_atoms = (
            isinstance(blender, LogicBlender)
            and blender.gp.atoms == logic_policy.gp.atoms
        )

    def neural_distribution(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.actor.logits(x), dim=-1)

    def logic_distribution(self, z: torch.Tensor) -> torch.Tensor:
        return self.logic_policy.distribution(z, self.slot_types)

    def beta(self, z: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        if self.force_beta is not None:
            return torch.full(z.shape[:-2], self.force_beta, dtype=z.dtype)
        if isinstance(self.blender, LogicBlender):
            return self.blender.beta(z, self.slot_types)
        return torch.sigmoid(self.blender(x))

    def forward(self, z: torch.Tensor, x: torch.Tensor) -> BlendedPolicyOutput:
        if self._shared_atoms:
            x0 = self.logic_policy.state_atoms(z, self.slot_types)
            beta = self.blender.beta_from_atoms(x0)
            logic_dist, atoms, _ = self.logic_policy.distribution_from_atoms(
                x0, return_details=True
            )
        else:
            beta = self.beta(z, x)
            logic_dist, atoms, _ = self.logic_policy.distribution(
                z, self.slot_types, return_details=True
            )
        logits, raw_value = self.actor(x)
        neural_dist = torch.softmax(logits, dim=-1)
        b = beta.unsqueeze(-1)
        dist = b * neural_dist + (1.0 - b) * logic_dist
        value = beta * raw_value + (1.0 - beta) * self.oc_critic(z)
        return BlendedPolicyOutput(
            dist=dist, beta=beta, value=value,
            logic_dist=logic_dist, neural_dist=neural_dist, atom_values=atoms,
        )

    def evaluate_actions(self, z, x, actions):
        """Log-prob/entropy/value/beta for a minibatch (used by PPO updates)."""
        out = self.forward(z, x)
        logp = torch.log(out.dist.gather(-1, actions.unsqueeze(-1)).squeeze(-1))
        entropy = -(out.dist * torch.log(out.dist)).sum(-1)
        return logp, entropy, out.value, out.beta

    def param_groups(self) -> dict[str, list[nn.Parameter]]:
        groups = {
            "neural": list(self.actor.parameters()) + list(self.oc_critic.parameters()),
            "logic": [self.logic_policy.weight_logits],
            "blender": [],
        }
        if self.blender is not None and self.force_beta is None:
            groups["blender"] = list(self.blender.parameters())
        return groups


def sample_action(output: BlendedPolicyOutput, rng) -> tuple[torch.Tensor, torch.Tensor]:
    """Categorical sample + log-prob. ``rng`` is a torch.Generator or int seed."""
    if isinstance(rng, int):
        gen = torch.Generator()
        gen.manual_seed(rng)
    else:
        gen = rng
    action = torch.multinomial(output.dist, num_samples=1, generator=gen).squeeze(-1)
    logp = torch.log(output.dist.gather(-1, action.unsqueeze(-1)).squeeze(-1))
    return action, logp
