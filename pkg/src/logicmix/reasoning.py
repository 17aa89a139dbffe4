"""Differentiable forward chaining by message passing on the reasoning graph.

Each inference step sends atom values through the conjunction nodes
(soft AND = product) and back to head atoms (soft OR = softor, a smoothed
max). Everything is a torch op, so gradients flow to both rule weights and
input atom values.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .grounding import ReasoningGraph

DEFAULT_GAMMA = 0.01


@dataclass
class AtomValues:
    """Atom truth values in [0,1], indexed like GroundProgram.atoms."""

    values: torch.Tensor  # (..., n_atoms)
    step: int = 0


def softor(values, gamma: float = DEFAULT_GAMMA, dim: int = -1) -> torch.Tensor:
    """Smooth disjunction: gamma * log sum exp(x/gamma).

    Upper-bounds max(values); monotone in every input. Not clamped here —
    forward_reason clamps after each step.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    if not torch.is_tensor(values):
        values = torch.as_tensor(values, dtype=torch.float64)
    if values.numel() == 0:
        raise ValueError("softor needs at least one input")
    return gamma * torch.logsumexp(values / gamma, dim=dim)


def _segment_softor(prev, contrib, head_atom, gamma):
    """Per-atom softor over {prev[i]} + {contrib[c] for conj c with head i}.

    Linear in edges: per-segment max via scatter (detached shift, exact by
    LSE shift invariance) followed by a segment sum of exponentials.
    """
    n_atoms = prev.shape[-1]
    idx = head_atom.expand(prev.shape[:-1] + head_atom.shape)
    m = prev.detach().clone()
    m.scatter_reduce_(-1, idx, contrib.detach(), reduce="amax", include_self=True)
    s = torch.exp((prev - m) / gamma)
    s = s.index_add(-1, head_atom, torch.exp((contrib - m.gather(-1, idx)) / gamma))
    return m + gamma * torch.log(s)


def forward_reason(
    graph: ReasoningGraph,
    x0,
    weights,
    T: int | None = None,
    gamma: float = DEFAULT_GAMMA,
    return_conj: bool = False,
):
    """Run T bi-directional message-passing steps and return atom values.

    x0 may be (n_atoms,) or batched (..., n_atoms); columns are independent.
    ``weights`` holds one value in [0,1] per source rule. Values are clamped
    to [0,1] after every step. T=None runs a single step; policy components
    default to ``default_infer_steps`` (distinct predicates + 1) instead.
    """
    x = x0.values if isinstance(x0, AtomValues) else x0
    if not torch.is_tensor(x):
        x = torch.as_tensor(x, dtype=torch.float64)
    if T is None:
        T = 1
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    if x.shape[-1] != graph.n_atoms:
        raise ValueError(f"x0 has {x.shape[-1]} atoms, graph has {graph.n_atoms}")
    if not torch.is_tensor(weights):
        weights = torch.as_tensor(weights, dtype=torch.float64)
    if weights.shape[-1] != graph.n_rules:
        raise ValueError(
            f"weights has {weights.shape[-1]} entries, rule count is {graph.n_rules}"
        )

    atoms = x.clamp(0.0, 1.0)
    conj = torch.zeros(x.shape[:-1] + (graph.n_conj,), dtype=x.dtype)
    if graph.n_conj == 0:
        out = AtomValues(atoms, step=T)
        return (out, conj) if return_conj else out

    w_conj = weights[..., graph.head_rule]  # (..., n_conj) via source-rule binding
    for _ in range(T):
        # atom -> conjunction: soft AND of body values, kept via softor with prev
        body = atoms[..., graph.body_pad]
        body = torch.where(graph.body_mask, body, torch.ones_like(body))
        prod = body.prod(dim=-1)
        conj = softor(torch.stack((conj, prod), dim=-1), gamma).clamp(0.0, 1.0)
        # conjunction -> atom: weighted soft OR over deriving rules plus prev
        contrib = w_conj * conj
        atoms = _segment_softor(atoms, contrib, graph.head_atom, gamma).clamp(0.0, 1.0)

    out = AtomValues(atoms, step=T)
    return (out, conj) if return_conj else out


def default_infer_steps(language) -> int:
    """Default step count: number of distinct predicates + 1."""
    return len(language.predicates) + 1


def reason_gradients(graph, x0, weights, T=None, gamma=DEFAULT_GAMMA):
    """Exact reverse-mode Jacobians of output atoms w.r.t. weights and x0.

    Returns (d_out/d_weights of shape (n_atoms, n_rules),
             d_out/d_x0     of shape (n_atoms, n_atoms)).
    """
    x = torch.as_tensor(
        x0.values if isinstance(x0, AtomValues) else x0, dtype=torch.float64
    )
    w = torch.as_tensor(weights, dtype=torch.float64)
    if x.dim() != 1:
        raise ValueError("reason_gradients expects a single (unbatched) x0")

    def run(w_, x_):
        return forward_reason(graph, x_, w_, T=T, gamma=gamma).values

    jac_w, jac_x = torch.autograd.functional.jacobian(
        run, (w, x), vectorize=False, create_graph=False
    )
    return jac_w, jac_x
