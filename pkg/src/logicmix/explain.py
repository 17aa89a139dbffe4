"""Dual explanations: rule/atom attributions on the logic side and
integrated-gradients maps on the neural side, annotated with beta.

The logic side reports two gradient views: gradients of the chosen action's
deduced value (exactly zero for atoms that feed no rule of that action) and
gradients of the softmax policy probability (finite-difference checkable
against pi_logic).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import torch

from .lang import format_rule
from .policy import BlendedPolicy, LogicPolicy, sample_action
from .reasoning import AtomValues


@dataclass
class LogicAttribution:
    action: int
    value_atom_grads: torch.Tensor   # d value(action) / d state atoms, (n_atoms,)
    prob_atom_grads: torch.Tensor    # d pi(action)  / d state atoms, (n_atoms,)
    prob_z_grads: torch.Tensor       # d pi(action)  / d z, (n, m)
    value_z_grads: torch.Tensor      # d value(action) / d z, (n, m)


@dataclass
class FiredRule:
    rule_index: int
    substitution: tuple
    score: float
    text: str


@dataclass
class Explanation:
    action: int
    action_name: str
    beta: float
    fired_rules: list          # top-k FiredRule, sorted by score desc
    logic: LogicAttribution
    raw_attribution: torch.Tensor  # same shape as x
    report: str


def logic_attribution(logic: LogicPolicy, z, slot_types, action: int) -> LogicAttribution:
    """Chain valuation and reasoning gradients for one action."""
    n_actions = len(logic.action_atoms)
    if not 0 <= action < n_actions:
        raise IndexError(f"action {action} out of range ({n_actions} actions)")
    z = torch.as_tensor(z, dtype=torch.float64)

    def through_atoms(fn):
        x0 = logic.state_atoms(z, slot_types)
        vals = x0.values.detach().requires_grad_(True)
        out = fn(vals)
        (g,) = torch.autograd.grad(out, vals)
        return g

    def through_z(fn):
        zz = z.detach().requires_grad_(True)
        x0 = logic.state_atoms(zz, slot_types)
        out = fn(x0.values)
        (g,) = torch.autograd.grad(out, zz)
        return g

    def action_value(vals):
        atoms = logic.atom_values(AtomValues(vals))
        return logic.action_values(atoms)[..., action]

    def action_prob(vals):
        atoms = logic.atom_values(AtomValues(vals))
        return torch.softmax(logic.action_values(atoms), dim=-1)[..., action]

    return LogicAttribution(
        action=action,
        value_atom_grads=through_atoms(action_value),
        prob_atom_grads=through_atoms(action_prob),
        prob_z_grads=through_z(action_prob),
        value_z_grads=through_z(action_value),
    )


def integrated_gradients(fn, x, steps: int = 64, baseline=None) -> torch.Tensor:
    """Midpoint-rule integrated gradients of scalar fn along baseline -> x.

    Completeness: attributions sum to fn(x) - fn(baseline) up to the Riemann
    error of ``steps`` midpoints; exact for linear fn at any step count.
    """
    x = torch.as_tensor(x, dtype=torch.float64)
    base = torch.zeros_like(x) if baseline is None else torch.as_tensor(
        baseline, dtype=torch.float64
    )
    diff = x - base
    total = torch.zeros_like(x)
    for k in range(steps):
        point = (base + (k + 0.5) / steps * diff).detach().requires_grad_(True)
        out = fn(point)
        (g,) = torch.autograd.grad(out, point)
        total += g
    return diff * total / steps


def neural_policy_attribution(policy: BlendedPolicy, x, action: int,
                              steps: int = 64, baseline=None) -> torch.Tensor:
    """Integrated gradients of pi_neural(action | x) over the raw grid."""

    def prob(point):
        return torch.softmax(policy.actor.logits(point.unsqueeze(0)), dim=-1)[0, action]

    return integrated_gradients(prob, x, steps=steps, baseline=baseline)


def fired_rules(logic: LogicPolicy, z, slot_types, k: int = 3) -> list:
    """Ground rules ranked by firing score = conjunction value x rule weight."""
    x0 = logic.state_atoms(torch.as_tensor(z, dtype=torch.float64), slot_types)
    with torch.no_grad():
        _, conj = logic.atom_values(x0, return_conj=True)
        weights = logic.rule_weights()
    scored = []
    for c, g in enumerate(logic.gp.ground_rules):
        score = float(conj[c] * weights[g.rule_index])
        rule = logic.ruleset.rules[g.rule_index]
        scored.append(FiredRule(
            rule_index=g.rule_index,
            substitution=g.substitution,
            score=score,
            text=format_rule(rule),
        ))
    scored.sort(key=lambda f: (-f.score, f.rule_index, f.substitution))
    return scored[:k]


def explain_state(policy: BlendedPolicy, z, x, k: int = 3,
                  action: int | None = None, ig_steps: int = 64) -> Explanation:
    """Assemble the dual explanation for one state."""
    z = torch.as_tensor(z, dtype=torch.float64)
    x = torch.as_tensor(x, dtype=torch.float64)
    with torch.no_grad():
        out = policy(z.unsqueeze(0), x.unsqueeze(0))
    if action is None:
        action = int(out.dist[0].argmax())
    beta = float(out.beta[0])
    attribution = logic_attribution(policy.logic_policy, z, policy.slot_types, action)
    raw_attr = neural_policy_attribution(policy, x, action, steps=ig_steps)
    top = fired_rules(policy.logic_policy, z, policy.slot_types, k=k)
    name = policy.logic_policy.ruleset.language.action_names[action]
    report = _render_report(name, beta, top, out)
    return Explanation(
        action=action, action_name=name, beta=beta, fired_rules=top,
        logic=attribution, raw_attribution=raw_attr, report=report,
    )


def _render_report(action_name, beta, top, out) -> str:
    lines = [
        f"action: {action_name}",
        f"beta (neural weight): {beta:.4f}",
        f"logic weight: {1.0 - beta:.4f}",
        "",
    ]
    logic_first = beta < 0.5
    rule_block = ["fired rules (score = conjunction x weight):"]
    for f in top:
        sub = ",".join(f"{v}={c}" for v, c in f.substitution)
        rule_block.append(f"  [{f.score:.4f}] {f.text}  {{{sub}}}")
    neural_block = [
        f"neural policy max prob: {float(out.neural_dist[0].max()):.4f}",
        f"logic policy max prob: {float(out.logic_dist[0].max()):.4f}",
    ]
    if logic_first:
        lines += rule_block + [""] + neural_block
    else:
        lines += neural_block + [""] + rule_block
    return "\n".join(lines) + "\n"


def write_report_dir(policy: BlendedPolicy, env, steps: int, out_dir,
                     seed: int = 0, k: int = 3, ig_steps: int = 64):
    """Roll the policy for ``steps`` env steps, one report directory per step,
    plus a beta timeline CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gen = torch.Generator()
    gen.manual_seed(seed)
    raw, z = env.reset()
    timeline = []
    for t in range(steps):
        with torch.no_grad():
            out = policy(z.data.unsqueeze(0), raw.unsqueeze(0))
            action, _ = sample_action(out, gen)
        exp = explain_state(policy, z.data, raw, k=k,
                            action=int(action[0]), ig_steps=ig_steps)
        step_dir = out_dir / f"step_{t:04d}"
        step_dir.mkdir(exist_ok=True)
        (step_dir / "report.txt").write_text(exp.report)
        _write_matrix_csv(step_dir / "logic_attrib.csv", exp.logic.prob_z_grads)
        _write_channel_csv(step_dir / "neural_attrib.csv", exp.raw_attribution,
                           env.channel_names)
        timeline.append(
            (t, float(out.beta[0]),
             float(out.logic_dist[0].max()), float(out.neural_dist[0].max()))
        )
        raw, z, _, done = env.step(int(action[0]))
        if done:
            raw, z = env.reset()
    with open(out_dir / "timeline.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "beta", "max_logic_prob", "max_neural_prob"])
        writer.writerows(timeline)
    return out_dir


def _write_matrix_csv(path, matrix: torch.Tensor):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in matrix.tolist():
            writer.writerow([f"{v:.6g}" for v in row])


def _write_channel_csv(path, attr: torch.Tensor, channel_names):
    """(F, W, H, C) attribution summed over frames, one W x H block per channel."""
    per_channel = attr.sum(dim=0)  # (W, H, C)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for c, name in enumerate(channel_names):
            f.write(f"# channel {name}\n")
            for xcol in per_channel[..., c].tolist():
                writer.writerow([f"{v:.6g}" for v in xcol])
