"""Grounding of weighted rule sets into a bipartite forward-reasoning graph.

Ground atoms enumerate every type-valid instantiation of the declared
predicates; ground rules enumerate type-valid substitutions per rule. The
graph stores one conjunction node per ground rule and one atom node per
ground atom, with edge counts linear in the grounding size (never a
|rules| x |atoms| table).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import torch

from .lang import Atom, Constant, Language, RuleSet, Variable


class GroundingError(ValueError):
    pass


@dataclass(frozen=True)
class GroundRule:
    rule_index: int
    head: int            # index into GroundProgram.atoms
    body: tuple[int, ...]  # distinct indices into GroundProgram.atoms
    substitution: tuple[tuple[str, str], ...]  # (variable, constant) pairs


@dataclass(frozen=True)
class GroundProgram:
    language: Language
    atoms: tuple[Atom, ...]
    ground_rules: tuple[GroundRule, ...]
    n_rules: int  # source rules, for weight indexing
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._index.update({self._key(a): i for i, a in enumerate(self.atoms)})

    @staticmethod
    def _key(atom: Atom):
        return (atom.pred.name,) + tuple(a.name for a in atom.args)

    def atom_index(self, atom: Atom) -> int:
        try:
            return self._index[self._key(atom)]
        except KeyError:
            raise GroundingError(f"atom {atom} not in ground program") from None

    def atoms_of_predicate(self, name: str) -> list[int]:
        return [i for i, a in enumerate(self.atoms) if a.pred.name == name]

    def state_atom_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.atoms) if a.pred.kind == "state"]


def _enumerate_atoms(lang: Language) -> tuple[Atom, ...]:
    atoms = []
    for pred in lang.predicates:
        pools = [lang.constants_of_type(t) for t in pred.arg_types]
        for combo in itertools.product(*pools):
            atoms.append(Atom(pred, tuple(combo)))
    return tuple(atoms)


def _rule_variables(rule) -> list[tuple[str, str]]:
    """Variables of a rule with their types, in first-occurrence order."""
    seen: dict[str, str] = {}
    order: list[str] = []
    for atom in (rule.head, *rule.body):
        for arg, want_type in zip(atom.args, atom.pred.arg_types):
            if not isinstance(arg, Variable):
                continue
            if arg.name in seen:
                if seen[arg.name] != want_type:
                    raise GroundingError(
                        f"variable {arg.name} used with conflicting types "
                        f"{seen[arg.name]} and {want_type}"
                    )
            else:
                seen[arg.name] = want_type
                order.append(arg.name)
    return [(v, seen[v]) for v in order]


def ground_program(rules: RuleSet) -> GroundProgram:
    """Enumerate all type-valid ground atoms and rule instantiations."""
    lang = rules.language
    atoms = _enumerate_atoms(lang)
    gp = GroundProgram(lang, atoms, (), n_rules=len(rules.rules))

    ground: list[GroundRule] = []
    for ridx, rule in enumerate(rules.rules):
        varlist = _rule_variables(rule)
        pools = []
        for vname, vtype in varlist:
            consts = lang.constants_of_type(vtype)
            if not consts:
                raise GroundingError(
                    f"variable {vname} in rule {ridx} has type {vtype} with no constants"
                )
            pools.append(consts)
        for combo in itertools.product(*pools):
            sub = {v[0]: c for v, c in zip(varlist, combo)}
            head = _substitute(rule.head, sub)
            body_idx = []
            for b in rule.body:
                bi = gp.atom_index(_substitute(b, sub))
                if bi not in body_idx:  # conjunction is idempotent
                    body_idx.append(bi)
            ground.append(
                GroundRule(
                    rule_index=ridx,
                    head=gp.atom_index(head),
                    body=tuple(body_idx),
                    substitution=tuple((v[0], c.name) for v, c in zip(varlist, combo)),
                )
            )
    return GroundProgram(lang, atoms, tuple(ground), n_rules=len(rules.rules))


def _substitute(atom: Atom, sub: dict[str, Constant]) -> Atom:
    args = tuple(sub[a.name] if isinstance(a, Variable) else a for a in atom.args)
    return Atom(atom.pred, args)


@dataclass
class ReasoningGraph:
    """Bipartite atom/conjunction graph with prebuilt index tensors.

    body_pad/body_mask give each conjunction node its body atoms padded to
    the max body size (a property of the source rules, so linear in the
    grounding); head/conj/rule index vectors carry one entry per ground rule.
    """

    n_atoms: int
    n_conj: int
    atom_to_conj: list[tuple[int, int]]       # (atom idx, conj idx), one per body slot
    conj_to_atom: list[tuple[int, int, int]]  # (conj idx, atom idx, rule idx)
    n_rules: int
    body_pad: torch.Tensor    # long (n_conj, max_body)
    body_mask: torch.Tensor   # bool (n_conj, max_body)
    head_atom: torch.Tensor   # long (n_conj,)
    head_rule: torch.Tensor   # long (n_conj,)

    @property
    def n_edges(self) -> int:
        return len(self.atom_to_conj) + len(self.conj_to_atom)

    def dump(self, gp: GroundProgram | None = None) -> str:
        """Line-oriented debug dump: one node or edge per line."""
        lines = []
        for i in range(self.n_atoms):
            label = f" {gp.atoms[i]}" if gp is not None else ""
            lines.append(f"atom {i}{label}")
        for c in range(self.n_conj):
            lines.append(f"conj {c} rule {int(self.head_rule[c])}")
        for a, c in self.atom_to_conj:
            lines.append(f"edge a{a} -> c{c}")
        for c, a, r in self.conj_to_atom:
            lines.append(f"edge c{c} -> a{a} w{r}")
        return "\n".join(lines) + "\n"


def build_graph(gp: GroundProgram) -> ReasoningGraph:
    """One conjunction node per ground rule; edges follow body/head membership."""
    n_conj = len(gp.ground_rules)
    max_body = max((len(g.body) for g in gp.ground_rules), default=1)

    atom_to_conj = []
    conj_to_atom = []
    body_pad = torch.zeros((n_conj, max_body), dtype=torch.long)
    body_mask = torch.zeros((n_conj, max_body), dtype=torch.bool)
    head_atom = torch.zeros((n_conj,), dtype=torch.long)
    head_rule = torch.zeros((n_conj,), dtype=torch.long)

    for c, g in enumerate(gp.ground_rules):
        for j, b in enumerate(g.body):
            atom_to_conj.append((b, c))
            body_pad[c, j] = b
            body_mask[c, j] = True
        conj_to_atom.append((c, g.head, g.rule_index))
        head_atom[c] = g.head
        head_rule[c] = g.rule_index

    return ReasoningGraph(
        n_atoms=len(gp.atoms),
        n_conj=n_conj,
        atom_to_conj=atom_to_conj,
        conj_to_atom=conj_to_atom,
        n_rules=gp.n_rules,
        body_pad=body_pad,
        body_mask=body_mask,
        head_atom=head_atom,
        head_rule=head_rule,
    )
