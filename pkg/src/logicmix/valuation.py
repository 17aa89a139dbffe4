"""Differentiable valuation functions: object-centric states -> state atoms.

An ObjectState is an n x m matrix, one row per object slot with columns
[objectness, x, y, orientation, value]. Each state predicate maps to one
template below; evaluate_state_atoms additionally gates every atom by the
objectness of its non-player arguments, so dropped objects silence all
atoms that mention them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .grounding import GroundProgram
from .reasoning import AtomValues

# column layout of an object slot
OBJ, X, Y, ORI, VAL = range(5)
N_COLUMNS = 5


class ValuationError(KeyError):
    """State predicate without a registered valuation function."""


@dataclass
class ObjectState:
    data: torch.Tensor            # (n, N_COLUMNS) float64
    slot_types: tuple[str, ...]   # constant name per row

    def __post_init__(self):
        if self.data.shape[-2] != len(self.slot_types):
            raise ValueError("slot_types must name every row of the matrix")

    def row(self, constant_name: str) -> int:
        try:
            return self.slot_types.index(constant_name)
        except ValueError:
            raise ValuationError(f"no object slot for constant {constant_name}") from None


def _sig(x):
    return torch.sigmoid(x)


def _col(z, row, col):
    return z[..., row, col]


def _dist(z, p, o):
    dx = _col(z, p, X) - _col(z, o, X)
    dy = _col(z, p, Y) - _col(z, o, Y)
    return torch.sqrt(dx * dx + dy * dy + 1e-12)


# Each template takes (z, rows) with rows resolved from the atom's arguments.
# Geometry uses screen coordinates: y grows downward.

def v_closeby(z, rows, d=2.0, tau=0.5, **_):
    p, o = rows
    return _sig((d - _dist(z, p, o)) / tau)


def v_left_of(z, rows, tau=0.5, **_):
    p, o = rows
    return _sig((_col(z, o, X) - _col(z, p, X)) / tau)


def v_right_of(z, rows, tau=0.5, **_):
    p, o = rows
    return _sig((_col(z, p, X) - _col(z, o, X)) / tau)


def v_above(z, rows, tau=0.5, **_):
    p, o = rows
    return _sig((_col(z, o, Y) - _col(z, p, Y)) / tau)


def v_below(z, rows, tau=0.5, **_):
    p, o = rows
    return _sig((_col(z, p, Y) - _col(z, o, Y)) / tau)


# aliases with the water-column reading: deeper = larger y
v_deeper_than = v_below
v_higher_than = v_above


def v_same_floor(z, rows, h=0.5, tau=0.5, **_):
    p, o = rows
    return _sig((h - torch.abs(_col(z, p, Y) - _col(z, o, Y))) / tau)


def v_on_ladder(z, rows, w=0.5, h=0.5, tau=0.5, **_):
    p, o = rows
    near_x = _sig((w - torch.abs(_col(z, p, X) - _col(z, o, X))) / tau)
    return near_x * v_same_floor(z, rows, h=h, tau=tau)


def v_is_empty(z, rows, alpha=16.0, tau=4.0, **_):
    (o,) = rows
    return _sig((alpha - _col(z, o, VAL)) / tau)


def v_full(z, rows, threshold=5.5, tau=0.2, **_):
    # shifted sigmoid on the carried count; finite gradients at capacity
    (p,) = rows
    return _sig((_col(z, p, VAL) - threshold) / tau)


def v_not_full(z, rows, threshold=5.5, tau=0.2, **_):
    return 1.0 - v_full(z, rows, threshold=threshold, tau=tau)


def v_visible(z, rows, **_):
    # objectness itself is applied by the central gating
    (o,) = rows
    return torch.ones_like(_col(z, o, OBJ))


def v_nothing_around(z, rows, targets=(), d=2.0, tau=0.5, **_):
    """Product over hazard slots of (1 - closeby * objectness)."""
    (p,) = rows
    out = torch.ones_like(_col(z, p, OBJ))
    for t in targets:
        t_row = torch.full_like(p, t) if torch.is_tensor(p) else t
        near = _sig((d - _dist(z, p, t_row)) / tau) * _col(z, t_row, OBJ)
        out = out * (1.0 - near)
    return out


TEMPLATES = {
    "closeby": v_closeby,
    "left_of": v_left_of,
    "right_of": v_right_of,
    "above": v_above,
    "below": v_below,
    "deeper_than": v_deeper_than,
    "higher_than": v_higher_than,
    "same_floor": v_same_floor,
    "on_ladder": v_on_ladder,
    "is_empty": v_is_empty,
    "oxygen_low": v_is_empty,
    "full_divers": v_full,
    "not_full": v_not_full,
    "visible": v_visible,
    "nothing_around": v_nothing_around,
}


@dataclass
class ValuationRegistry:
    """Maps each state predicate to a template function plus parameters."""

    entries: dict = field(default_factory=dict)  # name -> (fn, params)

    def register(self, pred_name: str, template: str, **params):
        if template not in TEMPLATES:
            raise ValuationError(f"unknown valuation template {template}")
        self.entries[pred_name] = (TEMPLATES[template], dict(params))
        return self

    def value(self, pred_name: str, z: torch.Tensor, rows) -> torch.Tensor:
        if pred_name not in self.entries:
            raise ValuationError(f"no valuation registered for predicate {pred_name}")
        fn, params = self.entries[pred_name]
        return fn(z, rows, **params)

    def validate(self, language) -> None:
        missing = [
            p.name for p in language.predicates_of_kind("state")
            if p.name not in self.entries
        ]
        if missing:
            raise ValuationError(f"no valuation registered for predicates: {missing}")

    def apply_overrides(self, overrides: dict) -> None:
        """Apply config overrides like {'closeby': {'d': 3.0}}."""
        for pred, params in overrides.items():
            if pred not in self.entries:
                raise ValuationError(f"valuation override for unknown predicate {pred}")
            self.entries[pred][1].update({k: float(v) for k, v in params.items()})


def _slot_rows(slot_types) -> dict:
    return {name: i for i, name in enumerate(slot_types)}


class ValuationPlan:
    """Per-predicate vectorized evaluation order for one ground program.

    Precomputes, for every state predicate, the atom indices and argument-row
    tensors, so a batched evaluation is one template call per predicate
    instead of one per ground atom.
    """

    def __init__(self, gp: GroundProgram, slot_types):
        rows_by_const = _slot_rows(slot_types)
        self.n_atoms = len(gp.atoms)
        self.specs = []
        index_chunks = []
        for pred in gp.language.predicates_of_kind("state"):
            idxs = gp.atoms_of_predicate(pred.name)
            if not idxs:
                continue
            arg_rows = []
            for pos in range(pred.arity):
                rows = []
                for i in idxs:
                    const = gp.atoms[i].args[pos]
                    if const.name not in rows_by_const:
                        raise ValuationError(
                            f"ground atom {gp.atoms[i]} references constant "
                            f"{const.name} with no object slot"
                        )
                    rows.append(rows_by_const[const.name])
                arg_rows.append(torch.tensor(rows, dtype=torch.long))
            gates = [p for p, t in enumerate(pred.arg_types) if t != "player"]
            self.specs.append((pred.name, tuple(arg_rows), gates))
            index_chunks.append(torch.tensor(idxs, dtype=torch.long))
        self.scatter_index = (
            torch.cat(index_chunks) if index_chunks
            else torch.zeros(0, dtype=torch.long)
        )

    def evaluate(self, z: torch.Tensor, reg: "ValuationRegistry") -> AtomValues:
        values = z.new_zeros(z.shape[:-2] + (self.n_atoms,))
        if self.specs:
            chunks = []
            for name, arg_rows, gates in self.specs:
                v = reg.value(name, z, arg_rows)
                for pos in gates:
                    v = v * _col(z, arg_rows[pos], OBJ)
                chunks.append(v)
            src = torch.cat(chunks, dim=-1)
            idx = self.scatter_index.expand(src.shape)
            values = values.scatter(-1, idx, src)
        return AtomValues(values.clamp(0.0, 1.0), step=0)


def evaluate_state_atoms(z, reg: ValuationRegistry, gp: GroundProgram,
                         slot_types=None) -> AtomValues:
    """Fill state-atom entries of x0 from z; action/blend atoms stay 0.

    z: (..., n, N_COLUMNS) tensor or an ObjectState. Atom values are gated
    by the objectness of each non-player argument.
    """
    if isinstance(z, ObjectState):
        slot_types = z.slot_types
        z = z.data
    if slot_types is None:
        raise ValueError("slot_types required when z is a raw tensor")
    if not torch.is_tensor(z):
        z = torch.as_tensor(z, dtype=torch.float64)
    rows_by_const = _slot_rows(slot_types)

    batch = z.shape[:-2]
    values = torch.zeros(batch + (len(gp.atoms),), dtype=z.dtype)
    for i in gp.state_atom_indices():
        atom = gp.atoms[i]
        rows = []
        for arg in atom.args:
            if arg.name not in rows_by_const:
                raise ValuationError(
                    f"ground atom {atom} references constant {arg.name} "
                    f"with no object slot"
                )
            rows.append(rows_by_const[arg.name])
        v = reg.value(atom.pred.name, z, rows)
        for arg, row in zip(atom.args, rows):
            if arg.type != "player":
                v = v * _col(z, row, OBJ)
        values[..., i] = v
    return AtomValues(values.clamp(0.0, 1.0), step=0)


def valuation_gradients(z, reg, gp, slot_types=None):
    """Jacobian of every state-atom value w.r.t. every entry of z.

    Returns a tensor of shape (n_atoms, n, N_COLUMNS); finite-difference
    checkable.
    """
    if isinstance(z, ObjectState):
        slot_types = z.slot_types
        z = z.data
    z = torch.as_tensor(z, dtype=torch.float64)
    if z.dim() != 2:
        raise ValueError("valuation_gradients expects a single (n, m) state")

    def run(z_):
        return evaluate_state_atoms(z_, reg, gp, slot_types).values

    return torch.autograd.functional.jacobian(run, z, vectorize=False)
