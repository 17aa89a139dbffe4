import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from logicmix.lang import parse_language, parse_rules


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


KANGAROO_EXAMPLE_LANG = """
type image. type player. type ladder.
const img:image. const player:player. const ladder1:ladder.
pred up/1 action (image).
pred right/1 action (image).
pred left/1 action (image).
pred on_ladder/2 state (player,ladder).
pred same_floor/2 state (player,ladder).
pred right_of/2 state (player,ladder).
pred left_of/2 state (player,ladder).
"""

# the worked message-passing program: the right action is fed by the
# 0.8-valued atom, the left action by its mirror
KANGAROO_EXAMPLE_RULES = """
1.0 up(X):-on_ladder(Player,Ladder),same_floor(Player,Ladder).
1.0 right(X):-right_of(Player,Ladder),same_floor(Player,Ladder).
1.0 left(X):-left_of(Player,Ladder),same_floor(Player,Ladder).
"""


@pytest.fixture(scope="session")
def worked_example():
    lang = parse_language(KANGAROO_EXAMPLE_LANG)
    rules = parse_rules(KANGAROO_EXAMPLE_RULES, lang)
    return lang, rules


def worked_example_x0(gp, same_floor=0.9, on_ladder=0.3, right_of=0.8, left_of=0.0):
    x0 = torch.zeros(len(gp.atoms), dtype=torch.float64)
    x0[gp.atoms_of_predicate("same_floor")[0]] = same_floor
    x0[gp.atoms_of_predicate("on_ladder")[0]] = on_ladder
    x0[gp.atoms_of_predicate("right_of")[0]] = right_of
    x0[gp.atoms_of_predicate("left_of")[0]] = left_of
    return x0
