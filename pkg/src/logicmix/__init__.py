"""logicmix: a neuro-symbolic RL engine that blends a differentiable
first-order logic policy with a neural policy through a state-dependent
weighting, trained end to end with PPO."""

from .lang import (
    Atom, Constant, Language, ParseError, Predicate, Rule, RuleSet, Variable,
    format_rule, parse_language, parse_rules,
)
from .grounding import GroundProgram, GroundingError, ReasoningGraph, build_graph, ground_program
from .reasoning import AtomValues, forward_reason, reason_gradients, softor
from .valuation import ObjectState, ValuationRegistry, evaluate_state_atoms, valuation_gradients
from .policy import (
    BlendedPolicy, BlendedPolicyOutput, LogicBlender, LogicPolicy,
    PolicyConfigError, sample_action,
)
from .envs import EnvSpec, Modification, VectorEnv, apply_objectness_noise, make_env

__version__ = "0.1.0"
