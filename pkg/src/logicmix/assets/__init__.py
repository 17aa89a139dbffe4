"""Shipped language, action-rule, and blending-rule files plus the default
valuation wiring for each built-in environment."""

from __future__ import annotations

from importlib import resources

from ..lang import Language, RuleSet, parse_language, parse_rules
from ..valuation import ValuationRegistry

_FILES = {
    "mini-kangaroo": ("mini_kangaroo.lang", "mini_kangaroo.rules",
                      "mini_kangaroo_blend.rules"),
    "mini-seaquest": ("mini_seaquest.lang", "mini_seaquest.rules",
                      "mini_seaquest_blend.rules"),
}


def asset_text(filename: str) -> str:
    return resources.files(__package__).joinpath(filename).read_text()


def asset_names(env_name: str) -> tuple[str, str, str]:
    if env_name not in _FILES:
        raise KeyError(f"no assets for env {env_name!r}")
    return _FILES[env_name]


def load_language(env_name: str) -> Language:
    return parse_language(asset_text(asset_names(env_name)[0]))


def load_rules(env_name: str, lang: Language | None = None) -> RuleSet:
    lang = lang or load_language(env_name)
    return parse_rules(asset_text(asset_names(env_name)[1]), lang)


def load_blend_rules(env_name: str, lang: Language | None = None) -> RuleSet:
    lang = lang or load_language(env_name)
    return parse_rules(asset_text(asset_names(env_name)[2]), lang)


def default_registry(env_name: str, slot_types) -> ValuationRegistry:
    """Valuation functions + parameters matching the shipped rule files."""
    rows = {name: i for i, name in enumerate(slot_types)}
    reg = ValuationRegistry()
    if env_name == "mini-kangaroo":
        spatial = dict(tau=0.25)
        reg.register("same_floor", "same_floor", h=0.5, **spatial)
        reg.register("on_ladder", "on_ladder", w=0.5, h=0.5, **spatial)
        reg.register("left_of", "left_of", **spatial)
        reg.register("right_of", "right_of", **spatial)
        reg.register("same_floor_joey", "same_floor", h=0.5, **spatial)
        reg.register("left_of_joey", "left_of", **spatial)
        reg.register("right_of_joey", "right_of", **spatial)
        reg.register("closeby_monkey", "closeby", d=2.0, tau=0.5)
        reg.register("closeby_coconut", "closeby", d=2.0, tau=0.5)
        reg.register(
            "nothing_around", "nothing_around", d=2.0, tau=0.5,
            targets=(rows["monkey1"], rows["monkey2"], rows["coconut1"]),
        )
    elif env_name == "mini-seaquest":
        spatial = dict(tau=0.25)
        reg.register("left_of_diver", "left_of", **spatial)
        reg.register("right_of_diver", "right_of", **spatial)
        reg.register("deeper_than_diver", "deeper_than", **spatial)
        reg.register("higher_than_diver", "higher_than", **spatial)
        reg.register("visible_diver", "visible")
        reg.register("closeby_enemy", "closeby", d=2.0, tau=0.5)
        reg.register("oxygen_low", "oxygen_low", alpha=16.0, tau=4.0)
        reg.register("full_divers", "full_divers", threshold=3.5, tau=0.2)
        reg.register("not_full_divers", "not_full", threshold=3.5, tau=0.2)
    else:
        raise KeyError(f"no default registry for env {env_name!r}")
    return reg
