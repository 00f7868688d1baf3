from __future__ import annotations

import pytest

from switchboard.errors import (
    DuplicateCommand,
    InvalidPreset,
    RouteNotFound,
    UnknownCommand,
)
from switchboard.params import GenerationParams
from switchboard.presets import (
    ModelPreset,
    PresetEngine,
    parse_template,
    substitute,
)

from oracles import reference_scan, reference_substitute


@pytest.fixture
def presets(store, registry):
    engine = PresetEngine(store, registry)
    engine.load()
    return engine


# -- template parsing ---------------------------------------------------------

def test_parse_simple_variables():
    found = parse_template("Translate [text] into [language].")
    assert [(v.name, v.start, v.end) for v in found] == [
        ("text", 10, 16), ("language", 22, 32)]
    assert [v.order for v in found] == [0, 1]


def test_spans_reconstruct_source():
    body = "a [x] b [ment-ion] c"
    for var in parse_template(body):
        assert body[var.start:var.end] == f"[{var.name}]"


@pytest.mark.parametrize("body,expected_names", [
    ("no variables here", []),
    ("[]", []),                       # empty name is literal
    ("[unclosed", []),
    ("unopened]", []),
    ("[a\nb]", []),                   # newline breaks a variable
    ("[[inner]", ["inner"]),          # failed open retries at the next char
    ("[a][b]", ["a", "b"]),
    ("[a[b]", ["b"]),
    ("[a]]", ["a"]),
    ("x[ spaced name ]y", [" spaced name "]),
    ("[dup] and [dup]", ["dup", "dup"]),
])
def test_parse_edge_cases(body, expected_names):
    assert [v.name for v in parse_template(body)] == expected_names


def test_parse_agrees_with_reference_scanner_on_edges():
    cases = ["", "[", "]", "[]", "[[]]", "[a][", "][a]", "[a\n]", "[[a]]",
             "e[e]e[e", "[x][][y]", "a]b[c]d[e]f["]
    for body in cases:
        got = [(v.name, v.start, v.end) for v in parse_template(body)]
        assert got == reference_scan(body), body


def test_substitute_known_and_unknown():
    body = "Hi [who], it is [day]."
    out = substitute(body, {"who": "sam"})
    assert out == "Hi sam, it is [day]."


def test_substitute_values_are_not_rescanned():
    out = substitute("[a] [b]", {"a": "[b]", "b": "X"})
    assert out == "[b] X"
    assert out == reference_substitute("[a] [b]", {"a": "[b]", "b": "X"})


def test_substitute_repeated_variable():
    assert substitute("[x]+[x]", {"x": "1"}) == "1+1"


# -- prompt presets -----------------------------------------------------------

def test_register_and_resolve_command(presets):
    preset = presets.register_prompt("/summarize", "Summarize",
                                     "Summarize: [text]")
    assert preset.command == "/summarize"
    hit = presets.resolve_command("/summarize the article")
    assert hit.body == "Summarize: [text]"


def test_command_is_normalized_lowercase(presets):
    preset = presets.register_prompt(" /GREET ", "Greet", "hi [name]")
    assert preset.command == "/greet"


def test_invalid_command_shapes_rejected(presets):
    for bad in ("summarize", "/", "/has space", "/éxo", "/semi;colon"):
        with pytest.raises(InvalidPreset):
            presets.register_prompt(bad, "t", "body")


def test_empty_body_rejected(presets):
    with pytest.raises(InvalidPreset):
        presets.register_prompt("/x", "t", "")


def test_duplicate_command_rejected(presets):
    presets.register_prompt("/x", "t", "body")
    with pytest.raises(DuplicateCommand):
        presets.register_prompt("/x", "other", "body2")


def test_resolve_requires_leading_slash(presets):
    presets.register_prompt("/x", "t", "body")
    with pytest.raises(UnknownCommand):
        presets.resolve_command("x plain text")
    with pytest.raises(UnknownCommand):
        presets.resolve_command("")


def test_resolve_unknown_command(presets):
    with pytest.raises(UnknownCommand):
        presets.resolve_command("/missing")


def test_prefix_search_sorted(presets):
    for cmd in ("/beta", "/alpha", "/align"):
        presets.register_prompt(cmd, cmd, "b")
    assert [p.command for p in presets.prefix_search("/al")] == [
        "/align", "/alpha"]
    assert [p.command for p in presets.list_prompts()] == [
        "/align", "/alpha", "/beta"]


def test_prompt_presets_persist_across_reload(presets, store, registry):
    presets.register_prompt("/keep", "Keep", "body [v]")
    fresh = PresetEngine(store, registry)
    fresh.load()
    assert fresh.get_prompt("/keep").body == "body [v]"


def test_remove_prompt(presets):
    presets.register_prompt("/gone", "t", "b")
    presets.remove_prompt("/gone")
    with pytest.raises(UnknownCommand):
        presets.get_prompt("/gone")


# -- model presets ------------------------------------------------------------

def test_create_model_preset_registers_catalog_entry(presets, registry):
    descriptor = presets.create_model_preset(ModelPreset(
        id="tutor",
        base_model_id="local/alpha",
        system_prompt="You are a tutor.",
        param_overrides=GenerationParams(temperature=0.2),
    ))
    assert descriptor.id == "preset/tutor"
    target = registry.resolve_route("preset/tutor")
    assert target.kind == "backend"
    assert target.backend_id == "local"
    assert target.native_name == "alpha"
    assert [o.preset_id for o in target.overlays] == ["tutor"]


def test_model_preset_requires_resolvable_base(presets):
    with pytest.raises(RouteNotFound):
        presets.create_model_preset(ModelPreset(
            id="floating", base_model_id="local/ghost"))


def test_model_preset_id_validation(presets):
    with pytest.raises(InvalidPreset):
        presets.create_model_preset(ModelPreset(
            id="Bad Id", base_model_id="local/alpha"))


def test_duplicate_model_preset_rejected(presets):
    presets.create_model_preset(ModelPreset(id="one",
                                            base_model_id="local/alpha"))
    with pytest.raises(InvalidPreset):
        presets.create_model_preset(ModelPreset(id="one",
                                                base_model_id="local/alpha"))


def test_stacked_presets_overlay_order(presets, registry):
    presets.create_model_preset(ModelPreset(
        id="inner", base_model_id="local/alpha",
        system_prompt="inner prompt",
        param_overrides=GenerationParams(temperature=0.3, top_p=0.5)))
    presets.create_model_preset(ModelPreset(
        id="outer", base_model_id="preset/inner",
        system_prompt="outer prompt",
        param_overrides=GenerationParams(temperature=0.9)))
    target = registry.resolve_route("preset/outer")
    # outermost (selected) preset first
    assert [o.preset_id for o in target.overlays] == ["outer", "inner"]
    assert target.native_name == "alpha"


def test_model_preset_persists_and_reloads(presets, store, registry):
    presets.create_model_preset(ModelPreset(
        id="kept", base_model_id="local/alpha",
        conversation_starters=("What is new?",)))
    fresh = PresetEngine(store, registry)
    # reload does not revalidate the base against a possibly-down backend
    fresh.load()
    assert fresh.get_model_preset("kept").conversation_starters == ("What is new?",)


def test_remove_model_preset_unroutes_it(presets, registry):
    presets.create_model_preset(ModelPreset(id="temp",
                                            base_model_id="local/alpha"))
    presets.remove_model_preset("temp")
    with pytest.raises(RouteNotFound):
        registry.resolve_route("preset/temp")
    with pytest.raises(RouteNotFound):
        presets.remove_model_preset("temp")


def test_preset_appears_in_model_list(presets, registry):
    presets.create_model_preset(ModelPreset(id="listed",
                                            base_model_id="local/alpha"))
    ids = [d.id for d in registry.list_models()]
    assert "preset/listed" in ids
    assert ids.index("local/alpha") < ids.index("preset/listed")
