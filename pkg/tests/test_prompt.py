import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from arsic.llm_io import parse_caption_list
from arsic.patterns import Group, LineShape, Relation, RelationKind, SceneDescription
from arsic.prompt import (
    ChatMessage,
    Exemplar,
    build_prompt,
    format_distance,
    load_exemplars,
    parse_exemplars,
    render_caption_list,
    serialize_scene,
)
from arsic.select import banned_reason


def _scene(groups, relations, image_id="img"):
    return SceneDescription(image_id, tuple(groups), tuple(relations))


SINGLE_SHIP = _scene([Group(0, (0,), (("ship", 1),))], [Relation(RelationKind.STANDS_ALONE, (0,))])


def test_serialize_singleton():
    assert serialize_scene(SINGLE_SHIP) == "Groups:\n- group 0: 1 ship (stand-alone)\nRelations:\n- group 0 stands alone"


def test_serialize_line_flag():
    g = Group(0, (0, 1, 2, 3), (("building", 4),), LineShape((1.0, 0.0), 0.0))
    text = serialize_scene(_scene([g], [Relation(RelationKind.IN_A_ROW, (0,))]))
    assert "- group 0: 4 building (in a line)" in text.splitlines()


def test_serialize_near_rounding():
    groups = [Group(0, (0, 1), (("ship", 2),)), Group(1, (2,), (("harbor", 1),))]
    text = serialize_scene(_scene(groups, [Relation(RelationKind.NEAR, (0, 1), 4.25)]))
    assert "- group 0 near group 1 (distance 4.2)" in text.splitlines()


@pytest.mark.parametrize("value, text", [(4.25, "4.2"), (4.35, "4.4"), (0.05, "0.0"), (12.0, "12.0"), (2.75, "2.8")])
def test_format_distance_half_even(value, text):
    assert format_distance(value) == text


def test_serialize_all_kinds_distinct():
    groups = [Group(i, (i,), (("ship", 1),)) for i in range(3)]
    rels = [
        Relation(RelationKind.NEAR, (0, 1), 3.0),
        Relation(RelationKind.DISTANCE_FACT, (0, 1), 3.0),
        Relation(RelationKind.SURROUNDED_BY, (0, 1)),
        Relation(RelationKind.SURROUNDED_BY, (1, 0)),
    ]
    texts = {serialize_scene(_scene(groups, [r])) for r in rels}
    assert len(texts) == len(rels)
    assert serialize_scene(_scene(groups, [])).endswith("Relations:\n- none")


def test_build_prompt_shapes():
    ex = load_exemplars()
    assert len(ex) == 3
    assert len(build_prompt(SINGLE_SHIP, []).messages) == 2
    bundle = build_prompt(SINGLE_SHIP, ex)
    assert [m.role for m in bundle.messages] == ["system", "user", "assistant"] * 1 + ["user", "assistant"] * 2 + ["user"]
    assert len(bundle.messages) == 2 + 2 * 3
    assert bundle.messages[-1].content == serialize_scene(SINGLE_SHIP)
    assert bundle.target_image_id == "img"
    system = bundle.messages[0].content
    assert "Python list" in system and "group 0" in system
    assert build_prompt(SINGLE_SHIP, ex) == bundle
    assert json.dumps(bundle.to_json()) == json.dumps(build_prompt(SINGLE_SHIP, ex).to_json())


def test_render_caption_list():
    assert render_caption_list(["a", "b"]) == '["a", "b"]'
    assert render_caption_list(['say "hi"\n']) == '["say \\"hi\\"\\n"]'


def test_bundled_exemplars_round_trip():
    for ex in load_exemplars():
        assert parse_caption_list(render_caption_list(ex.captions)) == list(ex.captions)
        assert not any(banned_reason(c) for c in ex.captions)


@given(st.lists(st.text(), min_size=1, max_size=5))
def test_render_parse_round_trip(captions):
    assert parse_caption_list(render_caption_list(captions)) == captions


def test_exemplar_validation():
    with pytest.raises(ValueError):
        Exemplar("Groups:", ["the buildings in group 0 are tall"])
    with pytest.raises(ValueError):
        Exemplar("Groups:", [])
    with pytest.raises(ValueError):
        parse_exemplars([{"scene_text": "x"}])
    with pytest.raises(ValueError):
        ChatMessage("tool", "x")
