import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from docs2synth.docmodel import (
    BoundingBox,
    DocumentCollection,
    EmptyDocument,
    Entity,
    ParsedDocument,
    aggregate_text,
    validate_document,
)


def box(x0=0.0, y0=0.0, x1=10.0, y1=10.0):
    return BoundingBox(x0, y0, x1, y1)


def make_doc(contents, width=100.0, height=100.0, **overrides):
    entities = [
        Entity(index=i, content=c, bbox=box(0, 10.0 * i, 50, 10.0 * i + 8))
        for i, c in enumerate(contents)
    ]
    doc = ParsedDocument.from_entities("doc-0", "page.png", width, height, entities)
    if overrides:
        from dataclasses import replace

        doc = replace(doc, **overrides)
    return doc


class TestAggregateText:
    def test_two_entities_join(self):
        b = box()
        text, boxes = aggregate_text(
            [Entity(0, "A", b), Entity(1, "B", b)]
        )
        assert text == "A\nB"
        assert boxes == [b, b]

    def test_single_entity(self):
        b = box()
        text, boxes = aggregate_text([Entity(0, "Ordinary Shares", b)])
        assert text == "Ordinary Shares"
        assert boxes == [b]

    def test_three_entities(self):
        b = box()
        text, boxes = aggregate_text(
            [Entity(0, "a", b), Entity(1, "b", b), Entity(2, "c", b)]
        )
        assert text == "a\nb\nc"
        assert len(boxes) == 3

    def test_empty_list_raises(self):
        with pytest.raises(EmptyDocument):
            aggregate_text([])

    @given(st.lists(st.text(min_size=1).filter(lambda s: s.strip()), min_size=2, max_size=6))
    def test_order_sensitive_unless_identical(self, contents):
        b = box()
        entities = [Entity(i, c, b) for i, c in enumerate(contents)]
        text, _ = aggregate_text(entities)
        reversed_text, _ = aggregate_text(list(reversed(entities)))
        if contents != list(reversed(contents)):
            assert text != reversed_text
        else:
            assert text == reversed_text


class TestValidateDocument:
    def test_well_formed(self):
        assert validate_document(make_doc(["top", "bottom"])) == []

    def test_inverted_bbox_reported(self):
        bad = Entity(index=3, content="x", bbox=BoundingBox(60.0, 0.0, 10.0, 5.0))
        doc = make_doc(["a", "b", "c"])
        from dataclasses import replace

        entities = doc.entities + (bad,)
        doc = replace(
            doc,
            entities=entities,
            bbox_list=tuple(e.bbox for e in entities),
            full_text="\n".join(e.content for e in entities),
        )
        violations = validate_document(doc)
        assert any("x0 >= x1" in v and "entity 3" in v for v in violations)

    def test_length_mismatch_reported(self):
        doc = make_doc(["a", "b"], bbox_list=(box(),))
        violations = validate_document(doc)
        assert sum("bbox_list" in v and "!=" in v for v in violations) == 1

    def test_wrong_full_text_reported(self):
        doc = make_doc(["a", "b"], full_text="b\na")
        assert any("full_text" in v for v in violations_of(doc))

    def test_out_of_bounds_reported(self):
        doc = make_doc(["a"], width=30.0)
        assert any("outside page bounds" in v for v in validate_document(doc))


def violations_of(doc):
    return validate_document(doc)


class TestSerialization:
    def test_round_trip_exact(self):
        doc = make_doc(["Ordinary Shares", "42", "日本語 text"])
        assert ParsedDocument.from_json_line(doc.to_json_line()) == doc

    def test_bbox_serialized_as_array(self):
        raw = json.loads(make_doc(["a"]).to_json_line())
        assert raw["entities"][0]["bbox"] == [0.0, 0.0, 50.0, 8.0]
        assert raw["bbox_list"] == [[0.0, 0.0, 50.0, 8.0]]

    @given(
        st.lists(
            st.tuples(
                st.text(min_size=1, max_size=20).filter(lambda s: s.strip()),
                st.floats(min_value=0, max_value=500),
                st.floats(min_value=0, max_value=500),
            ),
            min_size=1,
            max_size=8,
        )
    )
    def test_round_trip_property(self, specs):
        entities = [
            Entity(i, content, BoundingBox(x, y, x + 5.0, y + 5.0))
            for i, (content, x, y) in enumerate(specs)
        ]
        doc = ParsedDocument.from_entities("d", "img.png", 600, 600, entities)
        assert ParsedDocument.from_json_line(doc.to_json_line()) == doc


class TestDocumentCollection:
    def test_duplicate_doc_id_rejected(self):
        doc = make_doc(["a"])
        with pytest.raises(ValueError, match="duplicate doc_id"):
            DocumentCollection("c", (doc, doc))

    def test_get(self):
        doc = make_doc(["a"])
        coll = DocumentCollection("c", (doc,))
        assert coll.get("doc-0") is doc
        with pytest.raises(KeyError):
            coll.get("missing")
