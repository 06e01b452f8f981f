import json
import logging
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from docs2synth.docmodel import BoundingBox, EmptyDocument
from docs2synth.ingest import (
    EmptyCollection,
    FormatError,
    IngestConfig,
    RawOcrItem,
    UnsupportedFormat,
    XYCutParams,
    build_document,
    ingest_collection,
    parse_ocr_output,
    xy_cut_order,
)


def item(text, x0, y0, x1, y1):
    return RawOcrItem(text, BoundingBox(x0, y0, x1, y1))


# Grid fixture: full-width horizontal gap and full-height vertical gap.
# Input order [BR, TL, BL, TR]; reading order TL, TR, BL, BR -> [1, 3, 2, 0].
GRID_ITEMS = [
    item("BR", 60, 40, 100, 60),
    item("TL", 0, 0, 40, 20),
    item("BL", 0, 40, 40, 60),
    item("TR", 60, 0, 100, 20),
]
GRID_EXPECTED = [1, 3, 2, 0]

# Two-column fixture: rows are staggered so no full-width horizontal gap
# exists, but a full-height vertical gap does. Input [R2, L1, R1, L2];
# reading order L1, L2, R1, R2 -> [1, 3, 2, 0].
TWO_COLUMN_ITEMS = [
    item("R2", 60, 45, 100, 65),
    item("L1", 0, 0, 40, 20),
    item("R1", 60, 15, 100, 35),
    item("L2", 0, 30, 40, 50),
]
TWO_COLUMN_EXPECTED = [1, 3, 2, 0]


class TestParseGenericJsonl:
    def test_identity_mapping(self):
        payload = b'{"text":"Score","box":[10,10,60,30]}\n'
        items = parse_ocr_output(payload, "generic-jsonl")
        assert items == [RawOcrItem("Score", BoundingBox(10, 10, 60, 30))]

    def test_empty_text_dropped(self):
        payload = b'{"text":"  ","box":[10,10,60,30]}\n{"text":"kept","box":[0,0,5,5]}\n'
        items = parse_ocr_output(payload, "generic-jsonl")
        assert [i.text for i in items] == ["kept"]

    def test_malformed_line_names_position(self):
        payload = b'{"text":"ok","box":[0,0,5,5]}\n{not json}\n'
        with pytest.raises(FormatError, match="line 2"):
            parse_ocr_output(payload, "generic-jsonl")

    def test_degenerate_box_rejected(self):
        with pytest.raises(FormatError, match="invalid box"):
            parse_ocr_output(b'{"text":"x","box":[10,10,10,30]}\n', "generic-jsonl")

    def test_confidence_preserved(self):
        items = parse_ocr_output(
            b'{"text":"x","box":[0,0,5,5],"confidence":0.93}\n', "generic-jsonl"
        )
        assert items[0].confidence == pytest.approx(0.93)

    def test_unknown_format(self):
        with pytest.raises(UnsupportedFormat):
            parse_ocr_output(b"", "tesseract-hocr")


class TestParsePaddleOcr:
    def test_label_style_polygon_reduced(self):
        payload = json.dumps(
            [{"transcription": "Name", "points": [[10, 10], [60, 12], [60, 30], [10, 28]]}]
        ).encode()
        items = parse_ocr_output(payload, "paddleocr")
        assert items == [RawOcrItem("Name", BoundingBox(10, 10, 60, 30))]

    def test_classic_nested_records(self):
        page = [
            [[[10, 10], [60, 12], [60, 30], [10, 28]], ["Score", 0.98]],
            [[[10, 40], [60, 42], [60, 60], [10, 58]], ["99", 0.88]],
        ]
        items = parse_ocr_output(json.dumps([page]).encode(), "paddleocr")
        assert [i.text for i in items] == ["Score", "99"]
        assert items[0].box == BoundingBox(10, 10, 60, 30)
        assert items[1].confidence == pytest.approx(0.88)

    def test_predict_style_arrays(self):
        payload = json.dumps(
            {
                "rec_texts": ["a", "b"],
                "rec_polys": [
                    [[0, 0], [10, 0], [10, 5], [0, 5]],
                    [[0, 10], [10, 10], [10, 15], [0, 15]],
                ],
                "rec_scores": [0.9, 0.8],
            }
        ).encode()
        items = parse_ocr_output(payload, "paddleocr")
        assert [i.text for i in items] == ["a", "b"]

    def test_empty_text_dropped(self):
        payload = json.dumps(
            [{"transcription": "", "points": [[0, 0], [5, 0], [5, 5], [0, 5]]}]
        ).encode()
        assert parse_ocr_output(payload, "paddleocr") == []

    def test_non_json_payload(self):
        with pytest.raises(FormatError, match="not valid JSON"):
            parse_ocr_output(b"\x00\x01", "paddleocr")


class TestParseDocling:
    def test_bottomleft_bbox_flipped(self):
        payload = json.dumps(
            {
                "pages": {"1": {"size": {"width": 200, "height": 100}}},
                "texts": [
                    {
                        "text": "Header",
                        "prov": [
                            {
                                "page_no": 1,
                                "bbox": {
                                    "l": 10,
                                    "t": 90,
                                    "r": 60,
                                    "b": 70,
                                    "coord_origin": "BOTTOMLEFT",
                                },
                            }
                        ],
                    }
                ],
            }
        ).encode()
        items = parse_ocr_output(payload, "docling")
        assert items == [RawOcrItem("Header", BoundingBox(10, 10, 60, 30))]

    def test_topleft_passthrough(self):
        payload = json.dumps(
            {
                "texts": [
                    {
                        "text": "x",
                        "prov": [{"page_no": 1, "bbox": {"l": 1, "t": 2, "r": 5, "b": 9}}],
                    }
                ]
            }
        ).encode()
        items = parse_ocr_output(payload, "docling")
        assert items[0].box == BoundingBox(1, 2, 5, 9)

    def test_missing_texts_key(self):
        with pytest.raises(FormatError, match="texts"):
            parse_ocr_output(b"{}", "docling")


def boxes_strategy(min_size=1, max_size=12):
    def build(coords):
        return [
            item(f"t{i}", x, y, x + w, y + h)
            for i, (x, y, w, h) in enumerate(coords)
        ]

    return st.lists(
        st.tuples(
            st.integers(min_value=0, max_value=400),
            st.integers(min_value=0, max_value=400),
            st.integers(min_value=1, max_value=120),
            st.integers(min_value=1, max_value=40),
        ),
        min_size=min_size,
        max_size=max_size,
    ).map(build)


def stack_strategy():
    """Strict vertical stacks: pairwise disjoint y-ranges, all rows sharing
    x-overlap so no vertical cut can reorder them."""

    @st.composite
    def build(draw):
        n = draw(st.integers(min_value=1, max_value=10))
        rows = []
        y = draw(st.integers(min_value=0, max_value=20))
        for i in range(n):
            height = draw(st.integers(min_value=5, max_value=30))
            x0 = draw(st.integers(min_value=0, max_value=30))
            x1 = draw(st.integers(min_value=70, max_value=120))
            rows.append(item(f"row{i}", x0, y, x1, y + height))
            y += height + draw(st.integers(min_value=1, max_value=60))
        positions = list(range(n))
        rng = random.Random(draw(st.integers(min_value=0, max_value=2**31)))
        rng.shuffle(positions)
        return [rows[p] for p in positions]

    return build()


class TestXYCutParams:
    def test_gap_ratio_bounds(self):
        with pytest.raises(ValueError, match="min_gap_ratio"):
            XYCutParams(min_gap_ratio=0)
        with pytest.raises(ValueError, match="min_gap_ratio"):
            XYCutParams(min_gap_ratio=5.5)

    def test_max_depth_bound(self):
        with pytest.raises(ValueError, match="max_depth"):
            XYCutParams(max_depth=0)

    def test_axis_order_values(self):
        with pytest.raises(ValueError, match="axis_order"):
            XYCutParams(axis_order="diagonal")


class TestXYCutOrder:
    def test_single_box(self):
        assert xy_cut_order([item("only", 0, 0, 10, 10)]) == [0]

    def test_empty_raises(self):
        with pytest.raises(EmptyDocument):
            xy_cut_order([])

    def test_grid_fixture(self):
        assert xy_cut_order(GRID_ITEMS) == GRID_EXPECTED

    def test_two_column_fixture(self):
        assert xy_cut_order(TWO_COLUMN_ITEMS) == TWO_COLUMN_EXPECTED

    @given(boxes_strategy())
    def test_always_a_permutation(self, items):
        order = xy_cut_order(items)
        assert sorted(order) == list(range(len(items)))

    @given(boxes_strategy(min_size=2), st.randoms(use_true_random=False))
    def test_shuffle_invariance_on_distinct_boxes(self, items, rng):
        seen = set()
        unique_items = []
        for it in items:
            key = tuple(it.box.as_list())
            if key not in seen:
                seen.add(key)
                unique_items.append(it)
        items = unique_items
        if len(items) < 2:
            return
        baseline = [items[i].box for i in xy_cut_order(items)]
        shuffled = items[:]
        rng.shuffle(shuffled)
        reordered = [shuffled[i].box for i in xy_cut_order(shuffled)]
        assert reordered == baseline

    @given(stack_strategy())
    def test_stack_equals_sort_by_y0(self, items):
        order = xy_cut_order(items)
        oracle = sorted(range(len(items)), key=lambda i: items[i].box.y0)
        assert order == oracle

    @given(
        boxes_strategy(min_size=2),
        st.sampled_from([0.5, 2.0, 4.0]),
        st.integers(min_value=0, max_value=1000),
        st.integers(min_value=0, max_value=1000),
    )
    def test_scale_translate_invariance(self, items, scale, dx, dy):
        # powers-of-two scales and integer shifts keep float comparisons exact
        baseline = xy_cut_order(items)
        transformed = [
            RawOcrItem(
                it.text,
                BoundingBox(
                    it.box.x0 * scale + dx,
                    it.box.y0 * scale + dy,
                    it.box.x1 * scale + dx,
                    it.box.y1 * scale + dy,
                ),
            )
            for it in items
        ]
        assert xy_cut_order(transformed) == baseline

    def test_tie_break_on_identical_boxes_uses_input_index(self):
        items = [item("b", 0, 0, 10, 10), item("a", 0, 0, 10, 10)]
        assert xy_cut_order(items) == [0, 1]

    def test_x_first_axis_order(self):
        order = xy_cut_order(GRID_ITEMS, XYCutParams(axis_order="x-first"))
        # first cut vertical: left column (TL, BL) then right (TR, BR)
        assert [GRID_ITEMS[i].text for i in order] == ["TL", "BL", "TR", "BR"]

    def test_max_depth_one_stops_after_first_cut(self):
        order = xy_cut_order(GRID_ITEMS, XYCutParams(max_depth=1))
        # single y-cut, leaves sorted by (y0, x0): same grid order here
        assert [GRID_ITEMS[i].text for i in order] == ["TL", "TR", "BL", "BR"]


class TestBuildDocument:
    def test_top_bottom(self):
        items = [item("bottom", 0, 50, 100, 60), item("top", 0, 0, 100, 10)]
        doc = build_document("d", "d.png", 200, 100, items)
        assert doc.full_text == "top\nbottom"
        assert [e.index for e in doc.entities] == [0, 1]

    def test_grid_full_text(self):
        doc = build_document("d", "d.png", 200, 100, GRID_ITEMS)
        assert doc.full_text == "TL\nTR\nBL\nBR"

    def test_out_of_bounds_clamped_with_warning(self, caplog):
        items = [item("wide", 0, 0, 105, 10)]
        with caplog.at_level(logging.WARNING, logger="docs2synth.ingest"):
            doc = build_document("d", "d.png", 100, 100, items)
        assert doc.entities[0].bbox.x1 == 100
        assert sum("clamped" in r.message for r in caplog.records) == 1


def write_pair(tmp_path, stem, contents=("hello", "world")):
    Image.new("RGB", (100, 80), "white").save(tmp_path / f"{stem}.png")
    lines = [
        json.dumps({"text": c, "box": [5, 10 + 20 * i, 60, 25 + 20 * i]})
        for i, c in enumerate(contents)
    ]
    (tmp_path / f"{stem}.jsonl").write_text("\n".join(lines) + "\n")


class TestIngestCollection:
    def test_five_pairs(self, tmp_path):
        for i in range(5):
            write_pair(tmp_path, f"doc{i}")
        coll = ingest_collection(tmp_path, IngestConfig(collection_id="toy"))
        assert len(coll.documents) == 5
        assert [d.doc_id for d in coll.documents] == sorted(d.doc_id for d in coll.documents)

    def test_unpaired_image_skipped_with_warning(self, tmp_path, caplog):
        for i in range(4):
            write_pair(tmp_path, f"doc{i}")
        Image.new("RGB", (50, 50), "white").save(tmp_path / "doc4.png")
        with caplog.at_level(logging.WARNING, logger="docs2synth.ingest"):
            coll = ingest_collection(tmp_path)
        assert len(coll.documents) == 4
        assert sum("no OCR file" in r.message for r in caplog.records) == 1

    def test_empty_dir(self, tmp_path):
        with pytest.raises(EmptyCollection):
            ingest_collection(tmp_path)

    def test_unknown_format_rejected(self, tmp_path):
        write_pair(tmp_path, "doc0")
        with pytest.raises(UnsupportedFormat):
            ingest_collection(tmp_path, IngestConfig(ocr_format="abbyy"))
