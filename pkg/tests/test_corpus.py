import json
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgtd.corpus import (
    DEV_MERGE,
    MONO,
    MULTI,
    SUBTASK_B,
    CLEANING,
    OVERLAP_REMOVAL,
    TRANSLATION_MERGE,
    CorpusVersion,
    Document,
    LabelSchema,
    build_version,
    load_corpus,
    load_version,
    read_predictions,
    rebalance,
    relabel_multiclass,
    remove_overlap,
    save_version,
    write_documents,
    write_predictions,
)
from mgtd.errors import CorpusError, ParseError, ValidationError


def write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def test_schemas():
    assert LabelSchema.for_task("subtaskA-mono").num_classes == 2
    b = LabelSchema.for_task(SUBTASK_B)
    assert b.classes == ("human", "chatGPT", "cohere", "davinci", "bloomz", "dolly")
    assert sorted(b.class_to_id.values()) == list(range(6))
    with pytest.raises(ValueError):
        LabelSchema("subtaskB", ("a", "b"))


def test_load_preserves_order(tmp_path):
    path = write_lines(tmp_path / "c.jsonl", [{"id": i, "text": f"t{i}", "label": n % 2} for n, i in enumerate("cab")])
    docs = load_corpus(path, LabelSchema.for_task(MONO))
    assert [d.id for d in docs] == ["c", "a", "b"]
    assert [d.label for d in docs] == [0, 1, 0]


def test_load_rejects_label_outside_schema(tmp_path):
    path = write_lines(tmp_path / "c.jsonl", [{"id": "x", "text": "t", "label": "7"}])
    with pytest.raises(ValidationError, match="outside"):
        load_corpus(path, LabelSchema.for_task(SUBTASK_B))


def test_load_accepts_class_names(tmp_path):
    path = write_lines(tmp_path / "c.jsonl", [{"id": "x", "text": "t", "label": "cohere"}])
    assert load_corpus(path, LabelSchema.for_task(SUBTASK_B))[0].label == 2


def test_parse_error_names_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "a", "text": "ok"}\n\n{"id": "b", "text": \n', encoding="utf-8")
    with pytest.raises(ParseError) as err:
        load_corpus(path)
    assert err.value.line_number == 3


@pytest.mark.parametrize(
    "records, match",
    [
        ([{"id": "a", "text": "x"}, {"id": "a", "text": "y"}], "duplicate"),
        ([{"id": "a", "text": "   "}], "empty text"),
        ([{"id": "", "text": "x"}], "empty id"),
    ],
)
def test_load_rejects_bad_records(tmp_path, records, match):
    with pytest.raises(ValidationError, match=match):
        load_corpus(write_lines(tmp_path / "c.jsonl", records))


def test_write_predictions_format(tmp_path):
    path = tmp_path / "p.jsonl"
    write_predictions([("a", 0), ("b", 1)], path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert [json.loads(l) for l in lines] == [{"id": "a", "label": 0}, {"id": "b", "label": 1}]
    assert all(set(json.loads(l)) == {"id", "label"} for l in lines)


def test_write_predictions_empty_and_stable(tmp_path):
    write_predictions([], tmp_path / "e.jsonl")
    assert (tmp_path / "e.jsonl").read_bytes() == b""
    preds = [("z", 1), ("y", 0), ("x", 1)]
    write_predictions(preds, tmp_path / "1.jsonl")
    write_predictions(preds, tmp_path / "2.jsonl")
    assert (tmp_path / "1.jsonl").read_bytes() == (tmp_path / "2.jsonl").read_bytes()
    assert read_predictions(tmp_path / "1.jsonl") == preds


def test_write_predictions_rejects_duplicates(tmp_path):
    with pytest.raises(ValidationError):
        write_predictions([("a", 0), ("a", 1)], tmp_path / "p.jsonl")


def test_write_predictions_checks_schema(tmp_path):
    with pytest.raises(ValidationError):
        write_predictions([("a", 2)], tmp_path / "p.jsonl", LabelSchema.for_task(MONO))


doc_lists = st.lists(
    st.tuples(st.text(min_size=1).filter(str.strip), st.one_of(st.none(), st.integers(0, 5))),
    max_size=20,
)


@settings(max_examples=60, deadline=None)
@given(doc_lists)
def test_document_round_trip(tmp_path_factory, items):
    docs = [Document(id=f"id{i}", text=t, label=l, language="en") for i, (t, l) in enumerate(items)]
    path = tmp_path_factory.mktemp("rt") / "docs.jsonl"
    write_documents(docs, path)
    assert load_corpus(path) == docs


def test_relabel():
    docs = [Document("a", "x", source="human"), Document("b", "y", source="dolly", language="en")]
    out = relabel_multiclass(docs, LabelSchema.for_task(SUBTASK_B).class_to_id)
    assert [d.label for d in out] == [0, 5]
    assert out[1].language == "en" and out[1].text == "y"
    assert relabel_multiclass([], {}) == []
    with pytest.raises(ValidationError, match="chatGPT"):
        relabel_multiclass([Document("c", "z", source="chatGPT")], {"human": 0})


def test_relabel_idempotent_when_consistent():
    tagmap = {"human": 0, "cohere": 2}
    docs = [Document(str(i), "t", label=tagmap[s], source=s) for i, s in enumerate(["human", "cohere", "human"])]
    assert relabel_multiclass(docs, tagmap) == docs


def labelled(counts):
    docs = []
    for label, n in counts.items():
        docs += [Document(f"{label}-{i}", "t", label=label) for i in range(n)]
    return docs


def test_rebalance_examples():
    out = rebalance(labelled({0: 10, 1: 3}), cap=5, seed=0)
    assert Counter(d.label for d in out) == {0: 5, 1: 3}
    docs = labelled({0: 4, 1: 4})
    assert rebalance(docs, cap=5, seed=0) == docs


def test_rebalance_seeded_and_ordered():
    docs = labelled({0: 50, 1: 30, 2: 5})
    random.Random(1).shuffle(docs)
    a = rebalance(docs, 10, seed=7)
    assert a == rebalance(docs, 10, seed=7)
    positions = [docs.index(d) for d in a]
    assert positions == sorted(positions)


def test_rebalance_errors():
    with pytest.raises(ValidationError):
        rebalance([Document("a", "t")], 1, 0)
    with pytest.raises(ValueError):
        rebalance(labelled({0: 1}), 0, 0)


# --- dataset versions ---------------------------------------------------


def toy_v1():
    return CorpusVersion(
        "v1",
        {
            (MONO, "train"): [Document("m1", "Mono train one.", "en", 0), Document("m2", "Mono train two.", "en", 1)],
            (MONO, "dev"): [Document("d2", "Shared doc.", "en", 1)],
            (MULTI, "train"): [
                Document("d1", "First.", "en", 0),
                Document("d2", "Shared doc.", "en", 1),
                Document("d3", "这是中文。", "zh", 1),
            ],
            (MULTI, "dev"): [Document("x1", "Dev multi.", "bg", 0)],
        },
    )


def test_v2_removes_overlap_and_appends_translations():
    translated = [Document("t1", "[MT] text", "en", 1, provenance=("back-translated",))]
    v2 = build_version(toy_v1(), "v2", translated)
    assert [d.id for d in v2.get(MULTI, "train")] == ["d1", "d3"]
    assert [d.id for d in v2.get(MONO, "train")] == ["m1", "m2", "t1"]
    assert [s.name for s in v2.lineage] == [OVERLAP_REMOVAL, TRANSLATION_MERGE, CLEANING]
    assert v2.leaked_ids(MONO) == set() and v2.leaked_ids(MULTI) == set()
    # multilingual text survives cleaning untouched
    assert v2.get(MULTI, "train")[1].text == "这是中文。"


def test_v3_merges_multilingual_dev():
    v3 = build_version(toy_v1(), "v3", [])
    assert [s.name for s in v3.lineage][-1] == DEV_MERGE
    assert "x1" in {d.id for d in v3.get(MONO, "train")}
    assert "x1" in {d.id for d in v3.get(MULTI, "train")}


def test_version_errors_and_warnings():
    with pytest.raises(CorpusError):
        build_version(toy_v1(), "v3", None)
    with pytest.raises(ValueError):
        build_version(toy_v1(), "v4", [])
    v1 = toy_v1()
    v1.splits[(MONO, "dev")] = [Document("nomatch", "nothing like it", "en", 0)]
    v2 = build_version(v1, "v2", [])
    assert v2.lineage[0].warnings


def test_overlap_text_fallback():
    kept, info = remove_overlap([Document("a", "Same  TEXT"), Document("b", "other")], [Document("z", "same text")])
    assert [d.id for d in kept] == ["b"]
    assert info["removed_by_text"] == 1


def test_translations_never_leak_dev():
    v2 = build_version(toy_v1(), "v2", [Document("d2", "leak", "en", 1)])
    assert v2.leaked_ids(MONO) == set()


def test_version_save_load(tmp_path):
    v2 = build_version(toy_v1(), "v2", [])
    save_version(v2, tmp_path / "v2")
    back = load_version(tmp_path / "v2")
    assert back.name == "v2" and back.sizes() == v2.sizes()
    assert [s.name for s in back.lineage] == [s.name for s in v2.lineage]
