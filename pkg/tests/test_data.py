import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gistcompress.data import (
    INSTRUCTION_TEMPLATES,
    DataFormatError,
    Example,
    apply_task,
    attach_passages,
    generate_instruction_tasks,
    generate_passage_qa,
    load_corpus,
    load_jsonl,
    save_corpus,
    save_jsonl,
    task_of,
)
from gistcompress.retrieval import Corpus, retrieve_topk, retrieve_topk_many, terms
from gistcompress.tokenizer import EOS, PAD, UNK, Vocab

# -- tokenizer ----------------------------------------------------------------


def test_encode_appends_eos(vocab):
    ids = vocab.encode("ab")
    assert ids[-1] == EOS and len(ids) == 3
    assert ids[0] != ids[1]


def test_roundtrip_hello(vocab):
    assert vocab.decode(vocab.encode("hello")) == "hello"


def test_unknown_symbol_maps_to_unk(vocab):
    assert vocab.encode("∅") == [UNK, EOS]


def test_decode_drops_pad_and_eos(vocab):
    assert vocab.decode([PAD, *vocab.encode("hi"), PAD]) == "hi"


def test_ids_dense_and_bijective(vocab):
    ids = [vocab.encode(s, eos=False)[0] for s in vocab.symbols]
    assert len(set(ids)) == len(vocab.symbols)
    assert max(ids) == len(vocab) - 1
    reserved = {PAD, EOS, UNK} | {vocab.gist_id(i) for i in range(2 * vocab.max_gist)}
    assert sorted(reserved | set(ids)) == list(range(len(vocab)))


def test_gist_ids_never_encoded(vocab):
    gist = {vocab.gist_id(i) for i in range(2 * vocab.max_gist)}
    assert not gist & set(vocab.encode("".join(vocab.symbols)))
    with pytest.raises(IndexError):
        vocab.gist_id(2 * vocab.max_gist)


@given(st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126), max_size=40))
def test_roundtrip_property(text):
    v = Vocab()
    assert v.decode(v.encode(text)) == text


# -- generators ---------------------------------------------------------------


def test_passage_qa_deterministic():
    a = generate_passage_qa(3, 20, 10)
    b = generate_passage_qa(3, 20, 10)
    assert a[0].documents == b[0].documents and a[1] == b[1]


def test_each_target_in_exactly_one_document():
    corpus, exs = generate_passage_qa(1, 60, 40)
    for ex in exs:
        hits = [d for d, text in corpus.documents if ex.target in text]
        assert len(hits) == 1
        key = ex.input.split()[-1].rstrip("?")
        assert key in corpus.text(hits[0])


def test_no_distractors_corpus_size():
    corpus, exs = generate_passage_qa(0, 17, 0)
    assert len(corpus.documents) == 17 == len(exs)


def test_passage_qa_rejects_empty():
    with pytest.raises(ValueError):
        generate_passage_qa(0, 0, 5)


def test_instruction_rules():
    assert apply_task("reverse", "abc") == "cba"
    assert apply_task("uppercase", "hi") == "HI"
    assert apply_task("repeat_last", "foo bar") == "bar bar"
    assert apply_task("swap", "foo bar") == "bar foo"
    with pytest.raises(ValueError):
        apply_task("nope", "x")


def test_instruction_tasks_deterministic_and_verbose():
    a = generate_instruction_tasks(5, 40)
    assert a == generate_instruction_tasks(5, 40)
    assert {task_of(ex) for ex in a} == set(INSTRUCTION_TEMPLATES)
    for ex in a:
        # at least 8x a 10-row gist budget
        assert len(ex.instruction) >= 80
        assert ex.target == apply_task(task_of(ex), ex.input)


# -- jsonl ---------------------------------------------------------------------


def test_jsonl_roundtrip(tmp_path):
    corpus, rag = generate_passage_qa(0, 60, 10)
    exs = attach_passages(rag, corpus, 3) + generate_instruction_tasks(0, 40)
    path = tmp_path / "x.jsonl"
    save_jsonl(exs, path)
    assert load_jsonl(path) == exs


def test_missing_field_names_line(tmp_path):
    good = {"id": "a", "instruction": "i", "passages": [], "input": "x", "target": "y", "task_type": "instruction"}
    lines = [json.dumps(good)] * 6 + [json.dumps({k: v for k, v in good.items() if k != "target"})]
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataFormatError, match="line 7: missing field target"):
        load_jsonl(path)


def test_empty_file(tmp_path):
    path = tmp_path / "e.jsonl"
    path.write_text("")
    assert load_jsonl(path) == []


def test_bad_task_type(tmp_path):
    path = tmp_path / "b.jsonl"
    rec = {"id": "a", "instruction": "i", "passages": [], "input": "x", "target": "y", "task_type": "chat"}
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(DataFormatError, match="line 1"):
        load_jsonl(path)


def test_corpus_roundtrip(tmp_path):
    corpus, _ = generate_passage_qa(0, 5, 5)
    save_corpus(corpus, tmp_path / "c.jsonl")
    assert load_corpus(tmp_path / "c.jsonl").documents == corpus.documents


def test_prompt_segments_order():
    ex = Example("r", "instr", ["p1", "p2", "p3"], "q", "a", "rag")
    assert ex.prompt_segments(2) == ["p1", "p2", "instr"]
    assert Example("i", "instr", ["ignored"], "q", "a", "instruction").prompt_segments(5) == ["instr"]


# -- retrieval -----------------------------------------------------------------


def test_self_query_ranks_first():
    corpus, _ = generate_passage_qa(2, 30, 30)
    doc_id, text = corpus.documents[7]
    assert retrieve_topk(corpus, text, 3)[0] == doc_id


def test_k_clamped_to_corpus():
    corpus, _ = generate_passage_qa(2, 4, 2)
    assert len(retrieve_topk(corpus, "key", 11)) == 6


def test_ties_break_by_doc_id():
    corpus = Corpus([("d2", "alpha beta"), ("d1", "alpha beta"), ("d0", "gamma")])
    assert retrieve_topk(corpus, "alpha", 3) == ["d1", "d2", "d0"]


def test_empty_corpus_and_bad_k():
    with pytest.raises(ValueError):
        retrieve_topk(Corpus([]), "x", 1)
    with pytest.raises(ValueError):
        retrieve_topk(Corpus([("a", "x")]), "x", 0)


def test_duplicate_doc_ids_rejected():
    with pytest.raises(ValueError):
        Corpus([("a", "x"), ("a", "y")])


def test_df_consistent():
    docs = [("a", "x y x"), ("b", "y z"), ("c", "z")]
    corpus = Corpus(docs)
    for term in ("x", "y", "z"):
        assert corpus.df[term] == sum(term in terms(t) for _, t in docs)


def test_retrieval_recall_with_50_distractors():
    corpus, exs = generate_passage_qa(4, 200, 50)
    ranked = retrieve_topk_many(corpus, [ex.input for ex in exs], 5)
    hit = sum(any(ex.target in corpus.text(d) for d in ids) for ex, ids in zip(exs, ranked))
    assert hit / len(exs) >= 0.95


def test_batched_matches_single():
    corpus, exs = generate_passage_qa(4, 20, 20)
    many = retrieve_topk_many(corpus, [ex.input for ex in exs], 4)
    assert many == [retrieve_topk(corpus, ex.input, 4) for ex in exs]
