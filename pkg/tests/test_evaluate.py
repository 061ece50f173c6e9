import csv
import json

import numpy as np
import pytest

from gistcompress.data import attach_passages, generate_instruction_tasks, generate_passage_qa
from gistcompress.evaluate import CONDITIONS, verbalize, write_report, run_eval
from gistcompress.gist import assemble_compressor_input, compress, init_compressor
from gistcompress.model import ModelConfig, init_model


@pytest.fixture(scope="module")
def parts(vocab):
    cfg = ModelConfig(vocab_size=len(vocab), d_model=16, n_heads=2, n_enc_layers=1, n_dec_layers=1, d_ff=32, max_seq_len=256, n_gist=3)
    teacher = init_model(cfg, seed=0).freeze()
    compressor, pools = init_compressor(teacher, vocab)
    corpus, rag = generate_passage_qa(0, 6, 4)
    exs = attach_passages(rag, corpus, 5) + generate_instruction_tasks(0, 4)
    return teacher, compressor, pools, exs


def test_single_condition_untrained(parts, vocab):
    teacher, _, _, exs = parts
    report = run_eval(teacher, None, None, exs, vocab, conditions=("no_prompt",), max_len=5)
    assert list(report.per_condition) == ["no_prompt"]
    assert report.per_condition["no_prompt"].n_examples == len(exs)


def test_fractions_in_unit_interval(parts, vocab):
    teacher, compressor, pools, exs = parts
    report = run_eval(teacher, compressor, pools, exs, vocab, max_len=5)
    assert set(report.per_condition) == set(CONDITIONS)
    for r in report.per_condition.values():
        for v in (r.accuracy, r.rouge_l, r.mean_compression_ratio):
            assert v is None or 0.0 <= v <= 1.0
    assert report.per_condition["gist"].mean_compression_ratio is not None


def test_gist_needs_compressor(parts, vocab):
    teacher, _, _, exs = parts
    with pytest.raises(ValueError):
        run_eval(teacher, None, None, exs, vocab, conditions=("gist",))


def test_eval_deterministic(parts, vocab):
    teacher, compressor, pools, exs = parts
    a = run_eval(teacher, compressor, pools, exs, vocab, max_len=5)
    b = run_eval(teacher, compressor, pools, exs, vocab, max_len=5)
    assert a.to_json() == b.to_json() and a.records == b.records


def test_batch_size_does_not_change_results(parts, vocab):
    teacher, compressor, pools, exs = parts
    a = run_eval(teacher, compressor, pools, exs, vocab, max_len=5, batch_size=64)
    b = run_eval(teacher, compressor, pools, exs, vocab, max_len=5, batch_size=1)
    assert [r["generated"] for r in a.records] == [r["generated"] for r in b.records]


def test_verbalize_deterministic_and_bounded(parts, vocab):
    teacher, compressor, pools, exs = parts
    states = compress(compressor, assemble_compressor_input(exs[0], compressor, pools, vocab, 5))
    a = verbalize(teacher, states, vocab, 7)
    assert a == verbalize(teacher, states, vocab, 7)
    assert len(a.tokens) <= 7 and a.source_layout == states.layout
    assert a.text == vocab.decode(a.tokens)


def test_report_files(tmp_path, parts, vocab):
    teacher, compressor, pools, exs = parts
    report = run_eval(teacher, compressor, pools, exs, vocab, max_len=5, metadata={"seed": 0})
    json_path, csv_path = write_report(report, tmp_path, "r")
    data = json.loads(json_path.read_text())
    assert set(data) == {"run_id", "config", "per_condition"}
    assert data["run_id"] == report.run_id
    assert set(data["per_condition"]["gist"]) == {"name", "accuracy", "rouge_l", "mean_compression_ratio", "n"}
    rows = list(csv.reader(csv_path.open()))
    assert rows[0] == ["condition", "task", "metric", "value"]
    assert {r[0] for r in rows[1:]} == set(CONDITIONS)
    assert (tmp_path / "r.predictions.jsonl").exists()
    assert np.isfinite([float(r[3]) for r in rows[1:]]).all()
