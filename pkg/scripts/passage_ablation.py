"""Ordering and gist-count ablation on the passage-QA suite.

Pretrains a teacher on the mixed synthetic suite, then trains one compressor
per gist count on the passage questions and prints accuracy per condition.

    python scripts/passage_ablation.py --gist-counts 1,5,10 --out runs/ablation
"""

import argparse
import json
import logging
import time
from pathlib import Path

from gistcompress.checkpoint import load_checkpoint, save_checkpoint
from gistcompress.evaluate import write_csv, write_report
from gistcompress.experiment import SuiteConfig, build_suite, compressor_on_suite, evaluate_on, teacher_on_suite
from gistcompress.model import ModelConfig
from gistcompress.tokenizer import Vocab
from gistcompress.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--gist-counts", default="1,5,10")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--k-passages-train", type=int, default=5, help="retrieval depth while training the compressor")
    ap.add_argument("--teacher-epochs", type=int, default=10)
    ap.add_argument("--teacher", help="reuse a saved teacher checkpoint")
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab = Vocab()
    suite = build_suite(SuiteConfig(seed=args.seed))
    start = time.perf_counter()
    if args.teacher:
        teacher, _ = load_checkpoint(args.teacher)
        teacher.freeze()
    else:
        tc = TrainConfig(learning_rate=1e-3, epochs=args.teacher_epochs, seed=args.seed)
        teacher = teacher_on_suite(suite, tc, ModelConfig(vocab_size=len(vocab)), vocab)
        save_checkpoint(teacher, None, out / "teacher.ckpt")
    print(f"teacher ready in {time.perf_counter() - start:.0f}s")

    cc = TrainConfig(learning_rate=1e-4, epochs=8, seed=args.seed, k_passages_train=args.k_passages_train)
    train, evaluation = suite.select("train", "rag"), suite.select("eval", "rag")
    rows = []
    for i, n in enumerate(int(x) for x in args.gist_counts.split(",")):
        compressor, pools = compressor_on_suite(teacher, train, cc, vocab, n)
        conditions = ("no_prompt", "gist", "full_prompt") if i == 0 else ("gist",)
        report = evaluate_on(teacher, compressor, pools, evaluation, vocab, conditions, metadata={"gist_count": n, "seed": args.seed})
        write_report(report, out, f"report_n{n}")
        for name, r in report.per_condition.items():
            rows.append((f"{name}" if name != "gist" else f"gist N={n}", "rag", "accuracy", r.accuracy))
            print(f"N={n:<3} {name:<12} accuracy {r.accuracy:.3f}")
    write_csv(rows, out / "ablation.csv")
    (out / "suite.json").write_text(json.dumps(suite.config.to_dict(), indent=2))


if __name__ == "__main__":
    main()
