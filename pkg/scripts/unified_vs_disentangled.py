"""Matched-budget comparison of disentangled (N + N) and unified (2N) gist pools
on the mixed instruction + passage suite.

    python scripts/unified_vs_disentangled.py --teacher runs/ablation/teacher.ckpt
"""

import argparse
import logging
from pathlib import Path

from gistcompress.checkpoint import load_checkpoint
from gistcompress.evaluate import write_report
from gistcompress.experiment import SuiteConfig, build_suite, compressor_on_suite, evaluate_on, mean_score
from gistcompress.tokenizer import Vocab
from gistcompress.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--teacher", required=True)
    ap.add_argument("--gist-count", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--k-passages-train", type=int, default=5, help="retrieval depth while training the compressor")
    ap.add_argument("--out", default="runs/unified")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    vocab = Vocab()
    suite = build_suite(SuiteConfig(seed=args.seed))
    teacher, _ = load_checkpoint(args.teacher)
    teacher.freeze()
    cc = TrainConfig(learning_rate=1e-4, epochs=8, seed=args.seed, k_passages_train=args.k_passages_train)
    evaluation = suite.splits["eval"]
    for unified in (False, True):
        label = "unified" if unified else "disentangled"
        compressor, pools = compressor_on_suite(teacher, suite.splits["train"], cc, vocab, args.gist_count, unified)
        report = evaluate_on(teacher, compressor, pools, evaluation, vocab, ("gist",), metadata={"setting": label})
        write_report(report, Path(args.out), label)
        r = report.per_condition["gist"]
        print(f"{label:<13} rag acc {r.accuracy:.3f}  instruction rouge-l {r.rouge_l:.3f}  mean {mean_score(report, 'gist', evaluation):.3f}")


if __name__ == "__main__":
    main()
