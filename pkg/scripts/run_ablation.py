#!/usr/bin/env python3
"""Run the traversal-parameter sweep over a corpus and emit the table skeleton.

Nine configurations: path counts {1,2,4,5} at length 3, then lengths
{1,2,3,4,5} at 3 paths. Reports per-config dataset statistics; score cells
stay empty, since filling them needs a trained retriever and a benchmark
evaluation run.
"""

import argparse

from citemine.ablation import render_table, run_ablation, write_report
from citemine.mining import FileQueryProvider
from citemine.neighborhood import read_corpus
from citemine.vectorspace import FileEmbeddingProvider


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus", required=True, help="corpus JSONL")
    ap.add_argument("--vectors", required=True, help="vector file (text-hash keyed)")
    ap.add_argument("--queries", required=True, help="TSV pmid<TAB>query")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--k-sample", type=int, default=5)
    ap.add_argument("--out", help="also write the sweep as JSON")
    args = ap.parse_args()

    rows = run_ablation(
        read_corpus(args.corpus),
        FileEmbeddingProvider(args.vectors),
        FileQueryProvider(args.queries),
        seed=args.seed,
        k_sample=args.k_sample,
    )
    print(render_table(rows))
    if args.out:
        write_report(rows, args.out)
        print(f"\nwrote {args.out}")


if __name__ == "__main__":
    main()
