#!/usr/bin/env python3
"""Materialize a synthetic corpus + queries + vectors for pipeline dry runs.

The generated pools are well-separated orthogonal clusters, so default
mining settings fill the whole negative budget on every record. Useful for
exercising mine/stats/bench and the parameter sweep without any crawl or
model in the loop.
"""

import argparse

from citemine.synthetic import write_synthetic_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--records", type=int, default=50)
    ap.add_argument("--clusters", type=int, default=3)
    ap.add_argument("--cluster-size", type=int, default=6)
    ap.add_argument("--extras", type=int, default=2)
    args = ap.parse_args()
    paths = write_synthetic_dataset(
        args.out_dir, n_records=args.records, n_clusters=args.clusters,
        cluster_size=args.cluster_size, extras=args.extras)
    for name, path in paths.items():
        print(f"{name}\t{path}")


if __name__ == "__main__":
    main()
