"""Single entry point wiring the pipeline stages together.

Subcommands: crawl, mine, eval, bench, stats. Values resolve in the order
flag > config file ([crawl]/[mine]/[eval]/[bench] TOML sections) > default.
Every artifact gets a <name>.meta.json sidecar recording the exact
resolved configuration, for provenance; sidecars carry no timestamps so
reruns stay byte-identical.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import ablation, evalkit, flatindex
from .errors import CiteMineError, ConfigError
from .mining import (
    FileQueryProvider,
    HTTPQueryProvider,
    MiningConfig,
    emit_triplets,
    read_triplets,
)
from .neighborhood import (
    NeighborhoodConfig,
    Rejected,
    build_neighborhood,
    read_corpus,
    write_corpus,
)
from .pubmed import FetchPolicy, PubmedClient, parse_pmid
from .vectorspace import (
    FileEmbeddingProvider,
    HTTPEmbeddingProvider,
    read_vector_file,
)

CONFIG_SCHEMA = {
    "crawl": {"seeds", "out", "rps", "retries", "backoff", "concurrency",
              "cache_dir", "min_candidates", "max_two_hop_per_parent", "workers"},
    "mine": {"corpus", "vectors", "queries", "out", "n_paths", "l_path",
             "k_sample", "seed", "add_random_negative", "embed_url",
             "query_url", "workers"},
    "eval": {"qrels", "run", "metric"},
    "bench": {"vectors", "queries", "k", "batches", "iterations", "seed", "out"},
}


def load_config(path) -> dict:
    """Parse the TOML config and reject unknown sections or keys."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    for section, values in data.items():
        if section not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"config section {section!r} must be a table")
        for key in values:
            if key not in CONFIG_SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key!r}")
    return data


class Resolver:
    """flag > config section > default."""

    def __init__(self, args: argparse.Namespace, section: dict):
        self.args = args
        self.section = section

    def get(self, name: str, default=None):
        flag = getattr(self.args, name, None)
        if flag is not None:
            return flag
        if name in self.section:
            return self.section[name]
        return default


def require_paths(stage: str, **paths) -> None:
    for name, value in paths.items():
        if value is None:
            raise ConfigError(f"{stage}: missing required setting {name!r}")
        if not Path(value).exists():
            raise ConfigError(f"{stage}: {name} path does not exist: {value}")


def write_meta(artifact_path, command: str, resolved: dict) -> None:
    meta = {"command": command, "config": resolved}
    Path(str(artifact_path) + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Stage runners
# ---------------------------------------------------------------------------

def run_crawl(args, section) -> int:
    r = Resolver(args, section)
    seeds_path, out = r.get("seeds"), r.get("out")
    require_paths("crawl", seeds=seeds_path)
    if out is None:
        raise ConfigError("crawl: missing required setting 'out'")
    policy = FetchPolicy.from_env(
        max_retries=int(r.get("retries", 3)),
        backoff_base=float(r.get("backoff", 0.5)),
        concurrency_limit=int(r.get("concurrency", 4)),
        **({"max_requests_per_second": float(r.get("rps"))}
           if r.get("rps") is not None else {}),
    )
    cfg = NeighborhoodConfig(
        min_candidates=int(r.get("min_candidates", 10)),
        max_two_hop_per_parent=(
            int(r.get("max_two_hop_per_parent"))
            if r.get("max_two_hop_per_parent") is not None else None),
    )
    client = PubmedClient(policy=policy, cache_dir=r.get("cache_dir"))
    seeds = [parse_pmid(line) for line in
             Path(seeds_path).read_text().split() if line.strip()]
    workers = int(r.get("workers", 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda s: build_neighborhood(client, s, cfg), seeds))
    else:
        results = [build_neighborhood(client, s, cfg) for s in seeds]
    retained = [x for x in results if not isinstance(x, Rejected)]
    rejected = [x for x in results if isinstance(x, Rejected)]
    count = write_corpus(retained, out)
    write_meta(out, "crawl", {
        "seeds": str(seeds_path), "out": str(out),
        "rps": policy.max_requests_per_second, "retries": policy.max_retries,
        "backoff": policy.backoff_base, "concurrency": policy.concurrency_limit,
        "min_candidates": cfg.min_candidates,
        "max_two_hop_per_parent": cfg.max_two_hop_per_parent,
        "workers": workers,
    })
    print(f"seeds\t{len(seeds)}")
    print(f"retained\t{count}")
    print(f"rejected\t{len(rejected)}")
    for rej in rejected:
        print(f"rejected_seed\t{rej.seed}\t{rej.reason}")
    return 0


def run_mine(args, section) -> int:
    r = Resolver(args, section)
    corpus = r.get("corpus")
    out = r.get("out")
    require_paths("mine", corpus=corpus)
    if out is None:
        raise ConfigError("mine: missing required setting 'out'")
    embed_url, query_url = r.get("embed_url"), r.get("query_url")
    vectors, queries_path = r.get("vectors"), r.get("queries")
    if embed_url:
        embedder = HTTPEmbeddingProvider(embed_url)
    else:
        require_paths("mine", vectors=vectors)
        embedder = FileEmbeddingProvider(vectors)
    if query_url:
        queries = HTTPQueryProvider(query_url)
    else:
        require_paths("mine", queries=queries_path)
        queries = FileQueryProvider(queries_path)
    cfg = MiningConfig(
        n_paths=int(r.get("n_paths", 3)),
        l_path=int(r.get("l_path", 3)),
        k_sample=int(r.get("k_sample", 5)),
        seed=int(r.get("seed", 0)),
        add_random_negative=bool(r.get("add_random_negative", True)),
    )
    stats = emit_triplets(read_corpus(corpus), embedder, queries, cfg, out,
                          workers=int(r.get("workers", 1)))
    write_meta(out, "mine", {
        "corpus": str(corpus), "out": str(out),
        "vectors": str(vectors) if vectors else None,
        "queries": str(queries_path) if queries_path else None,
        "embed_url": embed_url, "query_url": query_url,
        "n_paths": cfg.n_paths, "l_path": cfg.l_path, "k_sample": cfg.k_sample,
        "seed": cfg.seed, "add_random_negative": cfg.add_random_negative,
    })
    print(f"triplets\t{stats.records}")
    if stats.mean_negatives is not None:
        print(f"mean_negatives\t{stats.mean_negatives:.4f}")
    return 0


def parse_metric(text: str) -> tuple[str, int]:
    name, _, k = text.partition("@")
    if name not in ("ndcg", "success") or not k.isdigit() or int(k) < 1:
        raise ConfigError(f"eval: bad metric {text!r} (use ndcg@10 or success@5)")
    return name, int(k)


def run_eval(args, section) -> int:
    r = Resolver(args, section)
    qrels_path, run_path = r.get("qrels"), r.get("run")
    require_paths("eval", qrels=qrels_path, run=run_path)
    name, k = parse_metric(r.get("metric", "ndcg@10"))
    qrels = evalkit.load_qrels(qrels_path)
    run = evalkit.load_run(run_path)
    fn = evalkit.ndcg_at_k if name == "ndcg" else evalkit.success_at_k
    value = fn(run, qrels, k)
    print(f"{name}@{k}\t{value:.6f}")
    print(f"queries\t{len(qrels.judged_queries())}")
    print(f"skipped\t{len(qrels.skipped_queries())}")
    return 0


def run_bench(args, section) -> int:
    r = Resolver(args, section)
    vectors = r.get("vectors")
    require_paths("bench", vectors=vectors)
    ids, matrix, _provider = read_vector_file(vectors)
    index = flatindex.build(matrix, ids)
    queries_path = r.get("queries")
    if queries_path is not None:
        require_paths("bench", queries=queries_path)
        _qids, qmat, _p = read_vector_file(queries_path)
        if qmat.shape[1] != index.dim:
            raise ConfigError("bench: query dimension != index dimension")
        encoder = flatindex.FileQueryEncoder(qmat)
    else:
        encoder = flatindex.StubEncoder(dim=index.dim, seed=int(r.get("seed", 0)))
    batches_raw = r.get("batches", "1,10,2000")
    if isinstance(batches_raw, str):
        batch_sizes = tuple(int(b) for b in batches_raw.split(",") if b.strip())
    else:
        batch_sizes = tuple(int(b) for b in batches_raw)
    iterations = r.get("iterations")
    report = flatindex.bench(
        index, encoder, batch_sizes=batch_sizes, k=int(r.get("k", 1000)),
        iterations=int(iterations) if iterations is not None else None,
        hardware_note=f"stub-encoder flat index, n={index.size}, d={index.dim}",
    )
    body = report.to_json()
    out = r.get("out")
    if out:
        Path(out).write_text(json.dumps(body, indent=2) + "\n", encoding="utf-8")
        write_meta(out, "bench", {
            "vectors": str(vectors), "queries": str(queries_path) if queries_path else None,
            "k": report.k, "batches": list(batch_sizes), "iterations": iterations,
        })
    print(json.dumps(body))
    return 0


def run_stats(args, section) -> int:
    r = Resolver(args, section)
    corpus, triplets = r.get("corpus"), r.get("triplets")
    if corpus is None and triplets is None:
        raise ConfigError("stats: pass --corpus and/or --triplets")
    out: dict = {}
    if corpus is not None:
        require_paths("stats", corpus=corpus)
        sizes = [rec.candidate_count() for rec in read_corpus(corpus)]
        histogram: dict[str, int] = {}
        for s in sizes:
            histogram[str(s)] = histogram.get(str(s), 0) + 1
        out["corpus_records"] = len(sizes)
        out["pool_size_histogram"] = dict(sorted(histogram.items(),
                                                 key=lambda kv: int(kv[0])))
    if triplets is not None:
        require_paths("stats", triplets=triplets)
        counts = [len(t.negatives) for t in read_triplets(triplets)]
        out["triplets"] = len(counts)
        if counts:
            out["mean_negatives"] = sum(counts) / len(counts)
    if getattr(args, "json", False):
        print(json.dumps(out))
    else:
        for key, value in out.items():
            if key == "pool_size_histogram":
                for size, n in value.items():
                    print(f"pool_size\t{size}\t{n}")
            elif key == "mean_negatives":
                print(f"{key}\t{value:.4f}")
            else:
                print(f"{key}\t{value}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="citemine",
        description="Citation-aware hard-negative mining pipeline",
    )
    parser.add_argument("--config", help="TOML config file (flags override it)")
    sub = parser.add_subparsers(dest="command", required=True)

    crawl = sub.add_parser("crawl", help="build 2-hop citation neighborhoods")
    crawl.add_argument("--seeds", help="newline-separated PMID list")
    crawl.add_argument("--out", help="corpus JSONL to write")
    crawl.add_argument("--rps", type=float,
                       help="max requests/second (default: 3, or 10 with NCBI_API_KEY)")
    crawl.add_argument("--retries", type=int, help="max retries (default: 3)")
    crawl.add_argument("--backoff", type=float,
                       help="base backoff seconds (default: 0.5)")
    crawl.add_argument("--concurrency", type=int,
                       help="max in-flight requests (default: 4)")
    crawl.add_argument("--cache-dir", dest="cache_dir",
                       help="raw payload cache (default: $CITE_MINE_CACHE_DIR)")
    crawl.add_argument("--min-candidates", dest="min_candidates", type=int,
                       help="min pool size to retain a record (default: 10)")
    crawl.add_argument("--max-two-hop-per-parent", dest="max_two_hop_per_parent",
                       type=int, help="cap on 2-hop docs per parent (default: none)")
    crawl.add_argument("--workers", type=int, help="parallel seed builds (default: 1)")

    mine = sub.add_parser("mine", help="mine hard negatives into triplets")
    mine.add_argument("--corpus", help="corpus JSONL from crawl")
    mine.add_argument("--vectors", help="vector file keyed by text hash")
    mine.add_argument("--queries", help="TSV pmid<TAB>query")
    mine.add_argument("--embed-url", dest="embed_url",
                      help="use an /embed HTTP provider instead of --vectors")
    mine.add_argument("--query-url", dest="query_url",
                      help="use a /generate_query HTTP provider instead of --queries")
    mine.add_argument("--n-paths", dest="n_paths", type=int,
                      help="traversal start points (default: 3)")
    mine.add_argument("--l-path", dest="l_path", type=int,
                      help="max nodes added per path (default: 3)")
    mine.add_argument("--k-sample", dest="k_sample", type=int,
                      help="sampling pool width (default: 5)")
    mine.add_argument("--seed", type=int, help="global RNG seed (default: 0)")
    mine.add_argument("--add-random-negative", dest="add_random_negative",
                      action=argparse.BooleanOptionalAction, default=None,
                      help="append one uniformly random unvisited doc (default: on)")
    mine.add_argument("--out", help="triplet JSONL to write")
    mine.add_argument("--workers", type=int, help="parallel record mining (default: 1)")

    evalp = sub.add_parser("eval", help="score a run against qrels")
    evalp.add_argument("--qrels", help="qrels file: query_id 0 doc_id grade")
    evalp.add_argument("--run", help="run file: query_id Q0 doc_id rank score tag")
    evalp.add_argument("--metric", help="ndcg@K or success@K (default: ndcg@10)")

    benchp = sub.add_parser("bench", help="latency benchmark on a flat index")
    benchp.add_argument("--vectors", help="vector file to index")
    benchp.add_argument("--queries", help="optional pre-encoded query vector file")
    benchp.add_argument("--k", type=int, help="top-k to retrieve (default: 1000)")
    benchp.add_argument("--batches", help="comma list (default: 1,10,2000)")
    benchp.add_argument("--iterations", type=int,
                        help="override per-batch iteration counts (default: 100/100/10)")
    benchp.add_argument("--seed", type=int, help="stub encoder seed (default: 0)")
    benchp.add_argument("--out", help="write the report JSON here")

    stats = sub.add_parser("stats", help="corpus / triplet summaries")
    stats.add_argument("--corpus", help="corpus JSONL")
    stats.add_argument("--triplets", help="triplet JSONL")
    stats.add_argument("--json", action="store_true", help="one JSON object")
    return parser


RUNNERS = {
    "crawl": run_crawl,
    "mine": run_mine,
    "eval": run_eval,
    "bench": run_bench,
    "stats": run_stats,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config) if args.config else {}
        section = config.get(args.command, {})
        return RUNNERS[args.command](args, section)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (CiteMineError, OSError, ValueError, KeyError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
