"""End-to-end acceptance suite.

One test per acceptance criterion, each printing a PASS line on success
(run with `pytest tests/test_acceptance.py -v -s` to see them). The whole
suite uses file-based providers and stub encoders only; no model server
is required.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from citemine.ablation import ablation_grid, run_ablation
from citemine.evalkit import (
    LossInputs,
    Qrels,
    RunRanking,
    mnr_loss,
    ndcg_at_k,
    success_at_k,
)
from citemine.flatindex import StubEncoder, bench, build, search
from citemine.mining import MiningConfig, mine_hard_negatives, sample_next
from citemine.neighborhood import CitationRecord
from citemine.pubmed import RateLimiter, parse_abstract, parse_cited_pmids
from citemine.synthetic import (
    TableEmbeddingProvider,
    TableQueryProvider,
    synthetic_dataset,
    write_synthetic_dataset,
)
from citemine.vectorspace import (
    Embedding,
    SimilarityGraph,
    build_similarity_graph,
    normalize,
    query_similarities,
)

from conftest import FIXTURES, MockClock, make_client
from oracles import greedy_walk_oracle, ndcg_oracle, success_oracle
from test_evalkit import random_instance


def ok(name: str) -> None:
    print(f"ACCEPTANCE {name}: PASS")


def random_mining_record(rng, n_one, n_two, dim=8):
    pmid = int(rng.integers(1, 10**7))
    n = n_one + n_two
    pmids = [pmid + 1 + i for i in range(n)]
    texts = [f"cand {pmid} {i}" for i in range(n)]
    record = CitationRecord(
        positive_pmid=pmid, positive_abstract=f"pos {pmid}",
        one_hop=list(zip(pmids[:n_one], texts[:n_one])),
        two_hop=list(zip(pmids[n_one:], texts[n_one:])))
    pool = [Embedding(str(i), normalize(rng.standard_normal(dim))) for i in range(n)]
    query = Embedding("q", normalize(rng.standard_normal(dim)))
    return record, query, pool


def test_metric_oracle_equivalence():
    start = time.perf_counter()
    qrels = Qrels(judgments={("q1", "d1"): 1})
    assert ndcg_at_k(RunRanking.from_scored({"q1": [("d1", 0.9)]}), qrels, 10) == 1.0
    run2 = RunRanking.from_scored({"q1": [("d0", 0.9), ("d1", 0.5)]})
    assert ndcg_at_k(run2, qrels, 10) == pytest.approx(0.63093, abs=1e-5)
    qrels11 = Qrels(judgments={("q1", "d10"): 1})
    run11 = RunRanking.from_scored(
        {"q1": [(f"d{i}", 1.0 - i / 100) for i in range(11)]})
    assert ndcg_at_k(run11, qrels11, 10) == 0.0

    rng = np.random.default_rng(2024)
    for _ in range(200):
        qrels_o, qrels_raw, run_o, run_raw = random_instance(rng)
        assert ndcg_at_k(run_o, qrels_o, 10) == pytest.approx(
            ndcg_oracle(run_raw, qrels_raw, 10), abs=1e-9)
        assert success_at_k(run_o, qrels_o, 5) == pytest.approx(
            success_oracle(run_raw, qrels_raw, 5), abs=1e-9)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"metric equivalence took {elapsed:.2f}s"
    ok(f"metric oracle equivalence (200 instances, {elapsed:.2f}s)")


def test_miner_greedy_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(404)
    for _ in range(100):
        n = int(rng.integers(2, 13))
        n_one = int(rng.integers(1, n + 1))
        record, query, pool = random_mining_record(rng, n_one, n - n_one, dim=6)
        cfg = MiningConfig(
            n_paths=int(rng.integers(1, 5)), l_path=int(rng.integers(1, 5)),
            k_sample=1, seed=int(rng.integers(0, 10**6)),
            add_random_negative=False)
        triplet = mine_hard_negatives(record, "q", query, pool, cfg)
        graph = build_similarity_graph(pool, n_one)
        sims = query_similarities(query, pool)
        expected = greedy_walk_oracle(sims, graph.matrix, n_one,
                                      cfg.n_paths, cfg.l_path)
        docs = list(record.one_hop) + list(record.two_hop)
        assert triplet.negative_pmids == [docs[i][0] for i in expected]
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"greedy equivalence took {elapsed:.2f}s"
    ok(f"miner greedy-oracle equivalence (100 graphs, {elapsed:.2f}s)")


def test_miner_structural_invariants():
    rng = np.random.default_rng(777)
    violations = 0
    for _ in range(1000):
        n_one = int(rng.integers(1, 7))
        n_two = int(rng.integers(0, 19))
        record, query, pool = random_mining_record(rng, n_one, n_two)
        cfg = MiningConfig(
            n_paths=int(rng.integers(1, 6)), l_path=int(rng.integers(1, 6)),
            k_sample=int(rng.integers(1, 6)), seed=int(rng.integers(0, 2**63)),
            add_random_negative=bool(rng.integers(0, 2)))
        triplet = mine_hard_negatives(record, "q", query, pool, cfg)
        pool_pmids = {p for p, _ in record.one_hop} | {p for p, _ in record.two_hop}
        sims = query_similarities(query, pool)
        best_start = min(range(n_one), key=lambda i: (-sims[i], i))
        checks = (
            len(set(triplet.negative_pmids)) == len(triplet.negative_pmids),
            set(triplet.negative_pmids) <= pool_pmids,
            triplet.positive_pmid not in triplet.negative_pmids,
            1 <= len(triplet.negatives) <= cfg.max_negatives(),
            triplet.negative_pmids[0] == record.one_hop[best_start][0],
        )
        if not all(checks):
            violations += 1
    assert violations == 0
    ok("miner structural invariants (1000 random records, 0 violations)")


def test_seeded_determinism_across_processes(tmp_path):
    paths = write_synthetic_dataset(tmp_path / "data", n_records=4)
    permuted = tmp_path / "permuted.jsonl"
    lines = paths["corpus"].read_text().splitlines()
    permuted.write_text("\n".join(reversed(lines)) + "\n")

    def run_mine(corpus, out):
        cmd = [sys.executable, "-m", "citemine.cli", "mine",
               "--corpus", str(corpus), "--vectors", str(paths["vectors"]),
               "--queries", str(paths["queries"]), "--seed", "42",
               "--out", str(out)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        return out.read_bytes()

    a = run_mine(paths["corpus"], tmp_path / "a.jsonl")
    b = run_mine(paths["corpus"], tmp_path / "b.jsonl")
    c = run_mine(permuted, tmp_path / "c.jsonl")
    assert a == b, "same inputs, separate processes: outputs differ"
    assert sorted(a.decode().splitlines()) == sorted(c.decode().splitlines())
    ok("seeded determinism (re-run, process restart, permuted order)")


def test_sampling_weight_contract():
    matrix = np.array([[1.0, 0.6, 0.3, 0.1],
                       [0.6, 1.0, 0.0, 0.0],
                       [0.3, 0.0, 1.0, 0.0],
                       [0.1, 0.0, 0.0, 1.0]], dtype=np.float32)
    graph = SimilarityGraph(matrix=matrix, pool_ids=list("abcd"), one_hop_count=4)
    rng = np.random.default_rng(8675309)
    draws = 100_000
    counts = {1: 0, 2: 0, 3: 0}
    for _ in range(draws):
        counts[sample_next(0, graph, set(), 3, rng)] += 1
    for idx, expected in ((1, 0.6), (2, 0.3), (3, 0.1)):
        freq = counts[idx] / draws
        assert abs(freq - expected) <= 0.01, f"candidate {idx}: {freq:.4f}"
    ok("sampling-weight contract (100k draws within +/-0.01)")


def test_default_config_mean_negatives():
    records, queries, table = synthetic_dataset(50)
    assert all(r.candidate_count() >= 20 for r in records)
    provider = TableEmbeddingProvider(table)
    qp = TableQueryProvider(queries)
    total = 0
    for record in records:
        texts = [a for _, a in record.one_hop] + [a for _, a in record.two_hop]
        pool = provider.embed_batch(texts)
        qt = queries[record.positive_pmid]
        q = provider.embed_batch([qt])[0]
        triplet = mine_hard_negatives(record, qt, q, pool, MiningConfig(seed=42))
        total += len(triplet.negatives)
    mean = total / len(records)
    assert mean == 10.0
    ok("default-config count (50 records, mean negatives = 10.0)")


def test_similarity_graph_checks():
    rng = np.random.default_rng(31337)
    for _ in range(50):
        n = int(rng.integers(2, 65))
        d = int(rng.integers(2, 97))
        pool = [Embedding(str(i), normalize(rng.standard_normal(d)))
                for i in range(n)]
        graph = build_similarity_graph(pool, one_hop_count=n // 2)
        m = graph.matrix
        assert np.allclose(m, m.T, atol=1e-6)
        assert np.allclose(np.diag(m), 1.0, atol=1e-6)
        assert m.min() >= -1 - 1e-6 and m.max() <= 1 + 1e-6
        naive = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                naive[i, j] = float(np.dot(pool[i].values.astype(np.float64),
                                           pool[j].values.astype(np.float64)))
        assert np.allclose(m, naive, atol=1e-6)
    ok("similarity-graph checks (50 random pools within 1e-6)")


def test_flat_index_exactness_and_bench():
    from oracles import topk_fullsort_oracle

    rng = np.random.default_rng(99)
    raw = rng.standard_normal((1000, 24))
    mat = (raw / np.linalg.norm(raw, axis=1, keepdims=True)).astype(np.float32)
    ids = [f"doc{i:04d}" for i in range(1000)]
    index = build(mat, ids)
    queries = rng.standard_normal((20, 24)).astype(np.float32)
    for q, got in zip(queries, search(index, queries, k=10)):
        want = topk_fullsort_oracle(mat, ids, q, 10)
        assert [d for d, _ in got] == [d for d, _ in want]

    big_raw = rng.standard_normal((10_000, 32)).astype(np.float32)
    big = build(big_raw, [f"p{i:05d}" for i in range(10_000)])
    report = bench(big, StubEncoder(dim=32, seed=1), batch_sizes=(1, 10, 2000),
                   k=1000)
    body = report.to_json()
    assert set(body["batch_sizes"]) == {"1", "10", "2000"}
    assert body["batch_sizes"]["1"]["iterations"] == 100
    assert body["batch_sizes"]["10"]["iterations"] == 100
    assert body["batch_sizes"]["2000"]["iterations"] == 10
    for cell in body["batch_sizes"].values():
        for phase in ("encoding_ms", "retrieval_ms", "total_ms"):
            assert set(cell[phase]) == {"avg", "p99"}
    for br in report.batches.values():
        for e, r, t in zip(br.encoding.samples_ms, br.retrieval.samples_ms,
                           br.total.samples_ms):
            assert t == pytest.approx(e + r, abs=1e-9)
    ok("flat-index exactness + full-protocol bench report")


def test_crawler_fixtures_rate_and_cache(tmp_path):
    payload = (FIXTURES / "elink_three_refs.xml").read_bytes()
    assert parse_cited_pmids(payload) == [28915994, 26931183, 23193287]
    single = (FIXTURES / "efetch_single_abstract.xml").read_bytes()
    assert parse_abstract(single) == (
        "Dense retrieval of biomedical literature requires distinguishing "
        "semantically close but non-relevant documents from true positives, "
        "a distinction sharpened by citation structure."
    )
    structured = (FIXTURES / "efetch_structured_abstract.xml").read_bytes()
    assert parse_abstract(structured).startswith(
        "Citation links connect studies that share context")

    clock = MockClock()
    limiter = RateLimiter(3.0, clock)
    times = [limiter.acquire() for _ in range(30)]
    for w in times:
        assert sum(1 for t in times if w <= t < w + 1.0) <= 3

    universe = {5: {"cites": [6], "abstract": "text five"},
                6: {"cites": [], "abstract": "text six"}}
    client = make_client(universe, tmp_path)
    client.fetch_abstract(5)
    before = len(client._transport.calls)
    client.fetch_abstract(5)
    assert len(client._transport.calls) == before
    ok("crawler fixtures, window-bounded rate, zero-request cache hit")


def test_mnr_loss_closed_form_and_monotonicity():
    base = Embedding("v", normalize([0.2, 0.5, 0.8]))
    for k in range(1, 9):
        value = mnr_loss(LossInputs(q=base, d_pos=base, d_negs=[base] * k))
        assert value == pytest.approx(math.log(k + 1), abs=1e-12)

    rng = np.random.default_rng(55)
    for _ in range(100):
        d = int(rng.integers(2, 12))
        q = Embedding("q", normalize(rng.standard_normal(d)))
        negs = [Embedding(f"n{i}", normalize(rng.standard_normal(d)))
                for i in range(int(rng.integers(1, 6)))]
        pos = Embedding("p", normalize(rng.standard_normal(d)))
        better = Embedding("p+", pos.values + 0.3 * q.values)  # strictly higher q-dot
        low = mnr_loss(LossInputs(q=q, d_pos=better, d_negs=negs))
        high = mnr_loss(LossInputs(q=q, d_pos=pos, d_negs=negs))
        assert low < high
        assert high > 0
    ok("contrastive loss: ln(K+1) within 1e-12 and monotone in positive dot")


def test_parameter_sweep_harness():
    records, queries, table = synthetic_dataset(8)
    rows = run_ablation(records, TableEmbeddingProvider(table),
                        TableQueryProvider(queries), seed=42)
    assert len(rows) == len(ablation_grid()) == 9
    settings = [(r.n_paths, r.l_path) for r in rows]
    assert settings == [(1, 3), (2, 3), (4, 3), (5, 3),
                        (3, 1), (3, 2), (3, 3), (3, 4), (3, 5)]
    for row in rows:
        assert row.records == 8
        assert row.mean_negatives is not None
        assert all(v is None for v in row.scores.values())  # score cells empty
    sweep_json = json.dumps([r.to_json() for r in rows])
    assert '"scores"' in sweep_json
    ok("parameter-sweep harness (9 configurations, stats populated)")
