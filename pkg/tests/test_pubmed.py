import math

import pytest

from citemine.errors import (
    AbstractMissing,
    NetworkError,
    NotFound,
    ParseError,
    RateLimited,
)
from citemine.pubmed import (
    FetchPolicy,
    RateLimiter,
    canonical_pmid,
    parse_abstract,
    parse_cited_pmids,
    parse_pmid,
)

from conftest import FIXTURES, MockClock, make_client


class TestPmid:
    def test_parse_from_string(self):
        assert parse_pmid("31452104") == 31452104

    def test_parse_strips_leading_zeros(self):
        assert canonical_pmid(parse_pmid("0031452104")) == "31452104"

    @pytest.mark.parametrize("bad", ["", "abc", "12a", "-5", 0, -1, True])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValueError):
            parse_pmid(bad)


class TestPolicy:
    def test_invariants(self):
        with pytest.raises(ValueError):
            FetchPolicy(max_requests_per_second=0)
        with pytest.raises(ValueError):
            FetchPolicy(max_retries=-1)
        with pytest.raises(ValueError):
            FetchPolicy(concurrency_limit=0)

    def test_env_defaults(self, monkeypatch):
        monkeypatch.delenv("NCBI_API_KEY", raising=False)
        assert FetchPolicy.from_env().max_requests_per_second == 3.0
        monkeypatch.setenv("NCBI_API_KEY", "k123")
        policy = FetchPolicy.from_env()
        assert policy.max_requests_per_second == 10.0
        assert policy.api_key_present


class TestElinkParsing:
    def test_three_refs_in_document_order(self):
        payload = (FIXTURES / "elink_three_refs.xml").read_bytes()
        assert parse_cited_pmids(payload) == [28915994, 26931183, 23193287]

    def test_empty_reference_section(self):
        payload = (FIXTURES / "elink_no_refs.xml").read_bytes()
        assert parse_cited_pmids(payload) == []

    def test_truncated_payload(self):
        payload = (FIXTURES / "elink_truncated.xml").read_bytes()
        with pytest.raises(ParseError):
            parse_cited_pmids(payload)

    def test_duplicates_removed_keeping_first(self):
        payload = (
            b"<eLinkResult><LinkSet><DbFrom>pubmed</DbFrom>"
            b"<IdList><Id>1</Id></IdList>"
            b"<LinkSetDb><DbTo>pubmed</DbTo><LinkName>pubmed_pubmed_refs</LinkName>"
            b"<Link><Id>7</Id></Link><Link><Id>9</Id></Link><Link><Id>7</Id></Link>"
            b"</LinkSetDb></LinkSet></eLinkResult>"
        )
        assert parse_cited_pmids(payload) == [7, 9]

    def test_other_linknames_ignored(self):
        payload = (
            b"<eLinkResult><LinkSet><DbFrom>pubmed</DbFrom>"
            b"<IdList><Id>1</Id></IdList>"
            b"<LinkSetDb><DbTo>pubmed</DbTo><LinkName>pubmed_pubmed_citedin</LinkName>"
            b"<Link><Id>42</Id></Link></LinkSetDb>"
            b"</LinkSet></eLinkResult>"
        )
        assert parse_cited_pmids(payload) == []

    def test_error_element_means_not_found(self):
        payload = (
            b"<eLinkResult><LinkSet><DbFrom>pubmed</DbFrom>"
            b"<ERROR>cannot resolve UID</ERROR></LinkSet></eLinkResult>"
        )
        with pytest.raises(NotFound):
            parse_cited_pmids(payload)

    def test_deterministic(self):
        payload = (FIXTURES / "elink_three_refs.xml").read_bytes()
        assert parse_cited_pmids(payload) == parse_cited_pmids(payload)


class TestEfetchParsing:
    def test_single_abstract_markup_stripped(self):
        payload = (FIXTURES / "efetch_single_abstract.xml").read_bytes()
        assert parse_abstract(payload) == (
            "Dense retrieval of biomedical literature requires distinguishing "
            "semantically close but non-relevant documents from true positives, "
            "a distinction sharpened by citation structure."
        )

    def test_structured_sections_joined_in_order(self):
        payload = (FIXTURES / "efetch_structured_abstract.xml").read_bytes()
        assert parse_abstract(payload) == (
            "Citation links connect studies that share context without duplicating content. "
            "We expanded reference lists two levels deep and retrieved every linked abstract. "
            "Expansion produced candidate pools an order of magnitude larger than the seed set."
        )

    def test_missing_abstract(self):
        payload = (FIXTURES / "efetch_no_abstract.xml").read_bytes()
        with pytest.raises(AbstractMissing):
            parse_abstract(payload)

    def test_empty_article_set_is_not_found(self):
        payload = b"<PubmedArticleSet></PubmedArticleSet>"
        with pytest.raises(NotFound):
            parse_abstract(payload)

    def test_truncated_is_parse_error(self):
        with pytest.raises(ParseError):
            parse_abstract(b"<PubmedArticleSet><PubmedArticle>")


class TestRateLimiter:
    @pytest.mark.parametrize("rps", [3.0, 2.5, 10.0, 1.0])
    def test_sliding_window_never_exceeded(self, rps):
        clock = MockClock()
        limiter = RateLimiter(rps, clock)
        times = [limiter.acquire() for _ in range(40)]
        cap = math.ceil(rps)
        for w in times:
            in_window = sum(1 for t in times if w <= t < w + 1.0)
            assert in_window <= cap, f"{in_window} issues in [{w}, {w + 1})"

    def test_threaded_acquires_stay_bounded(self):
        import threading

        clock = MockClock()
        limiter = RateLimiter(5.0, clock)
        times = []
        lock = threading.Lock()

        def worker():
            for _ in range(10):
                t = limiter.acquire()
                with lock:
                    times.append(t)

        threads = [threading.Thread(target=worker) for _ in range(4)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        for w in times:
            assert sum(1 for t in times if w <= t < w + 1.0) <= 5


UNIVERSE = {
    10: {"cites": [20, 30], "abstract": "seed abstract text"},
    20: {"cites": [], "abstract": "first neighbor"},
    30: {"cites": [40], "abstract": None},
    40: {"cites": [], "abstract": "second hop"},
}


class TestClient:
    def test_fetch_cited_pmids(self, tmp_path):
        client = make_client(UNIVERSE, tmp_path)
        assert client.fetch_cited_pmids(10) == [20, 30]

    def test_fetch_abstract(self, tmp_path):
        client = make_client(UNIVERSE, tmp_path)
        assert client.fetch_abstract(10) == "seed abstract text"

    def test_abstract_missing_raised(self, tmp_path):
        client = make_client(UNIVERSE, tmp_path)
        with pytest.raises(AbstractMissing):
            client.fetch_abstract(30)

    def test_unknown_pmid_not_found(self, tmp_path):
        client = make_client(UNIVERSE, tmp_path)
        with pytest.raises(NotFound):
            client.fetch_abstract(999)

    def test_cache_hit_issues_zero_requests(self, tmp_path):
        client = make_client(UNIVERSE, tmp_path)
        first = client.fetch_cited_pmids(10)
        calls_after_first = len(client._transport.calls)
        second = client.fetch_cited_pmids(10)
        assert len(client._transport.calls) == calls_after_first
        assert second == first

    def test_cache_file_layout(self, tmp_path):
        client = make_client(UNIVERSE, tmp_path)
        client.fetch_cited_pmids(10)
        client.fetch_abstract(20)
        assert (tmp_path / "cache" / "10.cited_list.xml").exists()
        assert (tmp_path / "cache" / "20.abstract.xml").exists()

    def test_cache_entry_inspection(self, tmp_path):
        client = make_client(UNIVERSE, tmp_path)
        assert client.cache.entry(10, "cited_list") is None
        client.fetch_cited_pmids(10)
        entry = client.cache.entry(10, "cited_list")
        assert entry.pmid == 10
        assert entry.kind == "cited_list"
        assert entry.payload  # non-empty raw response
        with pytest.raises(ValueError):
            client.cache.entry(10, "weird_kind")

    def test_retries_then_success(self, tmp_path):
        clock = MockClock()
        client = make_client(UNIVERSE, tmp_path, clock=clock, max_retries=3,
                             backoff_base=0.25)
        client._transport.fail_first = 2
        assert client.fetch_abstract(10) == "seed abstract text"
        assert len(client._transport.calls) == 3
        backoffs = [s for s in clock.sleeps if s in (0.25, 0.5, 1.0, 2.0)]
        assert backoffs == sorted(backoffs)  # non-decreasing delays

    def test_retries_exhausted_network_error(self, tmp_path):
        client = make_client(UNIVERSE, tmp_path, max_retries=2)
        client._transport.fail_first = 99
        with pytest.raises(NetworkError):
            client.fetch_abstract(10)
        assert len(client._transport.calls) == 3  # initial + 2 retries

    def test_persistent_429_raises_rate_limited(self, tmp_path):
        client = make_client(UNIVERSE, tmp_path, max_retries=1)
        client._transport.fail_first = 99
        client._transport.fail_status = 429
        with pytest.raises(RateLimited):
            client.fetch_cited_pmids(10)

    def test_client_respects_rate_in_windows(self, tmp_path):
        clock = MockClock()
        client = make_client(UNIVERSE, tmp_path, clock=clock,
                             max_requests_per_second=3.0)
        for pmid in UNIVERSE:
            client.fetch_cited_pmids(pmid)
            client.fetch_abstract(pmid) if UNIVERSE[pmid]["abstract"] else None
        times = client._transport.call_times
        for w in times:
            assert sum(1 for t in times if w <= t < w + 1.0) <= 3
