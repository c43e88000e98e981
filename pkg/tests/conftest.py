import sys
import threading
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from citemine.pubmed import FetchPolicy, PubmedClient

FIXTURES = Path(__file__).parent / "fixtures"


# ---------------------------------------------------------------------------
# E-utilities XML builders for synthetic citation universes
# ---------------------------------------------------------------------------

def make_elink_xml(pmid: int, refs: list[int]) -> bytes:
    links = "".join(f"<Link><Id>{r}</Id></Link>" for r in refs)
    linksetdb = (
        f"<LinkSetDb><DbTo>pubmed</DbTo><LinkName>pubmed_pubmed_refs</LinkName>"
        f"{links}</LinkSetDb>"
    ) if refs else ""
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f"<eLinkResult><LinkSet><DbFrom>pubmed</DbFrom>"
        f"<IdList><Id>{pmid}</Id></IdList>{linksetdb}</LinkSet></eLinkResult>"
    ).encode()


def make_efetch_xml(pmid: int, abstract: str | None) -> bytes:
    if abstract is None:
        abstract_el = ""
    else:
        abstract_el = f"<Abstract><AbstractText>{abstract}</AbstractText></Abstract>"
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f"<PubmedArticleSet><PubmedArticle><MedlineCitation>"
        f'<PMID Version="1">{pmid}</PMID><Article>'
        f"<ArticleTitle>Record {pmid}</ArticleTitle>{abstract_el}"
        f"</Article></MedlineCitation></PubmedArticle></PubmedArticleSet>"
    ).encode()


def make_efetch_empty() -> bytes:
    return b'<?xml version="1.0" encoding="UTF-8"?>\n<PubmedArticleSet></PubmedArticleSet>'


class MockClock:
    """Virtual monotonic clock: sleep() advances time instantly."""

    def __init__(self):
        self.t = 0.0
        self.sleeps: list[float] = []
        self._lock = threading.Lock()

    def monotonic(self) -> float:
        with self._lock:
            return self.t

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self.sleeps.append(seconds)
            self.t += max(seconds, 0.0)


class UniverseTransport:
    """Serves a synthetic citation universe as E-utilities responses.

    universe: {pmid: {"cites": [...], "abstract": str | None}}.
    A pmid absent from the universe gets an empty efetch / error elink.
    """

    def __init__(self, universe: dict, clock=None):
        self.universe = universe
        self.clock = clock
        self.calls: list[tuple[str, dict]] = []
        self.call_times: list[float] = []
        self.fail_first = 0  # inject this many failures before succeeding
        self.fail_status = 500
        self._lock = threading.Lock()

    def request(self, url: str, params: dict) -> tuple[int, bytes]:
        with self._lock:
            self.calls.append((url, dict(params)))
            if self.clock is not None:
                self.call_times.append(self.clock.monotonic())
            if self.fail_first > 0:
                self.fail_first -= 1
                return self.fail_status, b"unavailable"
        pmid = int(params["id"])
        entry = self.universe.get(pmid)
        if "elink" in url:
            if entry is None:
                return 200, (
                    b"<eLinkResult><LinkSet><DbFrom>pubmed</DbFrom>"
                    b"<ERROR>cannot resolve UID</ERROR></LinkSet></eLinkResult>"
                )
            return 200, make_elink_xml(pmid, entry.get("cites", []))
        if entry is None:
            return 200, make_efetch_empty()
        return 200, make_efetch_xml(pmid, entry.get("abstract"))


@pytest.fixture
def mock_clock():
    return MockClock()


def make_client(universe: dict, tmp_path, clock=None, **policy_kw) -> PubmedClient:
    policy_kw.setdefault("max_requests_per_second", 1000.0)
    policy_kw.setdefault("backoff_base", 0.01)
    clock = clock or MockClock()
    transport = UniverseTransport(universe, clock=clock)
    client = PubmedClient(
        policy=FetchPolicy(**policy_kw),
        cache_dir=tmp_path / "cache",
        transport=transport,
        clock=clock,
    )
    return client


# ---------------------------------------------------------------------------
# Well-separated synthetic mining pools (clustered unit vectors)
# ---------------------------------------------------------------------------

def clustered_pool(n_clusters=3, cluster_size=6, extras=2, alpha=0.99):
    """Unit vectors in `n_clusters` mutually orthogonal clusters.

    Doc j of cluster c points mostly along axis c with the remainder on a
    dimension unique to the doc, so in-cluster similarity is ~alpha**2 and
    cross-cluster similarity is exactly 0. Returns (vectors, cluster_of).
    """
    n = n_clusters * cluster_size + extras
    dim = n_clusters + n
    beta = float(np.sqrt(1 - alpha**2))
    vectors = np.zeros((n, dim), dtype=np.float64)
    cluster_of = []
    for i in range(n):
        c = i % n_clusters if i < n_clusters * cluster_size else None
        if c is None:
            vectors[i, n_clusters + i] = 1.0  # isolated extra doc
        else:
            vectors[i, c] = alpha
            vectors[i, n_clusters + i] = beta
        cluster_of.append(c)
    return vectors, cluster_of
