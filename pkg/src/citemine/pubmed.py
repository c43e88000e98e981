"""Rate-limited, caching client for NCBI E-utilities.

Resolves a PMID to its outbound reference list (elink, linkname
``pubmed_pubmed_refs``) and to its abstract text (efetch, XML retmode).
Raw API payloads are cached on disk so parses can be re-run after parser
fixes without re-crawling.

NCBI's published request budget is 3 req/s without an API key and 10 with
one; the key is read from the ``NCBI_API_KEY`` environment variable and the
cache directory from ``CITE_MINE_CACHE_DIR``.
"""

from __future__ import annotations

import math
import os
import threading
import time
import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .errors import AbstractMissing, NetworkError, NotFound, ParseError, RateLimited

EUTILS_BASE = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils"
REFS_LINKNAME = "pubmed_pubmed_refs"
USER_AGENT = "citemine/0.1 (citation neighborhood crawler)"

CACHE_DIR_ENV = "CITE_MINE_CACHE_DIR"
API_KEY_ENV = "NCBI_API_KEY"

Pmid = int


def parse_pmid(value) -> Pmid:
    """Validate and canonicalize a PMID (positive integer, no leading zeros)."""
    if isinstance(value, bool):
        raise ValueError(f"not a PMID: {value!r}")
    if isinstance(value, int):
        pmid = value
    else:
        text = str(value).strip()
        if not text.isdigit():
            raise ValueError(f"not a PMID: {value!r}")
        pmid = int(text)
    if pmid <= 0:
        raise ValueError(f"PMID must be positive, got {pmid}")
    return pmid


def canonical_pmid(pmid: Pmid) -> str:
    return str(int(pmid))


@dataclass(frozen=True)
class FetchPolicy:
    """Request budget and retry behavior for one crawl."""

    max_requests_per_second: float = 3.0
    max_retries: int = 3
    backoff_base: float = 0.5  # seconds; delay = base * 2**attempt
    api_key: str | None = None
    concurrency_limit: int = 4

    def __post_init__(self):
        if self.max_requests_per_second <= 0:
            raise ValueError("max_requests_per_second must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")

    @property
    def api_key_present(self) -> bool:
        return self.api_key is not None

    @classmethod
    def from_env(cls, **overrides) -> "FetchPolicy":
        """Default policy: 10 req/s with an NCBI_API_KEY in the env, 3 without."""
        key = os.environ.get(API_KEY_ENV) or None
        rps = overrides.pop("max_requests_per_second", 10.0 if key else 3.0)
        return cls(max_requests_per_second=rps, api_key=key, **overrides)


class Clock(Protocol):
    def monotonic(self) -> float: ...
    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    monotonic = staticmethod(time.monotonic)
    sleep = staticmethod(time.sleep)


class RateLimiter:
    """Serializes request starts: minimum spacing of 1/rps between issues,
    and never more than ceil(rps) issues inside any sliding 1-second window.

    Thread-safe; the clock is injectable so tests can drive virtual time.
    """

    def __init__(self, max_requests_per_second: float, clock: Clock | None = None):
        if max_requests_per_second <= 0:
            raise ValueError("rate must be positive")
        self._interval = 1.0 / max_requests_per_second
        self._cap = math.ceil(max_requests_per_second)
        self._clock = clock or SystemClock()
        self._lock = threading.Lock()
        self._next_free = 0.0
        self._window: deque[float] = deque()

    def acquire(self) -> float:
        """Block until a request may be issued; returns the issue time."""
        with self._lock:
            now = self._clock.monotonic()
            t = max(now, self._next_free)
            while self._window and self._window[0] <= t - 1.0:
                self._window.popleft()
            # partial second inside t-1.0 can round below window[0], so pop
            # explicitly rather than re-testing the lossy subtraction
            while len(self._window) >= self._cap:
                oldest = self._window.popleft()
                t = max(t, oldest + 1.0)
            self._window.append(t)
            self._next_free = t + self._interval
        if t > now:
            self._clock.sleep(t - now)
        return t


class Transport(Protocol):
    """Performs one HTTP GET; returns (status_code, body_bytes)."""

    def request(self, url: str, params: dict) -> tuple[int, bytes]: ...


class RequestsTransport:
    def __init__(self, timeout: float = 30.0):
        import requests

        self._session = requests.Session()
        self._session.headers["User-Agent"] = USER_AGENT
        self._timeout = timeout

    def request(self, url: str, params: dict) -> tuple[int, bytes]:
        resp = self._session.get(url, params=params, timeout=self._timeout)
        return resp.status_code, resp.content


@dataclass
class CacheEntry:
    pmid: Pmid
    kind: str  # "cited_list" | "abstract"
    payload: bytes
    fetched_at: float


class PayloadCache:
    """On-disk store of raw API payloads, one file per (pmid, kind)."""

    KINDS = ("cited_list", "abstract")

    def __init__(self, directory: str | Path | None = None):
        base = directory or os.environ.get(CACHE_DIR_ENV)
        if base is None:
            raise ValueError(
                f"no cache directory: pass one or set {CACHE_DIR_ENV}")
        self.directory = Path(base)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, pmid: Pmid, kind: str) -> Path:
        if kind not in self.KINDS:
            raise ValueError(f"unknown cache kind {kind!r}")
        return self.directory / f"{canonical_pmid(pmid)}.{kind}.xml"

    def get(self, pmid: Pmid, kind: str) -> bytes | None:
        path = self._path(pmid, kind)
        with self._lock:
            if not path.exists():
                return None
            return path.read_bytes()

    def put(self, pmid: Pmid, kind: str, payload: bytes) -> None:
        path = self._path(pmid, kind)
        with self._lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(payload)
            tmp.replace(path)

    def entry(self, pmid: Pmid, kind: str) -> CacheEntry | None:
        path = self._path(pmid, kind)
        if not path.exists():
            return None
        return CacheEntry(pmid=pmid, kind=kind, payload=path.read_bytes(),
                          fetched_at=path.stat().st_mtime)


# ---------------------------------------------------------------------------
# XML parsing (pure functions; same payload bytes -> same output)
# ---------------------------------------------------------------------------

def _parse_xml(payload: bytes) -> ET.Element:
    try:
        return ET.fromstring(payload)
    except ET.ParseError as exc:
        raise ParseError(f"malformed XML: {exc}") from exc


def parse_cited_pmids(payload: bytes) -> list[Pmid]:
    """Extract the de-duplicated reference PMID list from an elink response,
    in document order."""
    root = _parse_xml(payload)
    linkset = root.find("LinkSet")
    if linkset is None:
        raise ParseError("elink response has no LinkSet")
    if linkset.find("ERROR") is not None or root.find("ERROR") is not None:
        raise NotFound((linkset.findtext("ERROR") or root.findtext("ERROR") or
                        "elink reported an error").strip())
    seen = set()
    out: list[Pmid] = []
    for db in linkset.findall("LinkSetDb"):
        if (db.findtext("LinkName") or "").strip() != REFS_LINKNAME:
            continue
        for id_el in db.findall("Link/Id"):
            text = (id_el.text or "").strip()
            if not text.isdigit():
                raise ParseError(f"non-numeric Id in elink response: {text!r}")
            pmid = int(text)
            if pmid not in seen:
                seen.add(pmid)
                out.append(pmid)
    return out


def _collapse_whitespace(text: str) -> str:
    return " ".join(text.split())


def parse_abstract(payload: bytes) -> str:
    """Extract plain abstract text from an efetch XML response.

    Markup inside AbstractText is stripped; labeled sections of structured
    abstracts are concatenated in document order, separated by single
    spaces; all internal whitespace is collapsed.
    """
    root = _parse_xml(payload)
    if root.tag != "PubmedArticleSet":
        raise ParseError(f"unexpected root element {root.tag!r}")
    article = root.find("PubmedArticle")
    if article is None:
        raise NotFound("no PubmedArticle in efetch response")
    sections = article.findall(".//Abstract/AbstractText")
    parts = [_collapse_whitespace("".join(el.itertext())) for el in sections]
    parts = [p for p in parts if p]
    if not parts:
        raise AbstractMissing("record has no abstract text")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# Client
# ---------------------------------------------------------------------------

class PubmedClient:
    """E-utilities client shared by crawl workers.

    The rate limiter and cache are internally synchronized; individual
    fetches are independent and may run in parallel up to the policy's
    concurrency_limit.
    """

    def __init__(
        self,
        policy: FetchPolicy | None = None,
        cache_dir: str | Path | None = None,
        transport: Transport | None = None,
        clock: Clock | None = None,
    ):
        self.policy = policy or FetchPolicy.from_env()
        self.cache = PayloadCache(cache_dir)
        self._transport = transport or RequestsTransport()
        self._clock = clock or SystemClock()
        self._limiter = RateLimiter(self.policy.max_requests_per_second, self._clock)
        self._inflight = threading.Semaphore(self.policy.concurrency_limit)

    def fetch_cited_pmids(self, pmid: Pmid) -> list[Pmid]:
        """PMIDs in the record's reference list, de-duplicated, API order."""
        payload = self._fetch(
            pmid, "cited_list", f"{EUTILS_BASE}/elink.fcgi",
            {"dbfrom": "pubmed", "db": "pubmed", "linkname": REFS_LINKNAME,
             "id": canonical_pmid(pmid), "retmode": "xml"},
        )
        return parse_cited_pmids(payload)

    def fetch_abstract(self, pmid: Pmid) -> str:
        """Plain-text abstract with markup stripped and whitespace collapsed."""
        payload = self._fetch(
            pmid, "abstract", f"{EUTILS_BASE}/efetch.fcgi",
            {"db": "pubmed", "id": canonical_pmid(pmid),
             "retmode": "xml", "rettype": "abstract"},
        )
        return parse_abstract(payload)

    def _fetch(self, pmid: Pmid, kind: str, url: str, params: dict) -> bytes:
        pmid = parse_pmid(pmid)
        cached = self.cache.get(pmid, kind)
        if cached is not None:
            return cached
        if self.policy.api_key:
            params = {**params, "api_key": self.policy.api_key}
        payload = self._request_with_retries(url, params)
        self.cache.put(pmid, kind, payload)
        return payload

    def _request_with_retries(self, url: str, params: dict) -> bytes:
        last_status: int | None = None
        last_error: Exception | None = None
        for attempt in range(self.policy.max_retries + 1):
            if attempt > 0:
                # exponential, hence non-decreasing, inter-attempt delay
                self._clock.sleep(self.policy.backoff_base * 2 ** (attempt - 1))
            self._limiter.acquire()
            try:
                with self._inflight:
                    status, body = self._transport.request(url, params)
            except Exception as exc:  # transport-level failure
                last_status, last_error = None, exc
                continue
            if status == 200:
                return body
            if status == 404:
                raise NotFound(f"{url} returned 404")
            last_status, last_error = status, None
        if last_status == 429:
            raise RateLimited(
                f"still throttled after {self.policy.max_retries} retries")
        detail = last_error or f"status {last_status}"
        raise NetworkError(
            f"request failed after {self.policy.max_retries} retries: {detail}")
