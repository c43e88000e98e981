"""2-hop citation neighborhood construction and JSONL corpus persistence.

Each retained seed becomes a CitationRecord: the seed abstract plus the
abstracts of the papers it cites (one_hop) and of the papers those cite
(two_hop). A PMID reachable at both hops is stored only in one_hop; a
1-hop paper whose abstract is missing is dropped before expansion, so its
references enter only through other parents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import AbstractMissing, NotFound, SchemaError
from .pubmed import Pmid, PubmedClient, parse_pmid


@dataclass
class CitationRecord:
    """A seed abstract plus its 1-hop and 2-hop cited abstracts."""

    positive_pmid: Pmid
    positive_abstract: str
    one_hop: list[tuple[Pmid, str]]
    two_hop: list[tuple[Pmid, str]]

    def candidate_count(self) -> int:
        return len(self.one_hop) + len(self.two_hop)

    def check(self) -> None:
        """Raise ValueError on any structural invariant violation."""
        if not self.positive_abstract:
            raise ValueError("positive_abstract is empty")
        ids = [p for p, _ in self.one_hop] + [p for p, _ in self.two_hop]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate PMIDs across hop lists")
        if self.positive_pmid in ids:
            raise ValueError("positive_pmid present in a hop list")
        if any(not a for _, a in self.one_hop + self.two_hop):
            raise ValueError("empty stored abstract")


@dataclass(frozen=True)
class NeighborhoodConfig:
    # default leaves room for the default mining budget (3*3 + 1 negatives)
    min_candidates: int = 10
    max_two_hop_per_parent: int | None = None

    def __post_init__(self):
        if self.min_candidates < 1:
            raise ValueError("min_candidates must be >= 1")


@dataclass(frozen=True)
class Rejected:
    """A seed that produced no usable record, with the reason why."""

    seed: Pmid
    reason: str


def build_neighborhood(
    client: PubmedClient, seed: Pmid, cfg: NeighborhoodConfig
) -> CitationRecord | Rejected:
    """Crawl one seed's 2-hop neighborhood.

    Neighbors whose abstract is missing (or whose PMID the API does not
    know) are dropped silently; network and parse failures propagate once
    the client's retries are exhausted.
    """
    seed = parse_pmid(seed)
    try:
        positive_abstract = client.fetch_abstract(seed)
    except (AbstractMissing, NotFound):
        return Rejected(seed=seed, reason="seed abstract missing")

    def try_abstract(pmid: Pmid) -> str | None:
        try:
            return client.fetch_abstract(pmid)
        except (AbstractMissing, NotFound):
            return None

    one_hop: list[tuple[Pmid, str]] = []
    retained_parents: list[Pmid] = []
    seen: set[Pmid] = {seed}
    for pmid in client.fetch_cited_pmids(seed):
        if pmid in seen:
            continue
        seen.add(pmid)
        abstract = try_abstract(pmid)
        if abstract is None:
            continue  # parent dropped; not expanded below
        one_hop.append((pmid, abstract))
        retained_parents.append(pmid)

    two_hop: list[tuple[Pmid, str]] = []
    for parent in retained_parents:
        children = [c for c in client.fetch_cited_pmids(parent) if c not in seen]
        if cfg.max_two_hop_per_parent is not None:
            children = children[: cfg.max_two_hop_per_parent]
        for child in children:
            seen.add(child)
            abstract = try_abstract(child)
            if abstract is not None:
                two_hop.append((child, abstract))

    record = CitationRecord(
        positive_pmid=seed,
        positive_abstract=positive_abstract,
        one_hop=one_hop,
        two_hop=two_hop,
    )
    if record.candidate_count() < cfg.min_candidates:
        return Rejected(seed=seed, reason="insufficient candidates")
    record.check()
    return record


# ---------------------------------------------------------------------------
# Corpus JSONL
# ---------------------------------------------------------------------------

_FIELDS = ("positive_pmid", "positive_abstract", "one_hop", "two_hop")


def record_to_json(record: CitationRecord) -> dict:
    return {
        "positive_pmid": record.positive_pmid,
        "positive_abstract": record.positive_abstract,
        "one_hop": [{"pmid": p, "abstract": a} for p, a in record.one_hop],
        "two_hop": [{"pmid": p, "abstract": a} for p, a in record.two_hop],
    }


def _hop_from_json(items, line: int, key: str) -> list[tuple[Pmid, str]]:
    out = []
    for item in items:
        if not isinstance(item, dict) or set(item) != {"pmid", "abstract"}:
            raise SchemaError(f"bad entry in {key!r}", line=line)
        out.append((int(item["pmid"]), str(item["abstract"])))
    return out


def record_from_json(obj: dict, line: int = 0) -> CitationRecord:
    if not isinstance(obj, dict):
        raise SchemaError("record is not an object", line=line)
    missing = [f for f in _FIELDS if f not in obj]
    if missing:
        raise SchemaError(f"missing field {missing[0]!r}", line=line)
    unknown = [k for k in obj if k not in _FIELDS]
    if unknown:
        raise SchemaError(f"unknown field {unknown[0]!r}", line=line)
    return CitationRecord(
        positive_pmid=int(obj["positive_pmid"]),
        positive_abstract=str(obj["positive_abstract"]),
        one_hop=_hop_from_json(obj["one_hop"], line, "one_hop"),
        two_hop=_hop_from_json(obj["two_hop"], line, "two_hop"),
    )


def write_corpus(records: Iterable[CitationRecord], path) -> int:
    """One JSON object per line, order-preserving. Returns the count written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json(record), ensure_ascii=False) + "\n")
            count += 1
    return count


def read_corpus(path) -> Iterator[CitationRecord]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=lineno)
            yield record_from_json(obj, line=lineno)
