"""Traversal-parameter sweep: dataset statistics per (n_paths, l_path) setting.

Runs the miner over a corpus for the nine standard configurations (vary
the path count at length 3, then vary the length at 3 paths) and emits a
table skeleton: per-config record counts and mean negatives, with score
cells left empty since filling them requires a trained retriever.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .mining import MiningConfig, QueryProvider, mine_record
from .vectorspace import EmbeddingProvider

DEFAULT_SCORE_COLUMNS = ("nfcorpus", "scidocs", "scifact", "arguana", "fiqa")

VARY_N_PATHS = "vary_n_paths"
VARY_L_PATH = "vary_l_path"


def ablation_grid() -> list[tuple[str, int, int]]:
    """The nine (section, n_paths, l_path) settings of the standard sweep."""
    grid = [(VARY_N_PATHS, n, 3) for n in (1, 2, 4, 5)]
    grid += [(VARY_L_PATH, 3, l) for l in (1, 2, 3, 4, 5)]
    return grid


@dataclass
class AblationRow:
    section: str
    n_paths: int
    l_path: int
    records: int
    mean_negatives: float | None
    scores: dict[str, float | None]

    def to_json(self) -> dict:
        return {
            "section": self.section,
            "n_paths": self.n_paths,
            "l_path": self.l_path,
            "records": self.records,
            "mean_negatives": self.mean_negatives,
            "scores": self.scores,
        }


def run_ablation(
    records,
    embedder: EmbeddingProvider,
    queries: QueryProvider,
    seed: int = 42,
    k_sample: int = 5,
    score_columns=DEFAULT_SCORE_COLUMNS,
) -> list[AblationRow]:
    records = list(records)
    rows = []
    for section, n_paths, l_path in ablation_grid():
        cfg = MiningConfig(n_paths=n_paths, l_path=l_path, k_sample=k_sample,
                           seed=seed)
        total = 0
        for record in records:
            triplet = mine_record(record, embedder, queries, cfg)
            total += len(triplet.negatives)
        rows.append(AblationRow(
            section=section,
            n_paths=n_paths,
            l_path=l_path,
            records=len(records),
            mean_negatives=total / len(records) if records else None,
            scores={c: None for c in score_columns},
        ))
    return rows


def render_table(rows: list[AblationRow]) -> str:
    """Human-readable skeleton; empty score cells render as '-'."""
    if not rows:
        return "(no rows)"
    score_cols = list(rows[0].scores)
    header = ["n_paths", "l_path", "records", "mean_negs", *score_cols]
    lines = []
    widths = [max(len(h), 9) for h in header]

    def fmt_row(cells):
        return "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))

    section_titles = {
        VARY_N_PATHS: "vary number of paths (path length fixed at 3)",
        VARY_L_PATH: "vary path length (number of paths fixed at 3)",
    }
    current = None
    for row in rows:
        if row.section != current:
            current = row.section
            lines.append(f"-- {section_titles.get(current, current)} --")
            lines.append(fmt_row(header))
        mean = "-" if row.mean_negatives is None else f"{row.mean_negatives:.2f}"
        cells = [row.n_paths, row.l_path, row.records, mean]
        cells += ["-" if row.scores[c] is None else f"{row.scores[c]:.4f}"
                  for c in score_cols]
        lines.append(fmt_row(cells))
    return "\n".join(lines)


def write_report(rows: list[AblationRow], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"rows": [r.to_json() for r in rows]}, fh, indent=2)
        fh.write("\n")
