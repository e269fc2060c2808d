"""Binary link/path incidence matrix and failure-robustness queries.

Rows are links, columns are paths; entry 1 means the path traverses the
link.  The transpose swaps the two roles.  The range of the relation is
the set of paths touching at least one link, the domain the set of
links carried by at least one path.  A path survives a set of failed
links when none of its links failed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class UnknownLink(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class FilterMatrix:
    links: tuple[str, ...]
    paths: tuple[str, ...]
    values: np.ndarray  # shape (len(links), len(paths)), entries 0/1

    def __post_init__(self):
        values = np.asarray(self.values, dtype=int)
        if values.shape != (len(self.links), len(self.paths)):
            raise ValueError(
                f"shape {values.shape} does not match "
                f"{len(self.links)} links x {len(self.paths)} paths"
            )
        if not np.isin(values, (0, 1)).all():
            raise ValueError("entries must be 0 or 1")
        if len(set(self.links)) != len(self.links) or len(set(self.paths)) != len(self.paths):
            raise ValueError("labels must be unique")
        object.__setattr__(self, "values", values)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FilterMatrix)
            and self.links == other.links
            and self.paths == other.paths
            and np.array_equal(self.values, other.values)
        )

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["", *self.paths])
            for label, row in zip(self.links, self.values):
                writer.writerow([label, *(int(x) for x in row)])
        return path

    @classmethod
    def from_csv(cls, path) -> "FilterMatrix":
        with Path(path).open("r", encoding="utf-8", newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
        paths = tuple(rows[0][1:])
        links = tuple(row[0] for row in rows[1:])
        values = [[int(cell) for cell in row[1:]] for row in rows[1:]]
        return cls(links=links, paths=paths, values=np.array(values, dtype=int))


def build_filter(
    path_links: Sequence[tuple[str, Iterable[str]]],
    links: Sequence[str],
) -> FilterMatrix:
    """Incidence matrix from (path label, links used) declarations."""
    links = tuple(links)
    index = {label: i for i, label in enumerate(links)}
    paths = tuple(label for label, _ in path_links)
    values = np.zeros((len(links), len(paths)), dtype=int)
    for col, (_, used) in enumerate(path_links):
        for link in used:
            if link not in index:
                raise UnknownLink(link)
            values[index[link], col] = 1
    return FilterMatrix(links=links, paths=paths, values=values)


def transpose(matrix: FilterMatrix) -> FilterMatrix:
    """Exchange rows with columns; applying it twice restores the input."""
    return FilterMatrix(
        links=matrix.paths, paths=matrix.links, values=matrix.values.T
    )


def relation_range(matrix: FilterMatrix) -> set[str]:
    """Paths that traverse at least one link."""
    hit = matrix.values.any(axis=0)
    return {label for label, used in zip(matrix.paths, hit) if used}


def relation_domain(matrix: FilterMatrix) -> set[str]:
    """Links carried by at least one path."""
    hit = matrix.values.any(axis=1)
    return {label for label, used in zip(matrix.links, hit) if used}


def surviving_paths(matrix: FilterMatrix, failed_links: Iterable[str]) -> set[str]:
    """Paths whose every used link lies outside the failed set."""
    failed = set(failed_links)
    unknown = failed - set(matrix.links)
    if unknown:
        raise UnknownLink(", ".join(sorted(unknown)))
    rows = [i for i, label in enumerate(matrix.links) if label in failed]
    dead = matrix.values[rows].any(axis=0) if rows else np.zeros(len(matrix.paths), bool)
    return {label for label, hit in zip(matrix.paths, dead) if not hit}
