"""Hierarchical object catalogue: parsing, validation, and consistent label tuples.

A taxonomy is a strict forest of depth ``B``: level 1 holds the coarsest
classes and every class at a finer level has exactly one parent at the level
above.  A *consistent* label tuple assigns one class per level such that each
finer label is a child of the coarser one; there is exactly one such tuple per
leaf class, so the finest level enumerates them.

Levels are 0-based in code (``level 0`` = coarsest); file formats and reports
use the 1-based convention.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

LabelTuple = tuple[int, ...]


class TaxonomyError(ValueError):
    """Base class for taxonomy file and structure errors."""


class TaxonomyParseError(TaxonomyError):
    """Malformed taxonomy file content (carries a line number)."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TaxonomyValidationError(TaxonomyError):
    """Structurally invalid taxonomy (names the offending class)."""


@dataclass(frozen=True)
class Taxonomy:
    """Immutable class hierarchy.

    ``names[l]`` lists the class names of level ``l`` in file order;
    ``parents[l][i]`` is the index of class ``(l, i)``'s parent at level
    ``l - 1`` (``parents[0]`` is empty).  Instances are safe to share across
    concurrent readers.
    """

    names: tuple[tuple[str, ...], ...]
    parents: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        names = tuple(tuple(level) for level in self.names)
        parents = tuple(tuple(level) for level in self.parents)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "parents", parents)
        if not names:
            raise TaxonomyValidationError("taxonomy needs at least one level")
        if len(parents) != len(names):
            raise TaxonomyValidationError("names/parents level count mismatch")
        if parents[0]:
            raise TaxonomyValidationError("level 1 classes cannot have parents")
        for l, level_names in enumerate(names):
            if not level_names:
                raise TaxonomyValidationError(f"level {l + 1} has no classes")
            seen: set[str] = set()
            for name in level_names:
                if name in seen:
                    raise TaxonomyValidationError(
                        f"duplicate class name '{name}' at level {l + 1}"
                    )
                seen.add(name)
        for l in range(1, len(names)):
            if len(parents[l]) != len(names[l]):
                raise TaxonomyValidationError(
                    f"level {l + 1}: parent list length mismatch"
                )
            for i, p in enumerate(parents[l]):
                if not 0 <= p < len(names[l - 1]):
                    raise TaxonomyValidationError(
                        f"class '{names[l][i]}' at level {l + 1} has an "
                        f"invalid parent index {p}"
                    )
        # Every non-leaf class must appear on a complete root-to-leaf path.
        for l in range(len(names) - 1):
            with_children = set(parents[l + 1])
            for i, name in enumerate(names[l]):
                if i not in with_children:
                    raise TaxonomyValidationError(
                        f"class '{name}' at level {l + 1} has no children"
                    )

    @property
    def level_count(self) -> int:
        return len(self.names)

    @property
    def class_counts(self) -> tuple[int, ...]:
        """Number of classes per level, coarsest first."""
        return tuple(len(level) for level in self.names)

    def class_name(self, level: int, index: int) -> str:
        return self.names[level][index]

    def class_index(self, level: int, name: str) -> int:
        try:
            return self.names[level].index(name)
        except ValueError:
            raise KeyError(f"no class '{name}' at level {level + 1}") from None

    def parent_of(self, level: int, index: int) -> int:
        if level == 0:
            raise ValueError("level 1 classes have no parent")
        return self.parents[level][index]

    @cached_property
    def tuples(self) -> tuple[LabelTuple, ...]:
        """All consistent label tuples, ordered by leaf index."""
        out = []
        for leaf in range(len(self.names[-1])):
            path = [leaf]
            for l in range(self.level_count - 1, 0, -1):
                path.append(self.parents[l][path[-1]])
            out.append(tuple(reversed(path)))
        return tuple(out)

    @cached_property
    def tuple_index(self) -> tuple[np.ndarray, ...]:
        """Per level, the class index of every consistent tuple.

        ``tuple_index[l][i]`` is the level-``l`` entry of tuple ``i``; used to
        gather per-level scores for all tuples in one indexing operation.
        """
        arr = np.asarray(self.tuples, dtype=np.int64).reshape(
            len(self.tuples), self.level_count
        )
        return tuple(arr[:, l].copy() for l in range(self.level_count))

    def is_consistent(self, labels: Sequence[int]) -> bool:
        """True iff each label is a child of the label one level up."""
        labels = tuple(int(x) for x in labels)
        if len(labels) != self.level_count:
            raise ValueError(
                f"label tuple length {len(labels)} != level count {self.level_count}"
            )
        for l, idx in enumerate(labels):
            if not 0 <= idx < len(self.names[l]):
                raise ValueError(f"label {idx} out of range at level {l + 1}")
        return all(
            self.parents[l][labels[l]] == labels[l - 1]
            for l in range(1, self.level_count)
        )

    def lift_to_tuple(self, leaf: int) -> LabelTuple:
        """The unique consistent tuple ending at the given leaf."""
        if not 0 <= leaf < len(self.names[-1]):
            raise ValueError(f"leaf index {leaf} out of range")
        return self.tuples[leaf]

    def tuple_names(self, labels: Sequence[int]) -> tuple[str, ...]:
        return tuple(self.names[l][i] for l, i in enumerate(labels))


def enumerate_tuples(t: Taxonomy) -> tuple[LabelTuple, ...]:
    """All consistent label tuples of ``t``, one per leaf, by leaf index."""
    return t.tuples


def parse_taxonomy(text: str) -> Taxonomy:
    """Parse the line-oriented taxonomy format.

    Each class line is ``level<TAB>name<TAB>parent_name`` with ``-`` as the
    parent of level-1 classes; ``#`` starts a comment and levels must appear
    in nondecreasing order.
    """
    names: list[list[str]] = []
    parents: list[list[int]] = []
    current_level = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise TaxonomyParseError(
                line_no, f"expected 3 tab-separated fields, got {len(fields)}"
            )
        level_str, name, parent_name = (f.strip() for f in fields)
        try:
            level = int(level_str)
        except ValueError:
            raise TaxonomyParseError(line_no, f"bad level '{level_str}'") from None
        if level < 1:
            raise TaxonomyParseError(line_no, f"level must be >= 1, got {level}")
        if level < current_level:
            raise TaxonomyParseError(
                line_no, f"level {level} after level {current_level} "
                "(levels must be nondecreasing)"
            )
        if level > current_level + 1:
            raise TaxonomyParseError(
                line_no, f"level {level} before any level-{level - 1} class"
            )
        if not name:
            raise TaxonomyParseError(line_no, "empty class name")
        if level > current_level:
            names.append([])
            parents.append([])
            current_level = level
        l = level - 1
        if name in names[l]:
            raise TaxonomyValidationError(
                f"duplicate class name '{name}' at level {level}"
            )
        if level == 1:
            if parent_name != "-":
                raise TaxonomyParseError(
                    line_no, f"level-1 class '{name}' must use parent '-'"
                )
            parent = -1
        else:
            if parent_name == "-":
                raise TaxonomyParseError(
                    line_no, f"class '{name}' at level {level} needs a parent name"
                )
            try:
                parent = names[l - 1].index(parent_name)
            except ValueError:
                raise TaxonomyValidationError(
                    f"class '{name}' at level {level} names unknown parent "
                    f"'{parent_name}'"
                ) from None
        names[l].append(name)
        if level > 1:
            parents[l].append(parent)
    if not names:
        raise TaxonomyValidationError("taxonomy file defines no classes")
    return Taxonomy(tuple(tuple(n) for n in names), tuple(tuple(p) for p in parents))


def serialize_taxonomy(t: Taxonomy) -> str:
    """Canonical text form; ``parse_taxonomy`` round-trips it exactly."""
    lines = ["# level\tname\tparent"]
    for l, level_names in enumerate(t.names):
        for i, name in enumerate(level_names):
            parent = "-" if l == 0 else t.names[l - 1][t.parents[l][i]]
            lines.append(f"{l + 1}\t{name}\t{parent}")
    return "\n".join(lines) + "\n"


def taxonomy_digest(t: Taxonomy) -> str:
    """Short stable digest used to match datasets and checkpoints."""
    return hashlib.sha256(serialize_taxonomy(t).encode("utf-8")).hexdigest()[:16]


def load_taxonomy(path) -> Taxonomy:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_taxonomy(fh.read())


def validate_label_tuples(t: Taxonomy, labels: Iterable[Sequence[int]]) -> None:
    """Raise if any tuple is out of range or hierarchy-inconsistent."""
    for k, row in enumerate(labels):
        if not t.is_consistent(row):
            raise TaxonomyValidationError(
                f"label tuple {tuple(row)} at position {k} violates the hierarchy"
            )
