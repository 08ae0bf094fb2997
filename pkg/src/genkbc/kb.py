"""Data model for generics tensors and their background knowledge.

A knowledge base is a set of (source, relation, target) triples about
common nouns, each carrying a categorical quantifier label (all / some /
none).  Background knowledge consists of an isa taxonomy over entities,
an entity -> types map, and a per-relation schema of (domain, range)
type pairs.  Everything here is immutable after construction and safe
to share across threads.

File formats are tab-separated UTF-8:

    kb        source <TAB> relation <TAB> target <TAB> label
    taxonomy  child  <TAB> parent
    typemap   entity <TAB> type
    schema    relation <TAB> domain_type <TAB> range_type
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence


class KBError(Exception):
    """Malformed or inconsistent knowledge-base input."""


class QuantLabel(enum.Enum):
    """Categorical quantifier attached to a triple, read "q s r (some) t".

    Ordered ALL > SOME > NONE for rule application.
    """

    ALL = "all"
    SOME = "some"
    NONE = "none"

    @classmethod
    def parse(cls, text: str) -> "QuantLabel":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise KBError(f"unknown label {text!r} (expected all/some/none)") from None

    @property
    def rank(self) -> int:
        return {"all": 2, "some": 1, "none": 0}[self.value]

    def to_class(self) -> int:
        """Three-class encoding: ALL -> 1, SOME -> 2, NONE -> 3."""
        return {"all": 1, "some": 2, "none": 3}[self.value]

    def to_sign(self) -> int:
        """Binary encoding: ALL/SOME -> +1, NONE -> -1."""
        return -1 if self is QuantLabel.NONE else 1

    def is_positive(self) -> bool:
        return self is not QuantLabel.NONE

    def __lt__(self, other: "QuantLabel") -> bool:
        return self.rank < other.rank


@dataclass(frozen=True, order=True)
class Triple:
    source: str
    relation: str
    target: str

    def __str__(self) -> str:
        return f"({self.source}, {self.relation}, {self.target})"


def _vocab_from_triples(triples: Iterable[Triple]) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Entity/relation vocabularies in order of first appearance."""
    entities: dict[str, None] = {}
    relations: dict[str, None] = {}
    for t in triples:
        entities.setdefault(t.source)
        relations.setdefault(t.relation)
        entities.setdefault(t.target)
    return tuple(entities), tuple(relations)


class KnowledgeBase:
    """Immutable map from triples to quantifier labels plus vocabularies.

    Vocabulary order is the insertion order of first appearance, which
    makes every derived artifact (splits, model layouts) reproducible.
    """

    def __init__(self, items: Iterable[tuple[Triple, QuantLabel]]):
        triples: dict[Triple, QuantLabel] = {}
        for triple, label in items:
            prev = triples.get(triple)
            if prev is not None and prev is not label:
                raise KBError(f"conflicting labels for {triple}: {prev.value} vs {label.value}")
            triples[triple] = label
        self._triples = triples
        self._entities, self._relations = _vocab_from_triples(triples)
        self._entity_set = frozenset(self._entities)
        self._relation_set = frozenset(self._relations)

    @property
    def triples(self) -> Mapping[Triple, QuantLabel]:
        return self._triples

    @property
    def entities(self) -> tuple[str, ...]:
        return self._entities

    @property
    def relations(self) -> tuple[str, ...]:
        return self._relations

    def __len__(self) -> int:
        return len(self._triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._triples

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def label(self, triple: Triple) -> QuantLabel | None:
        return self._triples.get(triple)

    def has_entity(self, entity: str) -> bool:
        return entity in self._entity_set

    def merge(self, items: Iterable[tuple[Triple, QuantLabel]]) -> "KnowledgeBase":
        """New KB with extra triples appended; existing labels win silently
        on exact duplicates and conflicts raise."""
        merged = list(self._triples.items())
        seen = self._triples
        for triple, label in items:
            prev = seen.get(triple)
            if prev is None:
                merged.append((triple, label))
            elif prev is not label:
                raise KBError(f"conflicting labels for {triple}: {prev.value} vs {label.value}")
        return KnowledgeBase(merged)

    def canonical_lines(self) -> list[str]:
        """Lexicographically sorted TSV lines (diff-able, dedup-able)."""
        rows = sorted((t.source, t.relation, t.target, lab.value) for t, lab in self._triples.items())
        return ["\t".join(row) for row in rows]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return self._triples == other._triples

    def __hash__(self) -> int:  # pragma: no cover - identity use only
        return id(self)


def load_kb(path: str | Path) -> KnowledgeBase:
    """Parse a 4-column TSV knowledge base.

    Duplicate lines with identical labels merge silently; conflicting
    labels are a hard error (surfaces data corruption early).
    """
    path = Path(path)
    items: dict[Triple, tuple[QuantLabel, int]] = {}
    with open(path, encoding="utf-8") as fh:
        n_lines = 0
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            n_lines += 1
            fields = line.split("\t")
            if len(fields) != 4:
                raise KBError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(fields)}")
            source, relation, target, label_text = (f.strip() for f in fields)
            if not (source and relation and target):
                raise KBError(f"{path}:{lineno}: empty field")
            try:
                label = QuantLabel.parse(label_text)
            except KBError as exc:
                raise KBError(f"{path}:{lineno}: {exc}") from None
            triple = Triple(source, relation, target)
            prev = items.get(triple)
            if prev is not None and prev[0] is not label:
                raise KBError(f"{path}:{lineno}: conflicting label at line {lineno} for {triple} "
                              f"(line {prev[1]} says {prev[0].value}, line {lineno} says {label.value})")
            if prev is None:
                items[triple] = (label, lineno)
    if n_lines == 0:
        raise KBError(f"{path}: empty knowledge base file")
    return KnowledgeBase((t, lab) for t, (lab, _) in items.items())


def save_kb(kb: KnowledgeBase, path: str | Path) -> None:
    Path(path).write_text("\n".join(kb.canonical_lines()) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class Schema:
    """Per-relation domain-range type pairs.

    A relation absent from the mapping is unconstrained; the consistency
    policy for that case lives in the guidance module.
    """

    pairs: Mapping[str, tuple[tuple[str, str], ...]]

    @classmethod
    def from_items(cls, items: Iterable[tuple[str, str, str]]) -> "Schema":
        table: dict[str, list[tuple[str, str]]] = {}
        for relation, dom, rng in items:
            bucket = table.setdefault(relation, [])
            if (dom, rng) not in bucket:
                bucket.append((dom, rng))
        return cls({rel: tuple(ps) for rel, ps in table.items()})

    def for_relation(self, relation: str) -> tuple[tuple[str, str], ...] | None:
        """None means unconstrained (relation not in the schema file)."""
        return self.pairs.get(relation)

    @property
    def relations(self) -> tuple[str, ...]:
        return tuple(self.pairs)

    def types(self) -> frozenset[str]:
        out: set[str] = set()
        for ps in self.pairs.values():
            for dom, rng in ps:
                out.add(dom)
                out.add(rng)
        return frozenset(out)


@dataclass(frozen=True)
class TypeMap:
    """entity -> set of type ids; unknown entities map to the empty set."""

    assignments: Mapping[str, frozenset[str]]

    @classmethod
    def from_items(cls, items: Iterable[tuple[str, str]]) -> "TypeMap":
        table: dict[str, set[str]] = {}
        for entity, type_id in items:
            table.setdefault(entity, set()).add(type_id)
        return cls({e: frozenset(ts) for e, ts in table.items()})

    def types(self, entity: str) -> frozenset[str]:
        return self.assignments.get(entity, frozenset())

    @property
    def entities(self) -> tuple[str, ...]:
        return tuple(self.assignments)


_EMPTY: frozenset[str] = frozenset()


class Taxonomy:
    """Acyclic isa partial order over entities (multi-parent allowed).

    Keeps the child -> parents edge set plus the exact inverse index,
    and answers sibling queries: sibling(e) = union over parents p of
    children(p), minus e itself.
    """

    def __init__(self, edges: Iterable[tuple[str, str]]):
        parents: dict[str, dict[str, None]] = {}
        children: dict[str, dict[str, None]] = {}
        nodes: dict[str, None] = {}
        for child, parent in edges:
            if child == parent:
                raise KBError(f"self-loop in taxonomy: {child!r}")
            parents.setdefault(child, {}).setdefault(parent)
            children.setdefault(parent, {}).setdefault(child)
            nodes.setdefault(child)
            nodes.setdefault(parent)
        self._parents = {c: tuple(ps) for c, ps in parents.items()}
        self._children = {p: tuple(cs) for p, cs in children.items()}
        self._nodes = tuple(nodes)
        cycle = self._find_cycle()
        if cycle is not None:
            raise KBError("cycle in taxonomy: " + " -> ".join(cycle))

    def _find_cycle(self) -> list[str] | None:
        """Returns one witness path child -> ... -> child, or None."""
        WHITE, GREY, BLACK = 0, 1, 2
        color = {n: WHITE for n in self._nodes}
        for start in self._nodes:
            if color[start] != WHITE:
                continue
            stack: list[tuple[str, Iterator[str]]] = [(start, iter(self._parents.get(start, ())))]
            color[start] = GREY
            path = [start]
            while stack:
                node, it = stack[-1]
                advanced = False
                for nxt in it:
                    if color[nxt] == GREY:
                        return path[path.index(nxt):] + [nxt]
                    if color[nxt] == WHITE:
                        color[nxt] = GREY
                        path.append(nxt)
                        stack.append((nxt, iter(self._parents.get(nxt, ()))))
                        advanced = True
                        break
                if not advanced:
                    color[node] = BLACK
                    path.pop()
                    stack.pop()
        return None

    @property
    def nodes(self) -> tuple[str, ...]:
        return self._nodes

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(c, p) for c, ps in self._parents.items() for p in ps]

    def parents(self, entity: str) -> tuple[str, ...]:
        return self._parents.get(entity, ())

    def children(self, entity: str) -> tuple[str, ...]:
        return self._children.get(entity, ())

    def roots(self) -> tuple[str, ...]:
        return tuple(n for n in self._nodes if n not in self._parents)

    def siblings(self, entity: str) -> frozenset[str]:
        out: set[str] = set()
        for p in self.parents(entity):
            out.update(self.children(p))
        out.discard(entity)
        return frozenset(out) if out else _EMPTY

    def depths(self) -> dict[str, int]:
        """Shortest distance from any root, by BFS; roots at depth 0."""
        depth = {r: 0 for r in self.roots()}
        frontier = list(self.roots())
        while frontier:
            nxt: list[str] = []
            for node in frontier:
                for child in self.children(node):
                    if child not in depth:
                        depth[child] = depth[node] + 1
                        nxt.append(child)
            frontier = nxt
        return depth

    def collapse(self, levels: int) -> "Taxonomy":
        """Re-parent every entity deeper than `levels` to its ancestors at
        depth exactly `levels`; limits error propagation down long chains.
        No-op on taxonomies no deeper than `levels`."""
        if levels < 1:
            raise ValueError("levels must be >= 1")
        depth = self.depths()
        edges: list[tuple[str, str]] = []
        for child in self._nodes:
            if not self.parents(child):
                continue
            if depth[child] <= levels:
                for p in self.parents(child):
                    edges.append((child, p))
                continue
            for anc in sorted(self._ancestors_at_depth(child, levels, depth)):
                edges.append((child, anc))
        return Taxonomy(edges)

    def _ancestors_at_depth(self, entity: str, wanted: int, depth: Mapping[str, int]) -> set[str]:
        found: set[str] = set()
        seen: set[str] = set()
        frontier = [entity]
        while frontier:
            nxt: list[str] = []
            for node in frontier:
                for p in self.parents(node):
                    if p in seen:
                        continue
                    seen.add(p)
                    if depth[p] == wanted:
                        found.add(p)
                    elif depth[p] > wanted:
                        nxt.append(p)
            frontier = nxt
        return found


def _parse_tsv(path: str | Path, n_fields: int) -> list[tuple[str, ...]]:
    rows: list[tuple[str, ...]] = []
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = tuple(f.strip() for f in line.split("\t"))
            if len(fields) != n_fields or not all(fields):
                raise KBError(f"{path}:{lineno}: expected {n_fields} tab-separated fields")
            rows.append(fields)
    return rows


def load_background(
    taxonomy_path: str | Path,
    typemap_path: str | Path,
    schema_path: str | Path,
) -> tuple[Taxonomy, TypeMap, Schema]:
    taxonomy = Taxonomy(_parse_tsv(taxonomy_path, 2))
    typemap = TypeMap.from_items(_parse_tsv(typemap_path, 2))
    schema = Schema.from_items(_parse_tsv(schema_path, 3))
    return taxonomy, typemap, schema


@dataclass(frozen=True)
class Background:
    """Bundle of the three guidance inputs."""

    taxonomy: Taxonomy
    typemap: TypeMap
    schema: Schema

    @classmethod
    def load(cls, taxonomy_path: str | Path, typemap_path: str | Path, schema_path: str | Path) -> "Background":
        return cls(*load_background(taxonomy_path, typemap_path, schema_path))


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[Triple, ...]
    validation: tuple[Triple, ...]
    test: tuple[Triple, ...]
    seed: int
    labels: Mapping[Triple, QuantLabel] = field(repr=False, default_factory=dict)

    def subset_kb(self, which: str) -> KnowledgeBase:
        triples: Sequence[Triple] = getattr(self, which)
        return KnowledgeBase((t, self.labels[t]) for t in triples)


def split_kb(kb: KnowledgeBase, seed: int) -> DatasetSplit:
    """Deterministic 3/1/1 train/validation/test split.

    Shuffles the insertion-ordered triple list with a seeded RNG, then
    cuts 60/20/20 (train and validation rounded up).  Identical seeds
    give byte-identical splits.
    """
    n = len(kb)
    if n < 5:
        raise KBError(f"need at least 5 triples to split, got {n}")
    order = list(kb.triples)
    random.Random(seed).shuffle(order)
    n_train = -(-3 * n // 5)
    n_valid = -(-(n - n_train) // 2)
    return DatasetSplit(
        train=tuple(order[:n_train]),
        validation=tuple(order[n_train:n_train + n_valid]),
        test=tuple(order[n_train + n_valid:]),
        seed=seed,
        labels=dict(kb.triples),
    )
