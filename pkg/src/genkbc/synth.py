"""Synthetic worlds with known ground truth.

Every generator is deterministic given its seed and returns both the
observable knowledge base and the complete truth it was sampled from,
so tests and experiments can verify predictions exactly.  Class labels
follow set-membership semantics: a class holds a fact with ALL when
every member does, SOME when at least one does, NONE otherwise.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embed import EmbeddingModel, rank_candidates
from .kb import (
    Background,
    KnowledgeBase,
    QuantLabel,
    Schema,
    Taxonomy,
    Triple,
    TypeMap,
    save_kb,
)


@dataclass(frozen=True)
class BlockWorld:
    """Entity clusters and relations whose truth is block-structured:
    each relation is true exactly on one (source-cluster, target-cluster)
    block."""

    kb: KnowledgeBase
    background: Background
    truth: Mapping[Triple, QuantLabel]
    heldout_true: tuple[Triple, ...]
    heldout_false: tuple[Triple, ...]

    def is_true(self, triple: Triple) -> bool:
        return self.truth.get(triple, QuantLabel.NONE).is_positive()


def block_world(
    seed: int = 0,
    n_clusters: int = 4,
    cluster_size: int = 12,
    observed_fraction: float = 0.5,
    observed_false_ratio: float = 2.0,
) -> BlockWorld:
    """Plants one true block per relation.  With 4 clusters the blocks
    are within-0, within-1, 2-to-3 and 3-to-2; with 2 clusters the two
    within blocks.  A fraction of the trues plus `observed_false_ratio`
    times as many falses are observed; the remaining trues and an
    equal-size false sample are held out for ranking metrics.  Sparse
    blocks keep sampled corruptions from colliding with unseen trues."""
    if n_clusters == 2:
        pairs = [(0, 0), (1, 1)]
    elif n_clusters == 4:
        pairs = [(0, 0), (1, 1), (2, 3), (3, 2)]
    else:
        raise ValueError("n_clusters must be 2 or 4")
    rng = random.Random(seed)
    clusters = [
        [f"c{k}e{i:02d}" for i in range(cluster_size)] for k in range(n_clusters)
    ]
    entities = [e for cl in clusters for e in cl]
    cluster_of = {e: k for k, cl in enumerate(clusters) for e in cl}
    relations = [f"rel-{ci}-{cj}" for ci, cj in pairs]

    truth: dict[Triple, QuantLabel] = {}
    for (ci, cj), rel in zip(pairs, relations):
        for s in entities:
            for t in entities:
                if s == t:
                    continue
                hit = cluster_of[s] == ci and cluster_of[t] == cj
                truth[Triple(s, rel, t)] = (
                    QuantLabel.ALL if hit else QuantLabel.NONE
                )

    trues = sorted(t for t, lab in truth.items() if lab.is_positive())
    falses = sorted(t for t, lab in truth.items() if not lab.is_positive())
    rng.shuffle(trues)
    rng.shuffle(falses)
    n_obs_true = int(len(trues) * observed_fraction)
    n_heldout_true = len(trues) - n_obs_true
    n_obs_false = min(
        len(falses) - n_heldout_true, int(n_obs_true * observed_false_ratio)
    )
    observed = [(t, QuantLabel.ALL) for t in trues[:n_obs_true]]
    observed += [(t, QuantLabel.NONE) for t in falses[:n_obs_false]]
    rng.shuffle(observed)

    typemap = TypeMap.from_items(
        [(e, f"cluster-{cluster_of[e]}") for e in entities]
    )
    schema = Schema.from_items(
        [
            (rel, f"cluster-{ci}", f"cluster-{cj}")
            for (ci, cj), rel in zip(pairs, relations)
        ]
    )
    background = Background(Taxonomy([]), typemap, schema)
    return BlockWorld(
        kb=KnowledgeBase(observed),
        background=background,
        truth=truth,
        heldout_true=tuple(trues[n_obs_true:]),
        heldout_false=tuple(falses[n_obs_false : n_obs_false + n_heldout_true]),
    )


@dataclass(frozen=True)
class World:
    """A taxonomy of classes with a complete class-level truth table."""

    kb: KnowledgeBase
    background: Background
    truth: Mapping[Triple, QuantLabel]
    classes: tuple[str, ...]
    targets: tuple[str, ...]
    relations: tuple[str, ...]

    def truth_label(self, triple: Triple) -> QuantLabel:
        return self.truth.get(triple, QuantLabel.NONE)

    def is_true(self, triple: Triple) -> bool:
        return self.truth_label(triple).is_positive()


def _class_label(patterns: Sequence[QuantLabel]) -> QuantLabel:
    """Label of a union class from its parts' labels."""
    if patterns and all(p is QuantLabel.ALL for p in patterns):
        return QuantLabel.ALL
    if any(p.is_positive() for p in patterns):
        return QuantLabel.SOME
    return QuantLabel.NONE


def membership_world(
    seed: int = 0,
    n_parents: int = 3,
    children_per_parent: int = 3,
    members_per_child: int = 0,
    n_targets: int = 8,
    n_relations: int = 3,
    p_all: float = 0.3,
    p_some: float = 0.15,
    family_all_prob: float = 0.25,
    family_coherence: float = 0.0,
    observe_positive: float = 0.8,
    observe_none: float = 0.1,
    include_root: bool = True,
    n_junk: int = 0,
) -> World:
    """Samples per-(child, relation, target) patterns, derives parent and
    root labels by union semantics, and observes a labeled subset.

    With members_per_child > 0 the pattern is materialized over explicit
    individuals (ALL = every member, SOME = strict nonempty subset) and
    individual-level facts enter the taxonomy and truth table too.
    `family_all_prob` makes a whole sibling family uniformly ALL, which
    gives parents recoverable universal facts.  `family_coherence` makes
    each child follow a per-family pattern with that probability, giving
    the truth tensor low-rank block structure without forcing
    universals.  `n_junk` adds entities of an unrelated type with their
    own relation, invisible to the main schema.
    """
    rng = random.Random(seed)
    parents = [f"p{i}" for i in range(n_parents)]
    children: dict[str, list[str]] = {
        p: [f"{p}c{j}" for j in range(children_per_parent)] for p in parents
    }
    targets = [f"t{i:02d}" for i in range(n_targets)]
    relations = [f"r{i}" for i in range(n_relations)]

    edges: list[tuple[str, str]] = []
    for p in parents:
        for c in children[p]:
            edges.append((c, p))
    if include_root:
        for p in parents:
            edges.append((p, "root"))
    members: dict[str, list[str]] = {}
    if members_per_child > 0:
        if members_per_child < 2:
            raise ValueError("members_per_child must be 0 or >= 2")
        for p in parents:
            for c in children[p]:
                members[c] = [f"{c}m{j}" for j in range(members_per_child)]
                for m in members[c]:
                    edges.append((m, c))
    taxonomy = Taxonomy(edges)

    def roll_label() -> QuantLabel:
        roll = rng.random()
        if roll < p_all:
            return QuantLabel.ALL
        if roll < p_all + p_some:
            return QuantLabel.SOME
        return QuantLabel.NONE

    truth: dict[Triple, QuantLabel] = {}
    child_pattern: dict[tuple[str, str, str], QuantLabel] = {}
    for rel in relations:
        for tgt in targets:
            for p in parents:
                family_all = rng.random() < family_all_prob
                # the coherence draw happens only when enabled so the
                # default path consumes the same rng stream as before
                family_label = roll_label() if family_coherence > 0 else None
                for c in children[p]:
                    if family_all:
                        pat = QuantLabel.ALL
                    elif (
                        family_label is not None
                        and rng.random() < family_coherence
                    ):
                        pat = family_label
                    else:
                        pat = roll_label()
                    child_pattern[(c, rel, tgt)] = pat

    for rel in relations:
        for tgt in targets:
            for p in parents:
                kid_labels = []
                for c in children[p]:
                    pat = child_pattern[(c, rel, tgt)]
                    if members.get(c):
                        ms = members[c]
                        if pat is QuantLabel.ALL:
                            holding = list(ms)
                        elif pat is QuantLabel.SOME:
                            n_hold = rng.randrange(1, len(ms))
                            holding = rng.sample(ms, n_hold)
                        else:
                            holding = []
                        holding_set = set(holding)
                        for m in ms:
                            truth[Triple(m, rel, tgt)] = (
                                QuantLabel.ALL
                                if m in holding_set
                                else QuantLabel.NONE
                            )
                    truth[Triple(c, rel, tgt)] = pat
                    kid_labels.append(pat)
                truth[Triple(p, rel, tgt)] = _class_label(kid_labels)
            if include_root:
                truth[Triple("root", rel, tgt)] = _class_label(
                    [truth[Triple(p, rel, tgt)] for p in parents]
                )

    observed: list[tuple[Triple, QuantLabel]] = []
    for triple, lab in sorted(truth.items()):
        roll = rng.random()
        if lab.is_positive():
            if roll < observe_positive:
                observed.append((triple, lab))
        elif roll < observe_none:
            observed.append((triple, QuantLabel.NONE))
    rng.shuffle(observed)

    type_items: list[tuple[str, str]] = []
    all_classes = list(parents)
    if include_root:
        all_classes.append("root")
    for p in parents:
        all_classes.extend(children[p])
    for c, ms in members.items():
        all_classes.extend(ms)
    for cls in all_classes:
        type_items.append((cls, "kind"))
    for t in targets:
        type_items.append((t, "thing"))
    schema_items = [(rel, "kind", "thing") for rel in relations]

    if n_junk > 0:
        junk = [f"junk{i:02d}" for i in range(n_junk)]
        for j in junk:
            type_items.append((j, "junk"))
        schema_items.append(("junk-rel", "junk", "junk"))
        pairs = [(a, b) for a in junk for b in junk if a != b]
        for a, b in rng.sample(pairs, min(len(pairs), 2 * n_junk)):
            observed.append((Triple(a, "junk-rel", b), QuantLabel.ALL))

    background = Background(
        taxonomy, TypeMap.from_items(type_items), Schema.from_items(schema_items)
    )
    return World(
        kb=KnowledgeBase(observed),
        background=background,
        truth=truth,
        classes=tuple(all_classes),
        targets=tuple(targets),
        relations=tuple(relations),
    )


@dataclass(frozen=True)
class HeldoutWorld:
    """A membership world with one child's positive facts withheld."""

    world: World
    kb: KnowledgeBase
    held_child: str
    heldout: tuple[Triple, ...]
    candidate_pool: tuple[Triple, ...]


def heldout_child_world(
    seed: int = 0,
    n_anchors: int = 1,
    **world_kwargs,
) -> HeldoutWorld:
    """Withholds every positive fact of one child except `n_anchors`
    (so the child stays in the vocabulary), and builds the candidate
    pool of that child's unknown source-side triples."""
    world = membership_world(seed=seed, **world_kwargs)
    rng = random.Random(seed + 104729)
    children = sorted(
        c for c in world.classes if world.background.taxonomy.parents(c)
        and world.background.taxonomy.children(c) == ()
        and not c.startswith("root")
    )
    kb = world.kb
    held = None
    for child in rng.sample(children, len(children)):
        positives = sorted(
            t for t in kb if t.source == child and kb.label(t).is_positive()
        )
        if len(positives) > n_anchors + 2:
            held = child
            break
    if held is None:
        raise ValueError("no child with enough observed positives; reseed")
    positives = sorted(
        t for t in kb if t.source == held and kb.label(t).is_positive()
    )
    anchors = set(positives[:n_anchors])
    withheld = [t for t in positives if t not in anchors]
    remaining = [(t, lab) for t, lab in kb.triples.items() if t not in set(withheld)]
    reduced = KnowledgeBase(remaining)
    pool = []
    for rel in world.relations:
        for tgt in world.targets:
            cand = Triple(held, rel, tgt)
            if cand not in reduced:
                pool.append(cand)
    return HeldoutWorld(
        world=world,
        kb=reduced,
        held_child=held,
        heldout=tuple(withheld),
        candidate_pool=tuple(sorted(pool)),
    )


@dataclass(frozen=True)
class ActiveWorld:
    """A membership world plus a brand-new child entity with its own
    truth table, correlated with its siblings."""

    world: World
    new_entity: str
    truth: Mapping[Triple, QuantLabel]

    @property
    def kb(self) -> KnowledgeBase:
        return self.world.kb

    @property
    def background(self) -> Background:
        return self.world.background

    def truth_label(self, triple: Triple) -> QuantLabel:
        if triple in self.truth:
            return self.truth[triple]
        return self.world.truth_label(triple)

    def is_true(self, triple: Triple) -> bool:
        return self.truth_label(triple).is_positive()


def active_world(
    seed: int = 0,
    agreement: float = 0.85,
    new_entity: str = "newcomer",
    **world_kwargs,
) -> ActiveWorld:
    """Adds `new_entity` as an extra child of the first parent.  With
    probability `agreement` its pattern per (relation, target) follows
    the sibling majority, otherwise a coin flip.  The entity has no KB
    facts; its truth table drives synthetic annotators."""
    world_kwargs.setdefault("n_junk", 8)
    base = membership_world(seed=seed, **world_kwargs)
    rng = random.Random(seed + 7919)
    taxonomy = base.background.taxonomy
    parent = sorted(p for p in taxonomy.nodes if taxonomy.children(p)
                    and taxonomy.parents(p))[0]
    siblings = [
        c for c in taxonomy.children(parent) if not taxonomy.children(c)
    ]
    edges = list(taxonomy.edges)
    edges.append((new_entity, parent))
    new_taxonomy = Taxonomy(edges)
    type_items = []
    for e in base.background.typemap.entities:
        for tp in sorted(base.background.typemap.types(e)):
            type_items.append((e, tp))
    type_items.append((new_entity, "kind"))
    background = Background(
        new_taxonomy,
        TypeMap.from_items(type_items),
        base.background.schema,
    )
    truth: dict[Triple, QuantLabel] = {}
    for rel in base.relations:
        for tgt in base.targets:
            sib_labels = [base.truth_label(Triple(s, rel, tgt)) for s in siblings]
            pos = [l for l in sib_labels if l.is_positive()]
            majority_true = len(pos) * 2 >= len(sib_labels)
            if rng.random() < agreement:
                is_true = majority_true
            else:
                is_true = rng.random() < 0.5
            if is_true:
                label = QuantLabel.ALL
                if pos and rng.random() < sum(
                    1 for l in pos if l is QuantLabel.SOME
                ) / len(pos):
                    label = QuantLabel.SOME
                truth[Triple(new_entity, rel, tgt)] = label
            else:
                truth[Triple(new_entity, rel, tgt)] = QuantLabel.NONE
    world = World(
        kb=base.kb,
        background=background,
        truth=base.truth,
        classes=base.classes + (new_entity,),
        targets=base.targets,
        relations=base.relations,
    )
    return ActiveWorld(world=world, new_entity=new_entity, truth=truth)


def mean_rank(
    model: EmbeddingModel,
    positives: Sequence[Triple],
    pool: Sequence[Triple],
) -> float:
    """Mean 1-based rank of the positives inside the scored pool."""
    ranked = rank_candidates(model, pool)
    position = {st.triple: i + 1 for i, st in enumerate(ranked)}
    ranks = [position[t] for t in positives]
    if not ranks:
        raise ValueError("no positives to rank")
    return sum(ranks) / len(ranks)


def auc(
    model: EmbeddingModel,
    positives: Sequence[Triple],
    negatives: Sequence[Triple],
) -> float:
    """Exact pairwise ranking AUC (ties count half)."""
    if not positives or not negatives:
        raise ValueError("need at least one positive and one negative")
    pos = [rank_candidates(model, [t])[0].score for t in positives]
    neg = [rank_candidates(model, [t])[0].score for t in negatives]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def bernoulli_stream(
    seed: int, length: int = 65536, c: float = 4096.0
) -> np.ndarray:
    """v_i ~ Bernoulli(min(1, c / (i + c))), i starting at 1."""
    rng = np.random.default_rng(seed)
    i = np.arange(1, length + 1, dtype=np.float64)
    p = np.minimum(1.0, c / (i + c))
    return (rng.random(length) < p).astype(np.int8)


def low_discrepancy_stream(
    seed: int, length: int = 65536, c: float = 4096.0
) -> np.ndarray:
    """Same decaying density, but emitted by rounding the running mass:
    v_i = floor(u + S_i) - floor(u + S_{i-1}) with S_i the prefix sum of
    the densities and u a seeded offset.  Every window's count is then
    within 1 of its expected mass, so density estimates at any stride
    deviate by at most 1/stride."""
    rng = np.random.default_rng(seed)
    u = rng.random()
    i = np.arange(1, length + 1, dtype=np.float64)
    p = np.minimum(1.0, c / (i + c))
    running = np.floor(u + np.cumsum(p))
    prev = np.concatenate(([0.0], running[:-1]))
    out = (running - prev).astype(np.int8)
    return out


def write_fixture(out_dir: str | Path, seed: int = 0) -> dict[str, Path]:
    """Writes the bundled synthetic fixture: KB, background, the new
    entity, and its ground-truth labels (for synthetic annotation)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    aw = active_world(
        seed=seed,
        n_parents=3,
        children_per_parent=4,
        n_targets=8,
        n_relations=3,
        n_junk=6,
    )
    paths = {
        "kb": out / "kb.tsv",
        "taxonomy": out / "taxonomy.tsv",
        "typemap": out / "typemap.tsv",
        "schema": out / "schema.tsv",
        "truth": out / "truth.tsv",
        "entity": out / "entity.txt",
    }
    save_kb(aw.kb, paths["kb"])
    with open(paths["taxonomy"], "w", encoding="utf-8") as fh:
        for child, parent in sorted(aw.background.taxonomy.edges):
            fh.write(f"{child}\t{parent}\n")
    with open(paths["typemap"], "w", encoding="utf-8") as fh:
        for e in sorted(aw.background.typemap.entities):
            for tp in sorted(aw.background.typemap.types(e)):
                fh.write(f"{e}\t{tp}\n")
    with open(paths["schema"], "w", encoding="utf-8") as fh:
        for rel in sorted(aw.background.schema.relations):
            for dom, rng_t in aw.background.schema.for_relation(rel):
                fh.write(f"{rel}\t{dom}\t{rng_t}\n")
    truth_rows = dict(aw.world.truth)
    truth_rows.update(aw.truth)
    with open(paths["truth"], "w", encoding="utf-8") as fh:
        for triple, lab in sorted(truth_rows.items()):
            fh.write(
                f"{triple.source}\t{triple.relation}\t{triple.target}\t{lab.value}\n"
            )
    paths["entity"].write_text(aw.new_entity + "\n", encoding="utf-8")
    return paths
