"""Active learning for a new or rare entity.

Sibling-guided estimation scores each candidate fact by the fraction of
the entity's taxonomy siblings possessing it; thresholds route
candidates into a query list L and an auto-accept list M; a submodular
coverage/diversity/redundancy objective picks the subset to annotate;
an episode feeds the answers back through expansion and retraining.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .embed import (
    EmbeddingModel,
    ScoredTriple,
    TrainConfig,
    rank_candidates,
    train,
)
from .guidance import entity_candidates, expand_then_train, schema_consistent
from .kb import Background, KBError, KnowledgeBase, QuantLabel, Triple


class ActiveError(KBError):
    pass


class ColdEntityError(ActiveError):
    """The entity has no siblings with KB facts; sibling-guided
    proposal cannot run and the caller should fall back to
    schema-consistent mode."""


class Orientation(enum.Enum):
    """Which slot the new entity occupies in the candidate triple."""

    SOURCE = "source"
    TARGET = "target"


class ProposalMode(enum.Enum):
    RANDOM = "random"
    SCHEMA_CONSISTENT = "schema"
    SIBLING_GUIDED = "sibling"


@dataclass(frozen=True)
class CandidateFact:
    """A potential fact about the session entity, with its estimate p."""

    relation: str
    other: str
    orientation: Orientation
    p: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")

    def key(self) -> tuple[str, str, str]:
        return (self.relation, self.other, self.orientation.value)

    @property
    def fact_id(self) -> str:
        return "\t".join((self.orientation.value, self.relation, self.other))

    def to_triple(self, entity: str) -> Triple:
        if self.orientation is Orientation.SOURCE:
            return Triple(entity, self.relation, self.other)
        return Triple(self.other, self.relation, entity)


@dataclass(frozen=True)
class SessionThresholds:
    """kappa_m auto-accepts, [tau_low, tau_high] keeps for annotation."""

    kappa_m: float = 0.9
    tau_low: float = 0.2
    tau_high: float = 0.8

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau_low < self.tau_high < self.kappa_m <= 1.0:
            raise ValueError(
                "thresholds must satisfy 0 <= tau_low < tau_high < kappa_m <= 1, "
                f"got tau_low={self.tau_low}, tau_high={self.tau_high}, "
                f"kappa_m={self.kappa_m}"
            )


@dataclass(frozen=True)
class SelectionWeights:
    w_coverage: float = 1.0
    w_diversity: float = 1.0
    w_redundancy: float = 0.1

    def __post_init__(self) -> None:
        for name in ("w_coverage", "w_diversity", "w_redundancy"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def _active_siblings(
    entity: str, kb: KnowledgeBase, taxonomy
) -> list[str]:
    siblings = taxonomy.siblings(entity)
    if not siblings:
        raise ColdEntityError(
            f"{entity!r} has no taxonomy siblings; "
            "fall back to schema-consistent proposal"
        )
    active = [s for s in sorted(siblings) if kb.has_entity(s)]
    if not active:
        raise ColdEntityError(
            f"no sibling of {entity!r} has any fact in the KB; "
            "fall back to schema-consistent proposal"
        )
    return active


def estimate_conditional(
    entity: str,
    relation: str,
    other: str,
    orientation: Orientation,
    kb: KnowledgeBase,
    taxonomy,
) -> float:
    """Fraction of active siblings possessing the oriented fact.

    A sibling is active when it occurs in any KB triple; it possesses
    the fact when the triple with the sibling in the entity's slot is
    present with label All or Some."""
    active = _active_siblings(entity, kb, taxonomy)
    count = 0
    for s in active:
        if orientation is Orientation.SOURCE:
            probe = Triple(s, relation, other)
        else:
            probe = Triple(other, relation, s)
        label = kb.label(probe)
        if label is not None and label.is_positive():
            count += 1
    return count / len(active)


def propose_queries(
    entity: str,
    kb: KnowledgeBase,
    background: Background,
    thresholds: SessionThresholds = SessionThresholds(),
    mode: ProposalMode = ProposalMode.SIBLING_GUIDED,
    seed: int = 0,
    random_pool: int = 60,
) -> tuple[list[CandidateFact], list[CandidateFact]]:
    """Builds the annotation queue L and the auto-accept list M.

    Sibling-guided: candidates are the union of the active siblings'
    positive facts projected onto the entity, schema-checked, routed by
    p (>= kappa_m to M, within [tau_low, tau_high] to L, else dropped);
    L is ordered most-uncertain first (|p - 0.5|, ties lexicographic).
    Schema-consistent: every schema-consistent pair at p = 0.5 in
    seeded-random order, M empty.  Random: seeded uniform draws over
    all (relation, other, orientation) combinations with no schema
    filter, M empty.
    """
    rng = random.Random(seed)
    if mode is ProposalMode.SIBLING_GUIDED:
        if entity not in background.taxonomy.nodes:
            raise ColdEntityError(
                f"{entity!r} is not in the taxonomy; "
                "fall back to schema-consistent proposal"
            )
        active = _active_siblings(entity, kb, background.taxonomy)
        keys: dict[tuple[str, str, Orientation], None] = {}
        for s in active:
            for t in kb:
                if not kb.label(t).is_positive():
                    continue
                if t.source == s and t.target != entity:
                    keys.setdefault((t.relation, t.target, Orientation.SOURCE))
                if t.target == s and t.source != entity:
                    keys.setdefault((t.relation, t.source, Orientation.TARGET))
        low, high = [], []
        for relation, other, orientation in keys:
            cand_triple = (
                Triple(entity, relation, other)
                if orientation is Orientation.SOURCE
                else Triple(other, relation, entity)
            )
            if cand_triple in kb:
                continue
            if not schema_consistent(
                cand_triple, background.schema, background.typemap
            ):
                continue
            p = estimate_conditional(
                entity, relation, other, orientation, kb, background.taxonomy
            )
            cand = CandidateFact(relation, other, orientation, p)
            if p >= thresholds.kappa_m:
                high.append(cand)
            elif thresholds.tau_low <= p <= thresholds.tau_high:
                low.append(cand)
        low.sort(key=lambda c: (abs(c.p - 0.5), c.key()))
        high.sort(key=lambda c: c.key())
        return low, high

    if mode is ProposalMode.SCHEMA_CONSISTENT:
        if not background.typemap.types(entity):
            raise ActiveError(
                f"{entity!r} has no types; schema-consistent proposal impossible"
            )
        out = []
        for relation in kb.relations:
            for other in kb.entities:
                if other == entity:
                    continue
                for orientation in (Orientation.SOURCE, Orientation.TARGET):
                    cand_triple = (
                        Triple(entity, relation, other)
                        if orientation is Orientation.SOURCE
                        else Triple(other, relation, entity)
                    )
                    if cand_triple in kb:
                        continue
                    if schema_consistent(
                        cand_triple, background.schema, background.typemap
                    ):
                        out.append(CandidateFact(relation, other, orientation, 0.5))
        rng.shuffle(out)
        return out, []

    if mode is ProposalMode.RANDOM:
        space = [
            (relation, other, orientation)
            for relation in kb.relations
            for other in kb.entities
            if other != entity
            for orientation in (Orientation.SOURCE, Orientation.TARGET)
        ]
        picked = rng.sample(space, min(random_pool, len(space)))
        out = []
        for relation, other, orientation in picked:
            cand_triple = (
                Triple(entity, relation, other)
                if orientation is Orientation.SOURCE
                else Triple(other, relation, entity)
            )
            if cand_triple in kb:
                continue
            out.append(CandidateFact(relation, other, orientation, 0.5))
        return out, []

    raise ValueError(f"unknown proposal mode: {mode!r}")


@dataclass(frozen=True)
class DiversityIndex:
    """Per-relation and per-entity diversity, fixed once per KB.

    V_r = (#distinct sources of r + #distinct targets of r) / |E|;
    V_e = (#relations with e as target + #sources co-occurring with e
    as target) / (|R| + |E|).  Independent of any candidate subset.
    """

    v_rel: Mapping[str, float]
    v_ent: Mapping[str, float]

    @classmethod
    def from_kb(cls, kb: KnowledgeBase) -> "DiversityIndex":
        n_e = len(kb.entities)
        n_r = len(kb.relations)
        src_of_rel: dict[str, set[str]] = {r: set() for r in kb.relations}
        tgt_of_rel: dict[str, set[str]] = {r: set() for r in kb.relations}
        rel_of_tgt: dict[str, set[str]] = {e: set() for e in kb.entities}
        src_of_tgt: dict[str, set[str]] = {e: set() for e in kb.entities}
        for t in kb:
            src_of_rel[t.relation].add(t.source)
            tgt_of_rel[t.relation].add(t.target)
            rel_of_tgt[t.target].add(t.relation)
            src_of_tgt[t.target].add(t.source)
        v_rel = {
            r: (len(src_of_rel[r]) + len(tgt_of_rel[r])) / n_e
            for r in kb.relations
        }
        v_ent = {
            e: (len(rel_of_tgt[e]) + len(src_of_tgt[e])) / (n_r + n_e)
            for e in kb.entities
        }
        return cls(v_rel, v_ent)


def _candidate_vectors(
    candidates: Sequence[CandidateFact], model: EmbeddingModel
) -> tuple[dict[tuple, np.ndarray], dict[tuple, np.ndarray]]:
    rel_vecs: dict[tuple, np.ndarray] = {}
    ent_vecs: dict[tuple, np.ndarray] = {}
    for c in candidates:
        rel_vecs[c.key()] = model.relation_vector(c.relation)
        ent_vecs[c.key()] = model.entity_vector(c.other)
    return rel_vecs, ent_vecs


def objective_F(
    subset: Sequence[CandidateFact],
    kb: KnowledgeBase,
    diversity: DiversityIndex,
    model: EmbeddingModel,
    weights: SelectionWeights = SelectionWeights(),
) -> float:
    """Coverage + diversity - redundancy of a candidate subset.

    Coverage counts distinct relations/entities touched, normalized by
    the vocabulary; diversity sums the index values; redundancy sums
    Euclidean embedding distances over unordered candidate pairs.
    """
    if not subset:
        return 0.0
    rel_vecs, ent_vecs = _candidate_vectors(subset, model)
    coverage = weights.w_coverage * (
        len({c.relation for c in subset}) / len(kb.relations)
        + len({c.other for c in subset}) / len(kb.entities)
    )
    div = weights.w_diversity * sum(
        diversity.v_rel.get(c.relation, 0.0) + diversity.v_ent.get(c.other, 0.0)
        for c in subset
    )
    red = 0.0
    for i in range(len(subset)):
        for j in range(i + 1, len(subset)):
            a, b = subset[i], subset[j]
            red += float(np.linalg.norm(rel_vecs[a.key()] - rel_vecs[b.key()]))
            red += float(np.linalg.norm(ent_vecs[a.key()] - ent_vecs[b.key()]))
    return coverage + div - weights.w_redundancy * red


def greedy_select(
    candidates: Sequence[CandidateFact],
    budget: int,
    kb: KnowledgeBase,
    diversity: DiversityIndex,
    model: EmbeddingModel,
    weights: SelectionWeights = SelectionWeights(),
    early_stop: bool = False,
) -> list[CandidateFact]:
    """Greedy argmax of marginal gain, `budget` rounds.

    Gains are maintained incrementally: the redundancy paid by a
    candidate is accumulated as selections are committed, so each round
    costs O(|remaining|).  Ties break lexicographically.  With
    `early_stop` the loop ends once every remaining gain is <= 0
    (off by default: the reference procedure always takes B items).
    """
    if not candidates:
        raise ValueError("cannot select from an empty candidate list")
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    rel_vecs, ent_vecs = _candidate_vectors(candidates, model)
    n_rel = len(kb.relations)
    n_ent = len(kb.entities)
    remaining = list(candidates)
    selected: list[CandidateFact] = []
    covered_rels: set[str] = set()
    covered_ents: set[str] = set()
    penalty: dict[tuple, float] = {c.key(): 0.0 for c in candidates}

    for _ in range(min(budget, len(candidates))):
        best: CandidateFact | None = None
        best_gain = -math.inf
        for c in remaining:
            gain = (
                weights.w_coverage
                * (
                    (c.relation not in covered_rels) / n_rel
                    + (c.other not in covered_ents) / n_ent
                )
                + weights.w_diversity
                * (
                    diversity.v_rel.get(c.relation, 0.0)
                    + diversity.v_ent.get(c.other, 0.0)
                )
                - weights.w_redundancy * penalty[c.key()]
            )
            if gain > best_gain or (
                gain == best_gain and best is not None and c.key() < best.key()
            ):
                best = c
                best_gain = gain
        assert best is not None
        if early_stop and best_gain <= 0:
            break
        selected.append(best)
        remaining.remove(best)
        covered_rels.add(best.relation)
        covered_ents.add(best.other)
        for c in remaining:
            penalty[c.key()] += float(
                np.linalg.norm(rel_vecs[c.key()] - rel_vecs[best.key()])
            ) + float(np.linalg.norm(ent_vecs[c.key()] - ent_vecs[best.key()]))
    return selected


def top_k_select(
    candidates: Sequence[CandidateFact], budget: int
) -> list[CandidateFact]:
    """The baseline: first `budget` entries of the proposal order."""
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    return list(candidates[:budget])


class Annotator(Protocol):
    def label(self, triple: Triple) -> QuantLabel: ...


class SyntheticAnnotator:
    """Answers from a ground-truth table; counts labeling queries.

    `verify` consults the truth without charging, for report
    verification only.
    """

    def __init__(
        self, truth: Mapping[Triple, QuantLabel] | Callable[[Triple], QuantLabel]
    ):
        if callable(truth):
            self._lookup = truth
        else:
            table = dict(truth)
            self._lookup = lambda t: table.get(t, QuantLabel.NONE)
        self.queries = 0

    def label(self, triple: Triple) -> QuantLabel:
        self.queries += 1
        return self._lookup(triple)

    def verify(self, triple: Triple) -> bool:
        return self._lookup(triple).is_positive()


class SelectionMode(enum.Enum):
    SUBMODULAR = "sm"
    TOP_K = "tk"


@dataclass(frozen=True)
class EpisodeConfig:
    proposal_mode: ProposalMode = ProposalMode.SIBLING_GUIDED
    selection_mode: SelectionMode = SelectionMode.SUBMODULAR
    budget: int = 6
    thresholds: SessionThresholds = SessionThresholds()
    weights: SelectionWeights = SelectionWeights()
    seed: int = 0
    report_threshold: float = 0.5
    derived_weight: float = 0.5
    keep_threshold: float = 0.5
    random_pool: int = 60

    def __post_init__(self) -> None:
        if self.budget < 0:
            raise ValueError(f"budget must be >= 0, got {self.budget}")


@dataclass
class EpisodeReport:
    """Yield counts of one annotation episode, by provenance."""

    entity: str
    proposal_mode: str
    selection_mode: str
    budget: int
    annotation_yield: int
    sibling_yield: int
    factorization_yield: int
    total_yield: int
    n_candidates: int
    n_auto_accepted: int
    selected: list[CandidateFact]
    annotations: dict[str, str]
    predictions: list[ScoredTriple]

    def to_json_dict(self) -> dict:
        return {
            "entity": self.entity,
            "proposal_mode": self.proposal_mode,
            "selection_mode": self.selection_mode,
            "budget": self.budget,
            "yields": {
                "annotation": self.annotation_yield,
                "sibling_agreement": self.sibling_yield,
                "factorization": self.factorization_yield,
                "total": self.total_yield,
            },
            "n_candidates": self.n_candidates,
            "n_auto_accepted": self.n_auto_accepted,
            "selected": [
                {
                    "relation": c.relation,
                    "other": c.other,
                    "orientation": c.orientation.value,
                    "p": c.p,
                }
                for c in self.selected
            ],
            "annotations": dict(self.annotations),
            "predictions": [
                {
                    "source": st.triple.source,
                    "relation": st.triple.relation,
                    "target": st.triple.target,
                    "probability": st.probability,
                }
                for st in self.predictions
            ],
        }


def run_episode(
    entity: str,
    kb: KnowledgeBase,
    background: Background,
    train_config: TrainConfig,
    episode: EpisodeConfig,
    annotator,
) -> EpisodeReport:
    """One full annotation episode against an oracle-backed annotator.

    Proposes candidates, selects within budget, annotates, merges the
    annotated-true facts plus the auto-accepted list into the KB,
    retrains through taxonomy expansion, and counts verified-true new
    facts by provenance (annotation / sibling agreement /
    factorization).  The annotator must expose `label` and, for the
    verification counts, `verify`.
    """
    low, high = propose_queries(
        entity,
        kb,
        background,
        thresholds=episode.thresholds,
        mode=episode.proposal_mode,
        seed=episode.seed,
        random_pool=episode.random_pool,
    )
    if not low or episode.budget == 0:
        selected: list[CandidateFact] = []
    elif episode.selection_mode is SelectionMode.SUBMODULAR:
        base_model = train(kb, background, train_config)
        diversity = DiversityIndex.from_kb(kb)
        selected = greedy_select(
            low, episode.budget, kb, diversity, base_model, episode.weights
        )
    else:
        selected = top_k_select(low, episode.budget)

    annotations: dict[str, str] = {}
    additions: list[tuple[Triple, QuantLabel]] = []
    annotation_yield = 0
    for cand in selected:
        triple = cand.to_triple(entity)
        label = annotator.label(triple)
        annotations[cand.fact_id] = label.value
        if label.is_positive():
            annotation_yield += 1
            additions.append((triple, label))
    sibling_yield = 0
    for cand in high:
        triple = cand.to_triple(entity)
        if triple not in kb:
            additions.append((triple, QuantLabel.SOME))
        if annotator.verify(triple):
            sibling_yield += 1

    # canonical order so the retrain depends on the annotation set,
    # not on which strategy happened to select first
    additions.sort(key=lambda pair: pair[0])
    augmented = kb.merge(additions)
    result = expand_then_train(
        augmented,
        background,
        train_config,
        derived_weight=episode.derived_weight,
        keep_threshold=episode.keep_threshold,
    )
    predictions: list[ScoredTriple] = []
    factorization_yield = 0
    if result.model.has_entity(entity):
        pool = entity_candidates(entity, augmented, background)
        for st in rank_candidates(result.model, pool):
            if st.probability < episode.report_threshold:
                break
            predictions.append(st)
            if annotator.verify(st.triple):
                factorization_yield += 1

    return EpisodeReport(
        entity=entity,
        proposal_mode=episode.proposal_mode.value,
        selection_mode=episode.selection_mode.value,
        budget=episode.budget,
        annotation_yield=annotation_yield,
        sibling_yield=sibling_yield,
        factorization_yield=factorization_yield,
        total_yield=annotation_yield + sibling_yield + factorization_yield,
        n_candidates=len(low),
        n_auto_accepted=len(high),
        selected=selected,
        annotations=annotations,
        predictions=predictions,
    )


@dataclass
class QuerySession:
    """Serializable snapshot of one annotation session."""

    entity: str
    mode: str
    selection: str
    thresholds: SessionThresholds
    budget: int
    candidates: list[CandidateFact]
    auto_accepted: list[CandidateFact]
    selected: list[str]
    annotations: dict[str, str] = field(default_factory=dict)
    model_ref: str | None = None

    def __post_init__(self) -> None:
        ids = {c.fact_id for c in self.candidates}
        auto_ids = {c.fact_id for c in self.auto_accepted}
        if ids & auto_ids:
            raise ValueError("candidate and auto-accept lists overlap")
        if not set(self.selected) <= ids:
            raise ValueError("selected ids must come from the candidate list")
        if len(self.selected) > self.budget:
            raise ValueError("selected exceeds budget")
        for fid in self.annotations:
            if fid not in ids:
                raise ValueError(f"annotation for unknown fact id {fid!r}")

    @staticmethod
    def _cand_to_dict(c: CandidateFact) -> dict:
        return {
            "relation": c.relation,
            "other": c.other,
            "orientation": c.orientation.value,
            "p": c.p,
        }

    @staticmethod
    def _cand_from_dict(d: Mapping) -> CandidateFact:
        return CandidateFact(
            relation=d["relation"],
            other=d["other"],
            orientation=Orientation(d["orientation"]),
            p=float(d["p"]),
        )

    def to_json_dict(self) -> dict:
        return {
            "entity": self.entity,
            "mode": self.mode,
            "selection": self.selection,
            "thresholds": {
                "kappa_m": self.thresholds.kappa_m,
                "tau_low": self.thresholds.tau_low,
                "tau_high": self.thresholds.tau_high,
            },
            "budget": self.budget,
            "candidates": [self._cand_to_dict(c) for c in self.candidates],
            "auto_accepted": [self._cand_to_dict(c) for c in self.auto_accepted],
            "selected": list(self.selected),
            "annotations": dict(self.annotations),
            "model_ref": self.model_ref,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "QuerySession":
        th = d["thresholds"]
        return cls(
            entity=d["entity"],
            mode=d["mode"],
            selection=d["selection"],
            thresholds=SessionThresholds(
                kappa_m=float(th["kappa_m"]),
                tau_low=float(th["tau_low"]),
                tau_high=float(th["tau_high"]),
            ),
            budget=int(d["budget"]),
            candidates=[cls._cand_from_dict(c) for c in d["candidates"]],
            auto_accepted=[cls._cand_from_dict(c) for c in d["auto_accepted"]],
            selected=list(d["selected"]),
            annotations=dict(d["annotations"]),
            model_ref=d.get("model_ref"),
        )
