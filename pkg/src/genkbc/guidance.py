"""Schema and taxonomy guidance around the factorization.

Schema consistency gates which triples are even considered; taxonomy
expansion propagates quantifier labels between parents and children and
feeds the derived triples back into training as soft positives.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

from .embed import (
    EmbeddingModel,
    ScoredTriple,
    TrainConfig,
    score_triple,
    train,
)
from .kb import (
    Background,
    KnowledgeBase,
    QuantLabel,
    Schema,
    Taxonomy,
    Triple,
    TypeMap,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConsistencyVerdict:
    """Outcome of a schema check.

    `witness` is the (domain-type, range-type) pair that matched, or
    None when the relation is unconstrained or the check failed.
    """

    consistent: bool
    witness: tuple[str, str] | None = None

    def __bool__(self) -> bool:
        return self.consistent


_warned_unconstrained: set[str] = set()


def schema_consistent(
    triple: Triple, schema: Schema, typemap: TypeMap
) -> ConsistencyVerdict:
    """Consistent iff some (domain, range) pair of the relation's schema
    matches a type of the source and a type of the target.  Relations
    absent from the schema are unconstrained (warned once each)."""
    pairs = schema.for_relation(triple.relation)
    if pairs is None:
        if triple.relation not in _warned_unconstrained:
            _warned_unconstrained.add(triple.relation)
            logger.warning(
                "relation %r absent from schema; treating as unconstrained",
                triple.relation,
            )
        return ConsistencyVerdict(True, None)
    source_types = typemap.types(triple.source)
    target_types = typemap.types(triple.target)
    for dom, rng in pairs:
        if dom in source_types and rng in target_types:
            return ConsistencyVerdict(True, (dom, rng))
    return ConsistencyVerdict(False, None)


def filter_predictions(
    predictions: Sequence[ScoredTriple], schema: Schema, typemap: TypeMap
) -> tuple[list[ScoredTriple], int]:
    """Drops schema-inconsistent predictions, preserving the order of the
    survivors; returns (survivors, number removed)."""
    survivors = [
        st for st in predictions if schema_consistent(st.triple, schema, typemap)
    ]
    return survivors, len(predictions) - len(survivors)


class RuleId(enum.Enum):
    DOWN_ALL = "down-all"
    UP_ALL = "up-all"
    UP_EXISTS_ALL = "up-exists-all"
    UP_EXISTS_SOME = "up-exists-some"

    @property
    def derived_label(self) -> QuantLabel:
        if self in (RuleId.DOWN_ALL, RuleId.UP_ALL):
            return QuantLabel.ALL
        return QuantLabel.SOME


# fixed application priority inside each pass
_RULE_ORDER = (
    RuleId.DOWN_ALL,
    RuleId.UP_ALL,
    RuleId.UP_EXISTS_ALL,
    RuleId.UP_EXISTS_SOME,
)


@dataclass(frozen=True)
class DerivedTriple:
    triple: Triple
    label: QuantLabel
    rule: RuleId
    provenance: tuple[Triple, ...]

    def __post_init__(self) -> None:
        if self.label is not self.rule.derived_label:
            raise ValueError(
                f"rule {self.rule.value} derives {self.rule.derived_label.value}, "
                f"not {self.label.value}"
            )
        if not self.provenance:
            raise ValueError("provenance must be non-empty")


def expand_taxonomy(
    kb: KnowledgeBase,
    taxonomy: Taxonomy,
    rules: Iterable[RuleId] | None = None,
) -> list[DerivedTriple]:
    """Derives new labeled triples from the taxonomy, to a fixpoint.

    Per pass, in priority order:
      down-all:        (p,r,t) All  =>  (c,r,t) All for every child c
      up-all:          (c,r,t) All for every child  =>  (p,r,t) All
                       (only when p has at least two children)
      up-exists-all:   some child All   =>  (p,r,t) Some
      up-exists-some:  some child Some  =>  (p,r,t) Some

    None labels never propagate.  A derived All supersedes a derived
    Some for the same triple; triples already in the KB are never
    re-derived.  Derivations chain across levels until no rule fires.
    """
    enabled = frozenset(_RULE_ORDER) if rules is None else frozenset(rules)
    labels: dict[Triple, QuantLabel] = dict(kb.triples)
    derived: dict[Triple, DerivedTriple] = {}

    changed = True
    while changed:
        changed = False
        positive_by_source: dict[str, dict[tuple[str, str], QuantLabel]] = {}
        for t, lab in labels.items():
            if lab.is_positive():
                positive_by_source.setdefault(t.source, {})[
                    (t.relation, t.target)
                ] = lab

        candidates: list[tuple[RuleId, Triple, tuple[Triple, ...]]] = []
        if RuleId.DOWN_ALL in enabled:
            for t, lab in labels.items():
                if lab is not QuantLabel.ALL:
                    continue
                for child in taxonomy.children(t.source):
                    candidates.append(
                        (RuleId.DOWN_ALL, Triple(child, t.relation, t.target), (t,))
                    )
        for parent in taxonomy.nodes:
            children = taxonomy.children(parent)
            if not children:
                continue
            per_fact: dict[tuple[str, str], dict[str, QuantLabel]] = {}
            for child in children:
                for fact_key, lab in positive_by_source.get(child, {}).items():
                    per_fact.setdefault(fact_key, {})[child] = lab
            for (rel, tgt), child_labels in sorted(per_fact.items()):
                cand = Triple(parent, rel, tgt)
                if (
                    RuleId.UP_ALL in enabled
                    and len(children) >= 2
                    and all(child_labels.get(c) is QuantLabel.ALL for c in children)
                ):
                    prov = tuple(sorted(Triple(c, rel, tgt) for c in children))
                    candidates.append((RuleId.UP_ALL, cand, prov))
                alls = sorted(c for c, l in child_labels.items() if l is QuantLabel.ALL)
                somes = sorted(
                    c for c, l in child_labels.items() if l is QuantLabel.SOME
                )
                if RuleId.UP_EXISTS_ALL in enabled and alls:
                    candidates.append(
                        (RuleId.UP_EXISTS_ALL, cand, (Triple(alls[0], rel, tgt),))
                    )
                if RuleId.UP_EXISTS_SOME in enabled and somes:
                    candidates.append(
                        (RuleId.UP_EXISTS_SOME, cand, (Triple(somes[0], rel, tgt),))
                    )

        for rule in _RULE_ORDER:
            label = rule.derived_label
            for rid, cand, prov in candidates:
                if rid is not rule or cand in kb:
                    continue
                prev = derived.get(cand)
                if prev is not None and prev.label.rank >= label.rank:
                    continue
                derived[cand] = DerivedTriple(cand, label, rule, prov)
                labels[cand] = label
                changed = True

    return sorted(derived.values(), key=lambda d: d.triple)


@dataclass
class ExpansionResult:
    """Model trained on KB plus derived triples, and the revisit scores.

    `revisited` aligns with `derived`; `kept` holds the derivations
    whose post-training probability met the keep threshold.
    """

    model: EmbeddingModel
    revisited: list[ScoredTriple]
    derived: list[DerivedTriple]
    kept: list[DerivedTriple]


def expand_then_train(
    kb: KnowledgeBase,
    background: Background,
    config: TrainConfig,
    derived_weight: float = 0.5,
    keep_threshold: float = 0.5,
    rules: Iterable[RuleId] | None = None,
) -> ExpansionResult:
    """Expands the KB through the taxonomy, trains on the union with the
    derived triples down-weighted, then re-scores each derivation."""
    if not 0.0 <= derived_weight:
        raise ValueError(f"derived_weight must be >= 0, got {derived_weight}")
    derived = expand_taxonomy(kb, background.taxonomy, rules)
    if derived:
        augmented = kb.merge((d.triple, d.label) for d in derived)
        weights = {d.triple: derived_weight for d in derived}
        model = train(augmented, background, config, weights=weights)
    else:
        model = train(kb, background, config)
    revisited = [score_triple(model, d.triple) for d in derived]
    kept = [
        d for d, st in zip(derived, revisited) if st.probability >= keep_threshold
    ]
    return ExpansionResult(model, revisited, derived, kept)


def schema_consistent_candidates(
    kb: KnowledgeBase,
    background: Background,
    entities: Sequence[str] | None = None,
    relations: Sequence[str] | None = None,
) -> list[Triple]:
    """Every schema-consistent (s, r, t) combination over the vocabulary
    that is not already in the KB, in deterministic order."""
    ents = kb.entities if entities is None else tuple(entities)
    rels = kb.relations if relations is None else tuple(relations)
    out: list[Triple] = []
    for rel in rels:
        for s in ents:
            for t in ents:
                cand = Triple(s, rel, t)
                if cand in kb:
                    continue
                if schema_consistent(cand, background.schema, background.typemap):
                    out.append(cand)
    return out


def entity_candidates(
    entity: str, kb: KnowledgeBase, background: Background
) -> list[Triple]:
    """Schema-consistent unknown triples with `entity` in either slot."""
    out: list[Triple] = []
    for rel in kb.relations:
        for other in kb.entities:
            for cand in (Triple(entity, rel, other), Triple(other, rel, entity)):
                if cand.source == cand.target or cand in kb:
                    continue
                if schema_consistent(cand, background.schema, background.typemap):
                    out.append(cand)
    return sorted(set(out))
