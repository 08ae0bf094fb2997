"""Holographic-embedding scoring and training.

Triples (s, r, t) are scored f = h_r . (h_s o h_t) with o the circular
correlation; sigma(f) is the truth probability in binary mode, and a
3-head softmax covers the all/some/none label in multiclass mode.
Training is per-example stochastic gradient descent with optional
per-coordinate adaptive accumulators and negative sampling.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .kb import Background, KBError, KnowledgeBase, QuantLabel, Triple, TypeMap

logger = logging.getLogger(__name__)

LOSS_MODES = ("binary", "multiclass")

_MODEL_MAGIC = "genkbc-model"
_EPS = 1e-8
# largest representable probability below 1; keeps sigma(f) inside (0, 1)
_P_MAX = float(np.nextafter(1.0, 0.0))
_P_MIN = 1e-300


def sigmoid(z: float) -> float:
    """Stable logistic; exact 0/1 are clamped away so logs stay finite."""
    if z >= 0:
        p = 1.0 / (1.0 + math.exp(-z))
    else:
        e = math.exp(z)
        p = e / (1.0 + e)
    return min(max(p, _P_MIN), _P_MAX)


def softmax(scores: Sequence[float]) -> np.ndarray:
    z = np.asarray(scores, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass(frozen=True)
class TrainConfig:
    """Training knobs; defaults suit desk-scale knowledge bases."""

    dim: int = 64
    epochs: int = 30
    learning_rate: float = 0.1
    adaptive: bool = True
    n_negatives: int = 2
    same_type_fraction: float = 0.0
    l2: float = 0.0
    seed: int = 0
    loss_mode: str = "binary"
    corrupt_targets: bool = True

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        # 0 is allowed so a zero-step run can reproduce its initialization
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.n_negatives < 1:
            raise ValueError(f"n_negatives must be >= 1, got {self.n_negatives}")
        if not 0.0 <= self.same_type_fraction <= 1.0:
            raise ValueError(
                f"same_type_fraction must be in [0, 1], got {self.same_type_fraction}"
            )
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(
                f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}"
            )

    @property
    def heads(self) -> int:
        return 1 if self.loss_mode == "binary" else 3


def _vocab_digest(entities: Sequence[str], relations: Sequence[str]) -> str:
    h = hashlib.sha256()
    for token in entities:
        h.update(token.encode("utf-8") + b"\x00")
    h.update(b"\x01")
    for token in relations:
        h.update(token.encode("utf-8") + b"\x00")
    return h.hexdigest()


class EmbeddingModel:
    """Vectors for every entity and relation, plus the seed that made them.

    Relation vectors carry one head per class (1 binary, 3 multiclass).
    Arrays are owned by the model; training mutates them in place, and
    everything else treats them as read-only.
    """

    def __init__(
        self,
        dim: int,
        entities: Sequence[str],
        relations: Sequence[str],
        entity_vectors: np.ndarray,
        relation_vectors: np.ndarray,
        seed: int,
    ):
        entity_vectors = np.ascontiguousarray(entity_vectors, dtype=np.float64)
        relation_vectors = np.ascontiguousarray(relation_vectors, dtype=np.float64)
        if entity_vectors.shape != (len(entities), dim):
            raise ValueError(
                f"entity vectors shape {entity_vectors.shape} != ({len(entities)}, {dim})"
            )
        if relation_vectors.ndim != 3 or relation_vectors.shape[0] != len(relations) \
                or relation_vectors.shape[2] != dim:
            raise ValueError(
                f"relation vectors shape {relation_vectors.shape} incompatible with "
                f"({len(relations)}, heads, {dim})"
            )
        if not (np.isfinite(entity_vectors).all() and np.isfinite(relation_vectors).all()):
            raise ValueError("model vectors must be finite")
        self._dim = dim
        self._entities = tuple(entities)
        self._relations = tuple(relations)
        self._ent = entity_vectors
        self._rel = relation_vectors
        self._seed = seed
        self._ent_index = {e: i for i, e in enumerate(self._entities)}
        self._rel_index = {r: i for i, r in enumerate(self._relations)}
        if len(self._ent_index) != len(self._entities):
            raise ValueError("duplicate entity in vocabulary")
        if len(self._rel_index) != len(self._relations):
            raise ValueError("duplicate relation in vocabulary")
        self.final_train_loss: float | None = None

    @classmethod
    def init(
        cls,
        dim: int,
        entities: Sequence[str],
        relations: Sequence[str],
        seed: int,
        heads: int = 1,
    ) -> "EmbeddingModel":
        """Seeded Gaussian N(0, 1/sqrt(d)) initialization."""
        rng = np.random.default_rng(seed)
        scale = dim ** -0.5
        ent = rng.normal(0.0, scale, size=(len(entities), dim))
        rel = rng.normal(0.0, scale, size=(len(relations), heads, dim))
        return cls(dim, entities, relations, ent, rel, seed)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def heads(self) -> int:
        return int(self._rel.shape[1])

    @property
    def entities(self) -> tuple[str, ...]:
        return self._entities

    @property
    def relations(self) -> tuple[str, ...]:
        return self._relations

    def has_entity(self, entity: str) -> bool:
        return entity in self._ent_index

    def has_relation(self, relation: str) -> bool:
        return relation in self._rel_index

    def entity_vector(self, entity: str) -> np.ndarray:
        try:
            return self._ent[self._ent_index[entity]]
        except KeyError:
            raise KBError(f"unknown entity: {entity!r}") from None

    def relation_vector(self, relation: str, head: int = 0) -> np.ndarray:
        try:
            return self._rel[self._rel_index[relation], head]
        except KeyError:
            raise KBError(f"unknown relation: {relation!r}") from None

    def relation_heads(self, relation: str) -> np.ndarray:
        try:
            return self._rel[self._rel_index[relation]]
        except KeyError:
            raise KBError(f"unknown relation: {relation!r}") from None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingModel):
            return NotImplemented
        return (
            self._dim == other._dim
            and self._entities == other._entities
            and self._relations == other._relations
            and self._seed == other._seed
            and np.array_equal(self._ent, other._ent)
            and np.array_equal(self._rel, other._rel)
        )

    def __hash__(self) -> int:  # pragma: no cover - identity use only
        return id(self)

    def save(self, path: str | Path) -> None:
        """Header line (JSON) + little-endian float64 vectors, C order."""
        header = {
            "format": _MODEL_MAGIC,
            "version": 1,
            "dim": self._dim,
            "heads": self.heads,
            "seed": self._seed,
            "entities": list(self._entities),
            "relations": list(self._relations),
            "vocab_sha256": _vocab_digest(self._entities, self._relations),
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, ensure_ascii=False).encode("utf-8"))
            fh.write(b"\n")
            fh.write(np.ascontiguousarray(self._ent, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self._rel, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingModel":
        with open(path, "rb") as fh:
            line = fh.readline()
            try:
                header = json.loads(line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                raise KBError(f"{path}: not a model file") from None
            if not isinstance(header, dict) or header.get("format") != _MODEL_MAGIC:
                raise KBError(f"{path}: not a model file")
            dim = int(header["dim"])
            heads = int(header["heads"])
            entities = [str(e) for e in header["entities"]]
            relations = [str(r) for r in header["relations"]]
            if header.get("vocab_sha256") != _vocab_digest(entities, relations):
                raise KBError(f"{path}: vocabulary hash mismatch")
            body = fh.read()
        n_ent = len(entities) * dim
        n_rel = len(relations) * heads * dim
        expected = 8 * (n_ent + n_rel)
        if len(body) != expected:
            raise KBError(
                f"{path}: truncated or oversized payload "
                f"({len(body)} bytes, expected {expected})"
            )
        flat = np.frombuffer(body, dtype="<f8")
        ent = flat[:n_ent].reshape(len(entities), dim).astype(np.float64)
        rel = flat[n_ent:].reshape(len(relations), heads, dim).astype(np.float64)
        return cls(dim, entities, relations, ent, rel, int(header["seed"]))


@dataclass(frozen=True)
class ScoredTriple:
    """A triple with its pre-sigmoid score and probability sigma(score)."""

    triple: Triple
    score: float
    probability: float

    def __post_init__(self) -> None:
        if not 0.0 < self.probability < 1.0:
            raise ValueError(f"probability must be in (0, 1), got {self.probability}")
        if abs(sigmoid(self.score) - self.probability) > 1e-9:
            raise ValueError("probability is not sigma(score)")

    @classmethod
    def from_score(cls, triple: Triple, score: float) -> "ScoredTriple":
        return cls(triple, float(score), sigmoid(float(score)))

    @classmethod
    def from_probability(cls, triple: Triple, probability: float) -> "ScoredTriple":
        p = min(max(float(probability), _P_MIN), _P_MAX)
        return cls(triple, math.log(p) - math.log1p(-p), p)

    def sort_key(self) -> tuple:
        return (-self.score, self.triple)


def circular_correlation(a, b) -> np.ndarray:
    """[a o b]_k = sum_i a[i] * b[(i+k) mod d]; delegates to the active kernel."""
    return kernels.circular_correlation(a, b)


def flip_check(a, b, tol: float = 1e-10, corr=None) -> bool:
    """True iff [a o b]_k == [b o a]_{(d-k) mod d} for every k, within tol."""
    fn = kernels.circular_correlation if corr is None else corr
    ab = np.asarray(fn(a, b), dtype=np.float64)
    ba = np.asarray(fn(b, a), dtype=np.float64)
    d = ab.shape[0]
    flipped = ba[(d - np.arange(d)) % d]
    return bool(np.max(np.abs(ab - flipped)) <= tol)


def hole_score(model: EmbeddingModel, triple: Triple, head: int = 0) -> ScoredTriple:
    h_r = model.relation_vector(triple.relation, head)
    h_s = model.entity_vector(triple.source)
    h_t = model.entity_vector(triple.target)
    f = float(h_r @ kernels.circular_correlation(h_s, h_t))
    return ScoredTriple.from_score(triple, f)


def class_scores(model: EmbeddingModel, triple: Triple) -> np.ndarray:
    """One score per relation head (all/some/none in multiclass mode)."""
    heads = model.relation_heads(triple.relation)
    corr = kernels.circular_correlation(
        model.entity_vector(triple.source), model.entity_vector(triple.target)
    )
    return heads @ corr

def score_triple(model: EmbeddingModel, triple: Triple) -> ScoredTriple:
    """Truth probability of a triple under either loss mode.

    Binary: sigma(f).  Multiclass: P(all) + P(some) under the 3-head
    softmax, reported through the matching logit so that probability ==
    sigma(score) still holds.
    """
    if model.heads == 1:
        return hole_score(model, triple)
    probs = softmax(class_scores(model, triple))
    return ScoredTriple.from_probability(triple, float(probs[0] + probs[1]))


def rank_candidates(
    model: EmbeddingModel, candidates: Iterable[Triple]
) -> list[ScoredTriple]:
    """Scores candidates and sorts by descending probability, ties by triple."""
    scored = [score_triple(model, t) for t in candidates]
    scored.sort(key=ScoredTriple.sort_key)
    return scored


def binary_loss(score: float, y: int) -> float:
    """log(1 + exp(-y * score)), stabilized for large magnitudes."""
    if y not in (-1, 1):
        raise ValueError(f"y must be -1 or +1, got {y}")
    z = -y * float(score)
    if z > 0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


def binary_loss_grad(score: float, y: int) -> float:
    """d/dscore of binary_loss = -y * sigma(-y * score)."""
    if y not in (-1, 1):
        raise ValueError(f"y must be -1 or +1, got {y}")
    return -y * sigmoid(-y * float(score))


def multiclass_loss(scores: Sequence[float], y: int) -> float:
    """Negative log softmax probability of class y in {1, 2, 3}."""
    z = np.asarray(scores, dtype=np.float64)
    if z.shape != (3,):
        raise ValueError(f"expected 3 class scores, got shape {z.shape}")
    if y not in (1, 2, 3):
        raise ValueError(f"y must be a class in {{1, 2, 3}}, got {y}")
    m = float(z.max())
    lse = m + math.log(float(np.exp(z - m).sum()))
    return lse - float(z[y - 1])


def multiclass_loss_grad(scores: Sequence[float], y: int) -> np.ndarray:
    """d/dscores of multiclass_loss = softmax(scores) - onehot(y)."""
    if y not in (1, 2, 3):
        raise ValueError(f"y must be a class in {{1, 2, 3}}, got {y}")
    g = softmax(scores)
    g[y - 1] -= 1.0
    return g


class NegativeSampler:
    """Corrupts one slot of a positive triple into an unseen triple.

    The corrupted slot is the source, or the target with probability 0.5
    when target corruption is enabled.  A fraction eta of draws come
    from entities sharing a type with the replaced one, the rest from
    the full vocabulary.  Draws that reproduce a KB triple are rejected
    and retried, up to 100 attempts per negative; exhaustion skips the
    negative and bumps the warning counter.
    """

    _ATTEMPTS = 100

    def __init__(
        self,
        kb: KnowledgeBase,
        typemap: TypeMap,
        config: TrainConfig,
        rng: random.Random,
    ):
        self._kb = kb
        self._config = config
        self._rng = rng
        self._entities = kb.entities
        by_type: dict[str, list[str]] = {}
        for e in kb.entities:
            for t in sorted(typemap.types(e)):
                by_type.setdefault(t, []).append(e)
        self._by_type = {t: tuple(es) for t, es in by_type.items()}
        self._typemap = typemap
        self.exhausted = 0

    def _typed_pool(self, entity: str) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for t in sorted(self._typemap.types(entity)):
            for e in self._by_type.get(t, ()):
                seen.setdefault(e)
        return tuple(seen)

    def sample(self, triple: Triple) -> list[Triple]:
        out: list[Triple] = []
        for _ in range(self._config.n_negatives):
            neg = self._sample_one(triple)
            if neg is None:
                self.exhausted += 1
            else:
                out.append(neg)
        return out

    def _sample_one(self, triple: Triple) -> Triple | None:
        cfg = self._config
        for _ in range(self._ATTEMPTS):
            corrupt_source = True
            if cfg.corrupt_targets:
                corrupt_source = self._rng.random() < 0.5
            original = triple.source if corrupt_source else triple.target
            typed = (
                cfg.same_type_fraction > 0.0
                and self._rng.random() < cfg.same_type_fraction
            )
            pool = self._typed_pool(original) if typed else self._entities
            if not pool:
                continue
            cand = pool[self._rng.randrange(len(pool))]
            if corrupt_source:
                new = Triple(cand, triple.relation, triple.target)
            else:
                new = Triple(triple.source, triple.relation, cand)
            if new == triple or new in self._kb:
                continue
            return new
        return None


def sample_negatives(
    kb: KnowledgeBase,
    typemap: TypeMap,
    triple: Triple,
    config: TrainConfig,
    rng: random.Random,
) -> list[Triple]:
    return NegativeSampler(kb, typemap, config, rng).sample(triple)


def _apply_update(
    vec: np.ndarray, grad: np.ndarray, acc: np.ndarray, lr: float, adaptive: bool
) -> None:
    if adaptive:
        acc += grad * grad
        vec -= lr * grad / np.sqrt(acc + _EPS)
    else:
        vec -= lr * grad


def train(
    kb: KnowledgeBase,
    background: Background,
    config: TrainConfig,
    weights: Mapping[Triple, float] | None = None,
) -> EmbeddingModel:
    """Trains an embedding model on the KB's triples.

    All/Some labels train as true, None as false; each positive also
    spawns sampled negatives.  `weights` scales the loss of individual
    triples (and the negatives they spawn); absent triples weigh 1.
    Deterministic given (kb, config): one seeded generator drives
    shuffling and sampling, another the Gaussian initialization.
    """
    if len(kb) == 0:
        raise KBError("cannot train on an empty knowledge base")
    model = EmbeddingModel.init(
        config.dim, kb.entities, kb.relations, config.seed, heads=config.heads
    )
    rng = random.Random(config.seed)
    sampler = NegativeSampler(kb, background.typemap, config, rng)
    w = dict(weights) if weights else {}

    ent, rel = model._ent, model._rel
    acc_e = np.zeros_like(ent)
    acc_r = np.zeros_like(rel)
    ent_index, rel_index = model._ent_index, model._rel_index
    positives = list(kb.triples.items())
    lr, l2, adaptive = config.learning_rate, config.l2, config.adaptive
    multiclass = config.heads == 3
    mean_loss = math.nan

    for epoch in range(config.epochs):
        order = list(range(len(positives)))
        rng.shuffle(order)
        total = 0.0
        total_weight = 0.0
        for idx in order:
            triple, label = positives[idx]
            weight = w.get(triple, 1.0)
            batch: list[tuple[Triple, QuantLabel | None]] = [(triple, label)]
            if label.is_positive():
                batch.extend((neg, None) for neg in sampler.sample(triple))
            for ex_triple, ex_label in batch:
                si = ent_index[ex_triple.source]
                ti = ent_index[ex_triple.target]
                ri = rel_index[ex_triple.relation]
                h_s, h_t = ent[si], ent[ti]
                if multiclass:
                    heads = rel[ri]
                    corr_st = kernels.circular_correlation(h_s, h_t)
                    scores = heads @ corr_st
                    y = 3 if ex_label is None else ex_label.to_class()
                    loss = multiclass_loss(scores, y)
                    dldf = multiclass_loss_grad(scores, y)
                    rbar = dldf @ heads
                    grad_rel = weight * np.outer(dldf, corr_st)
                    grad_s = weight * kernels.circular_correlation(rbar, h_t)
                    grad_t = weight * kernels.circular_convolution(h_s, rbar)
                    if l2:
                        grad_rel += weight * l2 * heads
                        grad_s = grad_s + weight * l2 * h_s
                        grad_t = grad_t + weight * l2 * h_t
                    if not math.isfinite(loss):
                        raise RuntimeError(
                            f"non-finite loss at epoch {epoch} on {ex_triple}"
                        )
                    if si == ti:
                        _apply_update(ent[si], grad_s + grad_t, acc_e[si], lr, adaptive)
                    else:
                        _apply_update(ent[si], grad_s, acc_e[si], lr, adaptive)
                        _apply_update(ent[ti], grad_t, acc_e[ti], lr, adaptive)
                    _apply_update(rel[ri], grad_rel, acc_r[ri], lr, adaptive)
                else:
                    h_r = rel[ri, 0]
                    f, g_r, g_s, g_t = kernels.score_and_grads(h_r, h_s, h_t)
                    y = 1 if (ex_label is not None and ex_label.is_positive()) else -1
                    loss = binary_loss(f, y)
                    if not math.isfinite(loss):
                        raise RuntimeError(
                            f"non-finite loss at epoch {epoch} on {ex_triple}"
                        )
                    dldf = weight * binary_loss_grad(f, y)
                    grad_r = dldf * g_r
                    grad_s = dldf * g_s
                    grad_t = dldf * g_t
                    if l2:
                        grad_r += weight * l2 * h_r
                        grad_s += weight * l2 * h_s
                        grad_t += weight * l2 * h_t
                    if si == ti:
                        _apply_update(ent[si], grad_s + grad_t, acc_e[si], lr, adaptive)
                    else:
                        _apply_update(ent[si], grad_s, acc_e[si], lr, adaptive)
                        _apply_update(ent[ti], grad_t, acc_e[ti], lr, adaptive)
                    _apply_update(rel[ri, 0], grad_r, acc_r[ri, 0], lr, adaptive)
                total += weight * loss
                total_weight += weight
        mean_loss = total / total_weight if total_weight else math.nan
    if sampler.exhausted:
        logger.warning("negative sampling exhausted %d times", sampler.exhausted)
    logger.info("final mean train loss: %.6f", mean_loss)
    model.final_train_loss = mean_loss
    return model
