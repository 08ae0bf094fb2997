"""Precision-at-yield evaluation under an annotation budget.

Exact precision and trailing-window precision over a ranked prediction
list, a geometric lower/upper bound estimator that needs only
O(Delta * log_alpha y) oracle queries instead of y, and empirical
checks of the sandwich, ratio, and approximation claims those bounds
rest on.  All precision arithmetic is exact rational; floats appear
only in reports.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from .kb import QuantLabel, Triple
from .embed import ScoredTriple


def round_half_up(q: Fraction) -> int:
    """Rounds to the nearest integer, halves away from zero-ward floor."""
    return math.floor(q + Fraction(1, 2))


class RankedPredictions:
    """Triples in non-increasing score order; ranks are 1-based.

    `from_scored` sorts (score descending, ties by triple);
    `from_ordered` trusts the given order but verifies any scores;
    `stream` is a rank-only view for synthetic label streams.
    """

    __slots__ = ("_entries", "_scores", "_length")

    def __init__(
        self,
        entries: tuple[Triple, ...] | None,
        scores: tuple[float, ...] | None,
        length: int,
    ):
        self._entries = entries
        self._scores = scores
        self._length = length

    @classmethod
    def from_scored(cls, scored: Sequence[ScoredTriple]) -> "RankedPredictions":
        ordered = sorted(scored, key=ScoredTriple.sort_key)
        return cls(
            tuple(st.triple for st in ordered),
            tuple(st.score for st in ordered),
            len(ordered),
        )

    @classmethod
    def from_ordered(
        cls,
        entries: Sequence[Triple],
        scores: Sequence[float] | None = None,
    ) -> "RankedPredictions":
        if scores is not None:
            if len(scores) != len(entries):
                raise ValueError("scores and entries differ in length")
            for a, b in zip(scores, scores[1:]):
                if b > a:
                    raise ValueError("scores must be non-increasing")
            scores = tuple(float(s) for s in scores)
        return cls(tuple(entries), scores, len(entries))

    @classmethod
    def stream(cls, length: int) -> "RankedPredictions":
        if length < 1:
            raise ValueError(f"length must be >= 1, got {length}")
        return cls(None, None, length)

    def __len__(self) -> int:
        return self._length

    @property
    def entries(self) -> tuple[Triple, ...]:
        if self._entries is None:
            raise ValueError("rank-only stream has no triple entries")
        return self._entries

    def triple_at(self, rank: int) -> Triple:
        self._check_rank(rank)
        return self.entries[rank - 1]

    def score_at(self, rank: int) -> float:
        self._check_rank(rank)
        if self._scores is None:
            raise ValueError("no scores attached")
        return self._scores[rank - 1]

    def _check_rank(self, rank: int) -> None:
        if not 1 <= rank <= self._length:
            raise ValueError(f"rank must be in 1..{self._length}, got {rank}")


class AnnotationOracle:
    """Resolves the true 0/1 value of ranked entries by 1-based rank.

    Each distinct rank is charged once; `query_count` is the number of
    distinct ranks resolved.  `fresh_clone` shares the truth source but
    starts with an empty cache, for verification scans that must not
    inherit paid-for answers.
    """

    def __init__(self, lookup: Callable[[int], int]):
        self._lookup = lookup
        self._cache: dict[int, int] = {}

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "AnnotationOracle":
        vals = tuple(int(v) for v in labels)
        for v in vals:
            if v not in (0, 1):
                raise ValueError(f"labels must be 0 or 1, got {v}")
        return cls(lambda rank: vals[rank - 1])

    @classmethod
    def from_truth(
        cls,
        ranked: RankedPredictions,
        truth: Mapping[Triple, QuantLabel] | Callable[[Triple], QuantLabel],
    ) -> "AnnotationOracle":
        if callable(truth):
            lookup_label = truth
        else:
            table = dict(truth)
            lookup_label = lambda t: table.get(t, QuantLabel.NONE)
        return cls(
            lambda rank: int(lookup_label(ranked.triple_at(rank)).is_positive())
        )

    @classmethod
    def interactive(
        cls,
        ranked: RankedPredictions,
        ask: Callable[[int, Triple], bool],
    ) -> "AnnotationOracle":
        return cls(lambda rank: int(bool(ask(rank, ranked.triple_at(rank)))))

    def value(self, rank: int) -> int:
        if rank not in self._cache:
            v = int(self._lookup(rank))
            if v not in (0, 1):
                raise ValueError(f"oracle returned {v}, expected 0 or 1")
            self._cache[rank] = v
        return self._cache[rank]

    def values(self, ranks: Sequence[int]) -> list[int]:
        # resolve unseen ranks in rank order so interactive annotators
        # see questions top-down
        for rank in sorted(set(ranks) - self._cache.keys()):
            self.value(rank)
        return [self._cache[rank] for rank in ranks]

    @property
    def query_count(self) -> int:
        return len(self._cache)

    def fresh_clone(self) -> "AnnotationOracle":
        return AnnotationOracle(self._lookup)


@dataclass(frozen=True)
class EstimatorParams:
    """Geometric checkpoint grid: spacing alpha, window delta, onset ytilde."""

    alpha: Fraction
    delta: int
    ytilde: int

    def __post_init__(self) -> None:
        if not isinstance(self.alpha, Fraction):
            object.__setattr__(self, "alpha", Fraction(self.alpha))
        if self.alpha <= 1:
            raise ValueError(f"alpha must be > 1, got {self.alpha}")
        if self.delta < 1:
            raise ValueError(f"delta must be >= 1, got {self.delta}")
        if self.ytilde < self.delta:
            raise ValueError(
                f"ytilde must be >= delta, got ytilde={self.ytilde} "
                f"delta={self.delta}"
            )

    @property
    def ell(self) -> int:
        """ceil(log_alpha ytilde), by exact power comparison."""
        n = 0
        power = Fraction(1)
        while power < self.ytilde:
            power *= self.alpha
            n += 1
        return n

    def checkpoint_yield(self, j: int) -> int:
        """y_j = round(alpha^j), at least 1; non-decreasing in j."""
        if j < 0:
            raise ValueError(f"checkpoint index must be >= 0, got {j}")
        return max(1, round_half_up(self.alpha**j))

    def max_checkpoint(self, m: int) -> int:
        """Largest k >= ell with y_k <= m."""
        k = self.ell
        if self.checkpoint_yield(k) > m:
            raise ValueError(
                f"y_ell={self.checkpoint_yield(k)} already exceeds list length {m}"
            )
        while self.checkpoint_yield(k + 1) <= m:
            k += 1
        return k

    def floor_log(self, y: int) -> int:
        """floor(log_alpha y) for y >= 1, by exact power comparison."""
        if y < 1:
            raise ValueError(f"y must be >= 1, got {y}")
        n = 0
        power = Fraction(1)
        while power * self.alpha <= y:
            power *= self.alpha
            n += 1
        return n


def _check_yield(ranked: RankedPredictions, y: int) -> None:
    if not 1 <= y <= len(ranked):
        raise ValueError(f"y must be in 1..{len(ranked)}, got {y}")


def precision_at_yield(
    ranked: RankedPredictions, oracle: AnnotationOracle, y: int
) -> Fraction:
    """Fraction of true entries among the top y; charges y queries."""
    _check_yield(ranked, y)
    hits = sum(oracle.values(range(1, y + 1)))
    return Fraction(hits, y)


def delta_precision(
    ranked: RankedPredictions, oracle: AnnotationOracle, y: int, delta: int
) -> Fraction:
    """Precision over the trailing window of delta ranks ending at y.

    For y < delta this is plain precision at y.  Charges at most delta
    queries."""
    _check_yield(ranked, y)
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    if y < delta:
        return precision_at_yield(ranked, oracle, y)
    hits = sum(oracle.values(range(y - delta + 1, y + 1)))
    return Fraction(hits, delta)


def decomposition_check(
    ranked: RankedPredictions, oracle: AnnotationOracle, y: int, delta: int
) -> bool:
    """prc(y) == (delta/y) * sum of window precisions, exactly."""
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    if y % delta != 0:
        raise ValueError(f"delta must divide y (got y={y}, delta={delta})")
    left = precision_at_yield(ranked, oracle, y)
    right = Fraction(delta, y) * sum(
        delta_precision(ranked, oracle, j * delta, delta)
        for j in range(1, y // delta + 1)
    )
    return left == right


@dataclass(frozen=True)
class BoundsRow:
    """One checkpoint of the geometric bound estimator.

    `lower`/`upper` are the raw sums (they scale like y_k/delta);
    `lower_hat`/`upper_hat` are normalized by delta/y_k onto the
    precision scale.  `divisible` marks rows whose floors and ceilings
    were all exact quotients; `queries_used` is the oracle's cumulative
    count when the row was emitted."""

    params: EstimatorParams
    k: int
    yield_at_k: int
    lower: Fraction
    upper: Fraction
    lower_hat: Fraction
    upper_hat: Fraction
    divisible: bool
    queries_used: int
    exact: Fraction | None = None


def bound_estimators(
    ranked: RankedPredictions,
    oracle: AnnotationOracle,
    params: EstimatorParams,
    k: int,
    include_exact: bool = False,
) -> BoundsRow:
    """Lower/upper precision bounds at checkpoint k.

    L anchors on exact precision at y_ell and adds floor-weighted
    trailing windows at the right end of each gap; U uses ceilings and
    the left end.  Windows with a zero coefficient are skipped without
    charging queries.  With `include_exact` the true precision at y_k
    is computed through a fresh oracle clone so the frugality
    accounting stays honest."""
    ell = params.ell
    if k < ell:
        raise ValueError(f"k must be >= ell={ell}, got {k}")
    y_k = params.checkpoint_yield(k)
    if y_k > len(ranked):
        raise ValueError(
            f"checkpoint yield {y_k} exceeds ranked length {len(ranked)}"
        )
    delta = params.delta
    yields = [params.checkpoint_yield(j) for j in range(ell, k + 1)]
    y_ell = yields[0]

    base = precision_at_yield(ranked, oracle, y_ell)
    lower = Fraction(y_ell // delta) * base
    upper = Fraction(-(-y_ell // delta)) * base
    divisible = y_ell % delta == 0
    for idx in range(len(yields) - 1):
        y_lo, y_hi = yields[idx], yields[idx + 1]
        gap = y_hi - y_lo
        if gap % delta != 0:
            divisible = False
        lo_coef = gap // delta
        hi_coef = -(-gap // delta)
        if lo_coef:
            lower += lo_coef * delta_precision(ranked, oracle, y_hi, delta)
        if hi_coef:
            upper += hi_coef * delta_precision(ranked, oracle, y_lo, delta)
    norm = Fraction(delta, y_k)
    exact = None
    if include_exact:
        exact = precision_at_yield(ranked, oracle.fresh_clone(), y_k)
    return BoundsRow(
        params=params,
        k=k,
        yield_at_k=y_k,
        lower=lower,
        upper=upper,
        lower_hat=norm * lower,
        upper_hat=norm * upper,
        divisible=divisible,
        queries_used=oracle.query_count,
        exact=exact,
    )


def ratio_check(row: BoundsRow) -> bool | None:
    """alpha * L >= U, exact under divisibility, else allowing one
    rounding unit per window (L grows by k - ell + 1).  Indeterminate
    (None) when L <= 0."""
    if row.lower <= 0:
        return None
    alpha = row.params.alpha
    if row.divisible:
        return alpha * row.lower >= row.upper
    slack = row.k - row.params.ell + 1
    return alpha * (row.lower + slack) >= row.upper


@dataclass(frozen=True)
class ApproximationVerdict:
    y: int
    exact: Fraction
    k_minus: int
    k_plus: int
    lower_hat_plus: Fraction
    upper_hat_minus: Fraction
    lower_ok: bool
    upper_ok: bool

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok


def approximation_check(
    ranked: RankedPredictions,
    oracle: AnnotationOracle,
    params: EstimatorParams,
    y: int,
) -> ApproximationVerdict:
    """The alpha^2 two-sided approximation at an arbitrary yield y.

    Brackets y between checkpoints k- and k+ (clamped to ell) and
    checks L_hat(k+) <= alpha^2 * prc(y) and U_hat(k-) >= prc(y) /
    alpha^2, each side slackened by one rounding unit per window as in
    ratio_check."""
    ell = params.ell
    y_ell = params.checkpoint_yield(ell)
    if y < y_ell:
        raise ValueError(f"y must be >= y_ell={y_ell}, got {y}")
    k_minus = max(params.floor_log(y), ell)
    power = params.alpha**k_minus
    k_plus = k_minus if power >= y else k_minus + 1
    if params.checkpoint_yield(k_plus) > len(ranked):
        raise ValueError(
            f"checkpoint yield {params.checkpoint_yield(k_plus)} exceeds "
            f"ranked length {len(ranked)}"
        )
    row_minus = bound_estimators(ranked, oracle, params, k_minus)
    row_plus = bound_estimators(ranked, oracle, params, k_plus)
    exact = precision_at_yield(ranked, oracle.fresh_clone(), y)
    a2 = params.alpha**2
    slack_plus = Fraction(params.delta, row_plus.yield_at_k) * (
        k_plus - ell + 1
    )
    slack_minus = Fraction(params.delta, row_minus.yield_at_k) * (
        k_minus - ell + 1
    )
    lower_ok = row_plus.lower_hat <= a2 * exact + slack_plus
    upper_ok = row_minus.upper_hat >= exact / a2 - slack_minus
    return ApproximationVerdict(
        y=y,
        exact=exact,
        k_minus=k_minus,
        k_plus=k_plus,
        lower_hat_plus=row_plus.lower_hat,
        upper_hat_minus=row_minus.upper_hat,
        lower_ok=lower_ok,
        upper_ok=upper_ok,
    )


@dataclass(frozen=True)
class MonotonicityResult:
    onset: int
    monotone: bool
    n_checked: int


def monotonicity_onset(
    ranked: RankedPredictions, oracle: AnnotationOracle, delta: int
) -> MonotonicityResult:
    """Smallest checkpoint y after which window precision never rises
    by more than 1/delta per step.

    Scans prc(y, delta) at stride delta over the whole list (charging
    the queries that scan costs).  The per-step tolerance absorbs
    single-hit jitter in sampled streams.  Streams whose last
    transition still violates it are flagged non-monotone with onset at
    the list length."""
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    m = len(ranked)
    checkpoints = list(range(delta, m + 1, delta))
    if not checkpoints:
        return MonotonicityResult(onset=m, monotone=False, n_checked=0)
    dps = [delta_precision(ranked, oracle, y, delta) for y in checkpoints]
    tol = Fraction(1, delta)
    last_bad = -1
    for t in range(len(dps) - 1):
        if dps[t + 1] > dps[t] + tol:
            last_bad = t
    start = last_bad + 1
    if len(dps) > 1 and start >= len(dps) - 1:
        return MonotonicityResult(onset=m, monotone=False, n_checked=len(dps))
    return MonotonicityResult(
        onset=checkpoints[start], monotone=True, n_checked=len(dps)
    )


def write_bounds_csv(rows: Sequence[BoundsRow], path: str) -> None:
    """One row per checkpoint: raw bounds as exact fractions,
    normalized bounds and exact precision as floats."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["k", "yield", "lower", "upper", "lower_hat", "upper_hat",
             "exact", "queries"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.k,
                    row.yield_at_k,
                    str(row.lower),
                    str(row.upper),
                    repr(float(row.lower_hat)),
                    repr(float(row.upper_hat)),
                    "" if row.exact is None else repr(float(row.exact)),
                    row.queries_used,
                ]
            )


def write_precision_curve(
    ranked: RankedPredictions,
    oracle: AnnotationOracle,
    ys: Sequence[int],
    path: str,
) -> None:
    """Exact precision at each requested yield, for plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["yield", "precision"])
        for y in ys:
            writer.writerow([y, repr(float(precision_at_yield(ranked, oracle, y)))])
