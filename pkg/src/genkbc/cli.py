"""Command-line front end for the completion pipeline.

Subcommands cover the full workflow: ``fixture`` writes the bundled
synthetic dataset, ``train`` fits an embedding model, ``expand`` runs
the taxonomy rules, ``predict`` emits ranked schema-checked facts,
``eval`` audits a ranked stream with windowed precision bounds,
``active`` runs one annotation episode, and ``serve`` starts the HTTP
session service.

Exit codes: 0 on success, 1 on runtime failure, 2 on configuration
errors (missing files, malformed parameters).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .active import (
    ActiveError,
    Annotator,
    ColdEntityError,
    EpisodeConfig,
    ProposalMode,
    SelectionMode,
    SelectionWeights,
    SessionThresholds,
    SyntheticAnnotator,
    run_episode,
)
from .embed import EmbeddingModel, TrainConfig, rank_candidates, train
from .evaluation import (
    AnnotationOracle,
    BoundsRow,
    EstimatorParams,
    RankedPredictions,
    bound_estimators,
    decomposition_check,
    ratio_check,
    write_bounds_csv,
    write_precision_curve,
)
from .guidance import (
    entity_candidates,
    expand_taxonomy,
    filter_predictions,
    schema_consistent_candidates,
)
from .kb import (
    Background,
    KBError,
    KnowledgeBase,
    QuantLabel,
    Triple,
    load_kb,
)
from . import synth

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    """Bad invocation: missing inputs or malformed parameter values."""


def _require_file(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


@dataclass(frozen=True)
class RunConfig:
    """Validated input paths plus the seed threaded through every stage."""

    kb: Path
    taxonomy: Path
    typemap: Path
    schema: Path
    seed: int = 0

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        return cls(
            kb=_require_file(args.kb, "kb"),
            taxonomy=_require_file(args.taxonomy, "taxonomy"),
            typemap=_require_file(args.typemap, "typemap"),
            schema=_require_file(args.schema, "schema"),
            seed=getattr(args, "seed", 0),
        )

    def load(self) -> tuple[KnowledgeBase, Background]:
        return load_kb(self.kb), Background.load(
            self.taxonomy, self.typemap, self.schema
        )


def _add_input_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("inputs")
    g.add_argument("--kb", required=True, help="labeled triples, 4-column TSV")
    g.add_argument("--taxonomy", required=True, help="child/parent edges, TSV")
    g.add_argument("--typemap", required=True, help="entity/type rows, TSV")
    g.add_argument("--schema", required=True, help="relation/domain/range rows, TSV")


def _add_train_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--dim", type=int, default=64)
    g.add_argument("--epochs", type=int, default=30)
    g.add_argument("--learning-rate", type=float, default=0.1)
    g.add_argument(
        "--no-adaptive",
        action="store_true",
        help="plain SGD steps instead of per-coordinate adaptive scaling",
    )
    g.add_argument("--negatives", type=int, default=2, help="corruptions per example")
    g.add_argument(
        "--typed-fraction",
        type=float,
        default=0.0,
        help="fraction of corruptions drawn from same-type entities",
    )
    g.add_argument("--l2", type=float, default=0.0)
    g.add_argument("--loss", choices=["binary", "multiclass"], default="binary")
    g.add_argument(
        "--corrupt-sources-only",
        action="store_true",
        help="never corrupt the target slot when sampling negatives",
    )


def _train_config(args: argparse.Namespace) -> TrainConfig:
    try:
        return TrainConfig(
            dim=args.dim,
            epochs=args.epochs,
            learning_rate=args.learning_rate,
            adaptive=not args.no_adaptive,
            n_negatives=args.negatives,
            same_type_fraction=args.typed_fraction,
            l2=args.l2,
            seed=args.seed,
            loss_mode=args.loss,
            corrupt_targets=not args.corrupt_sources_only,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_fixture(args: argparse.Namespace) -> int:
    paths = synth.write_fixture(args.out, seed=args.seed)
    for name in sorted(paths):
        print(f"{name}\t{paths[name]}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_args(args)
    kb, background = cfg.load()
    tc = _train_config(args)
    model = train(kb, background, tc)
    out = Path(args.model_out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    print(
        f"trained on {len(kb)} triples "
        f"(entities={len(kb.entities)}, relations={len(kb.relations)}, "
        f"dim={tc.dim}, epochs={tc.epochs}) -> {out}"
    )
    return 0


def cmd_expand(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_args(args)
    kb, background = cfg.load()
    derived = expand_taxonomy(kb, background.taxonomy)
    lines = []
    for d in derived:
        prov = ";".join(
            " ".join((t.source, t.relation, t.target)) for t in d.provenance
        )
        lines.append(
            "\t".join(
                (
                    d.triple.source,
                    d.triple.relation,
                    d.triple.target,
                    d.label.value,
                    d.rule.value,
                    prov,
                )
            )
        )
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        by_rule: dict[str, int] = {}
        for d in derived:
            by_rule[d.rule.value] = by_rule.get(d.rule.value, 0) + 1
        detail = ", ".join(f"{r}={n}" for r, n in sorted(by_rule.items()))
        print(f"derived {len(derived)} triples ({detail or 'none'}) -> {out}")
    else:
        for line in lines:
            print(line)
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model_path = Path(args.model)
    if not model_path.is_file():
        raise ConfigError(f"model not found: {model_path}")
    cfg = RunConfig.from_args(args)
    kb, background = cfg.load()
    model = EmbeddingModel.load(model_path)
    if args.entity is not None:
        candidates = entity_candidates(args.entity, kb, background)
    else:
        candidates = schema_consistent_candidates(kb, background)
    candidates = [
        t
        for t in candidates
        if model.has_entity(t.source) and model.has_entity(t.target)
    ]
    ranked = rank_candidates(model, candidates)
    # candidates were schema-checked already; the emission boundary
    # re-checks anyway so a bad filter upstream cannot leak through
    survivors, removed = filter_predictions(
        ranked, background.schema, background.typemap
    )
    if removed:
        print(f"warning: dropped {removed} schema-inconsistent rows", file=sys.stderr)
    if args.limit is not None:
        survivors = survivors[: args.limit]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source", "relation", "target", "score", "probability"])
        for st in survivors:
            writer.writerow(
                [
                    st.triple.source,
                    st.triple.relation,
                    st.triple.target,
                    repr(st.score),
                    repr(st.probability),
                ]
            )
    print(f"wrote {len(survivors)} predictions -> {out}")
    return 0


def _eval_labels(args: argparse.Namespace) -> list[int]:
    if args.labels is not None:
        path = _require_file(args.labels, "labels")
        labels = []
        for i, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            raw = raw.strip()
            if not raw:
                continue
            if raw not in ("0", "1"):
                raise ConfigError(f"labels line {i}: expected 0 or 1, got {raw!r}")
            labels.append(int(raw))
        return labels
    if args.stream == "bernoulli":
        arr = synth.bernoulli_stream(args.stream_seed, args.stream_length, args.stream_c)
    elif args.stream == "lowdisc":
        arr = synth.low_discrepancy_stream(
            args.stream_seed, args.stream_length, args.stream_c
        )
    else:
        raise ConfigError("provide --labels FILE or --stream {bernoulli,lowdisc}")
    return [int(v) for v in arr]


def cmd_eval(args: argparse.Namespace) -> int:
    labels = _eval_labels(args)
    if not labels:
        raise ConfigError("label stream is empty")
    try:
        params = EstimatorParams(Fraction(args.alpha), args.delta, args.ytilde)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc)) from exc
    m = len(labels)
    ranked = RankedPredictions.stream(m)
    oracle = AnnotationOracle.from_labels(labels)
    ell = params.ell
    if args.max_checkpoint is not None:
        k_max = args.max_checkpoint
    else:
        try:
            k_max = params.max_checkpoint(m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if k_max < ell:
        raise ConfigError(f"max checkpoint {k_max} precedes the anchor {ell}")
    if params.checkpoint_yield(k_max) > m:
        raise ConfigError(
            f"checkpoint {k_max} needs yield {params.checkpoint_yield(k_max)} "
            f"but the stream has {m} items"
        )
    prefix = [0]
    for v in labels:
        prefix.append(prefix[-1] + v)

    rows: list[BoundsRow] = []
    report_rows = []
    sandwich_ok = True
    ratio_ok = True
    for k in range(ell, k_max + 1):
        row = bound_estimators(ranked, oracle, params, k, include_exact=True)
        rows.append(row)
        exact = Fraction(prefix[row.yield_at_k], row.yield_at_k)
        if not row.lower_hat <= exact <= row.upper_hat:
            sandwich_ok = False
        verdict = ratio_check(row)
        if verdict is False:
            ratio_ok = False
        report_rows.append(
            {
                "k": k,
                "yield": row.yield_at_k,
                "lower": float(row.lower_hat),
                "upper": float(row.upper_hat),
                "exact": float(exact),
                "ratio": verdict,
            }
        )
    queries_used = oracle.query_count
    budget = params.checkpoint_yield(ell) + args.delta * (k_max - ell + 1)

    y_top = params.checkpoint_yield(k_max)
    y_dec = (y_top // args.delta) * args.delta
    decomposition = (
        decomposition_check(ranked, oracle, y_dec, args.delta) if y_dec >= args.delta else None
    )

    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_bounds_csv(rows, out_dir / "bounds.csv")
        ys = sorted({row.yield_at_k for row in rows})
        write_precision_curve(ranked, oracle, ys, out_dir / "curve.csv")

    report = {
        "length": m,
        "alpha": str(params.alpha),
        "delta": args.delta,
        "ytilde": args.ytilde,
        "anchor": ell,
        "max_checkpoint": k_max,
        "queries_used": queries_used,
        "query_budget": budget,
        "frugality_ok": queries_used <= budget,
        "sandwich_ok": sandwich_ok,
        "ratio_ok": ratio_ok,
        "decomposition_yield": y_dec if decomposition is not None else None,
        "decomposition_ok": decomposition,
        "checkpoints": report_rows,
    }
    print(json.dumps(report, indent=2))
    return 0


class InteractiveAnnotator:
    """Reads quantifier answers from stdin, one prompt per query.

    Verification trusts the answers given, so the episode report counts
    accepted facts rather than independently verified ones.
    """

    def __init__(self) -> None:
        self.queries = 0
        self._answers: dict[Triple, QuantLabel] = {}

    def label(self, triple: Triple) -> QuantLabel:
        self.queries += 1
        prompt = (
            f"is it true that all {triple.source} {triple.relation} "
            f"some {triple.target}? [all/some/none] "
        )
        while True:
            try:
                raw = input(prompt).strip().lower()
            except EOFError:
                raw = "none"
            try:
                lab = QuantLabel.parse(raw)
            except KBError:
                print("please answer all, some, or none", file=sys.stderr)
                continue
            self._answers[triple] = lab
            return lab

    def verify(self, triple: Triple) -> bool:
        return self._answers.get(triple, QuantLabel.NONE).is_positive()


def _annotator(args: argparse.Namespace) -> Annotator:
    if args.truth is not None:
        truth_kb = load_kb(_require_file(args.truth, "truth"))
        return SyntheticAnnotator(dict(truth_kb.triples))
    if args.interactive:
        return InteractiveAnnotator()
    raise ConfigError("provide --truth FILE or --interactive")


def cmd_active(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_args(args)
    kb, background = cfg.load()
    tc = _train_config(args)
    try:
        thresholds = SessionThresholds(args.kappa, args.tau_low, args.tau_high)
        weights = SelectionWeights(args.w_coverage, args.w_diversity, args.w_redundancy)
        episode = EpisodeConfig(
            proposal_mode=ProposalMode(args.mode),
            selection_mode=SelectionMode(args.selection),
            budget=args.budget,
            thresholds=thresholds,
            weights=weights,
            seed=args.seed,
            report_threshold=args.report_threshold,
            derived_weight=args.derived_weight,
            keep_threshold=args.keep_threshold,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    annotator = _annotator(args)
    try:
        report = run_episode(args.entity, kb, background, tc, episode, annotator)
    except ColdEntityError as exc:
        raise ConfigError(str(exc)) from exc
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(report.to_json_dict(), fh, indent=2)
            fh.write("\n")
    print(
        f"entity={report.entity} queries={len(report.selected)} "
        f"annotation={report.annotation_yield} sibling={report.sibling_yield} "
        f"factorization={report.factorization_yield} total={report.total_yield}"
    )
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ServiceState, create_app

    cfg = RunConfig.from_args(args)
    kb, background = cfg.load()
    tc = _train_config(args)
    try:
        episode = EpisodeConfig(
            proposal_mode=ProposalMode.SIBLING_GUIDED,
            selection_mode=SelectionMode(args.selection),
            budget=args.budget,
            seed=args.seed,
            report_threshold=args.report_threshold,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    state = ServiceState(
        kb=kb,
        background=background,
        train_config=tc,
        episode=episode,
        out_dir=Path(args.out_dir),
    )
    app = create_app(state)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="genkbc",
        description="knowledge-base completion over quantified triples",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixture", help="write the bundled synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("train", help="fit an embedding model")
    _add_input_args(p)
    _add_train_args(p)
    p.add_argument("--model-out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("expand", help="derive triples through the taxonomy")
    _add_input_args(p)
    p.add_argument("--out", help="derived-triples TSV (stdout when omitted)")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("predict", help="rank schema-consistent facts")
    _add_input_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="ranked CSV")
    p.add_argument("--entity", help="restrict to facts touching this entity")
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="windowed precision bounds over a ranked stream")
    p.add_argument("--labels", help="file with one 0/1 relevance label per line")
    p.add_argument("--stream", choices=["bernoulli", "lowdisc"])
    p.add_argument("--stream-seed", type=int, default=0)
    p.add_argument("--stream-length", type=int, default=65536)
    p.add_argument("--stream-c", type=float, default=4096.0)
    p.add_argument("--alpha", default="2", help="checkpoint ratio, e.g. 2 or 3/2")
    p.add_argument("--delta", type=int, default=64, help="annotation window size")
    p.add_argument("--ytilde", type=int, default=256, help="anchor yield bound")
    p.add_argument("--max-checkpoint", type=int)
    p.add_argument("--out-dir", help="where bounds.csv and curve.csv go")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("active", help="run one annotation episode")
    _add_input_args(p)
    _add_train_args(p)
    p.add_argument("--entity", required=True, help="the entity to extend")
    p.add_argument(
        "--mode", choices=[m.value for m in ProposalMode], default="sibling"
    )
    p.add_argument(
        "--selection", choices=[m.value for m in SelectionMode], default="sm"
    )
    p.add_argument("--budget", type=int, default=6)
    p.add_argument("--kappa", type=float, default=0.9)
    p.add_argument("--tau-low", type=float, default=0.2)
    p.add_argument("--tau-high", type=float, default=0.8)
    p.add_argument("--w-coverage", type=float, default=1.0)
    p.add_argument("--w-diversity", type=float, default=1.0)
    p.add_argument("--w-redundancy", type=float, default=0.1)
    p.add_argument("--report-threshold", type=float, default=0.5)
    p.add_argument("--derived-weight", type=float, default=0.5)
    p.add_argument("--keep-threshold", type=float, default=0.5)
    p.add_argument("--truth", help="ground-truth TSV for synthetic annotation")
    p.add_argument(
        "--interactive", action="store_true", help="prompt for answers on stdin"
    )
    p.add_argument("--out", help="episode report JSON")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_active)

    p = sub.add_parser("serve", help="start the annotation session service")
    _add_input_args(p)
    _add_train_args(p)
    p.add_argument("--out-dir", required=True, help="session persistence directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument(
        "--selection", choices=[m.value for m in SelectionMode], default="sm"
    )
    p.add_argument("--budget", type=int, default=6)
    p.add_argument("--report-threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KBError, ActiveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
