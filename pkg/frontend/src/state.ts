/** Session view model: all console state, no DOM.
 *
 * The store holds exactly what the service last said plus two kinds of
 * transient overlay: optimistic in-flight answers (reconciled against
 * the annotation response) and the banner/retry bookkeeping for failed
 * calls. `hydrate` rebuilds everything from GETs alone, which is what
 * keeps a reloaded tab consistent with the one that did the work.
 */

import {
  AcceptedItem,
  ApiError,
  ConsoleApi,
  InferredFact,
  Label,
  SessionStatus,
  SessionView,
  YieldCounts,
} from "./api.js";

export type Phase = "idle" | "loading" | SessionStatus;

export interface Banner {
  kind: "error" | "info";
  text: string;
  canRetry: boolean;
  suggestion: string | null;
}

export interface CardVM {
  factId: string;
  question: string;
  source: string;
  relation: string;
  target: string;
  p: number;
  /** last answer the service confirmed */
  answer: Label | null;
  /** optimistic answer awaiting confirmation */
  inFlight: Label | null;
}

export interface RefitGate {
  enabled: boolean;
  tooltip: string | null;
}

export type InferredOrder = "service" | "prob-desc" | "prob-asc";

export interface Snapshot {
  phase: Phase;
  sessionId: string | null;
  entity: string | null;
  mode: string | null;
  selection: string | null;
  modelRef: string | null;
  banner: Banner | null;
  cards: CardVM[];
  autoAccepted: AcceptedItem[];
  progress: { answered: number; total: number };
  refit: RefitGate;
  refitError: string | null;
  counts: YieldCounts | null;
  inferred: InferredFact[] | null;
  inferredOrder: InferredOrder;
}

export interface StoreOptions {
  /** ms between status polls while a refit runs */
  pollIntervalMs?: number;
  /** injectable for tests; defaults to setTimeout */
  sleep?: (ms: number) => Promise<void>;
  /** cap on status polls per refit before giving up */
  maxPolls?: number;
}

const defaultSleep = (ms: number) =>
  new Promise<void>((resolve) => setTimeout(resolve, ms));

export class ConsoleStore {
  private phase: Phase = "idle";
  private sessionId: string | null = null;
  private entity: string | null = null;
  private mode: string | null = null;
  private selection: string | null = null;
  private modelRef: string | null = null;
  private banner: Banner | null = null;
  private cards: CardVM[] = [];
  private autoAccepted: AcceptedItem[] = [];
  private pending = 0;
  private refitDeniedPending: number | null = null;
  private refitError: string | null = null;
  private counts: YieldCounts | null = null;
  private inferred: InferredFact[] | null = null;
  private inferredOrder: InferredOrder = "service";
  private retryAction: (() => Promise<void>) | null = null;

  private readonly listeners = new Set<() => void>();
  private readonly pollIntervalMs: number;
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly maxPolls: number;

  constructor(
    private readonly api: ConsoleApi,
    options: StoreOptions = {},
  ) {
    this.pollIntervalMs = options.pollIntervalMs ?? 400;
    this.sleep = options.sleep ?? defaultSleep;
    this.maxPolls = options.maxPolls ?? 600;
  }

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  snapshot(): Snapshot {
    return {
      phase: this.phase,
      sessionId: this.sessionId,
      entity: this.entity,
      mode: this.mode,
      selection: this.selection,
      modelRef: this.modelRef,
      banner: this.banner,
      cards: this.cards.map((c) => ({ ...c })),
      autoAccepted: this.autoAccepted.map((a) => ({ ...a })),
      progress: {
        answered: this.cards.length - this.pending,
        total: this.cards.length,
      },
      refit: this.refitGate(),
      refitError: this.refitError,
      counts: this.counts ? { ...this.counts } : null,
      inferred: this.inferred ? this.orderedInferred() : null,
      inferredOrder: this.inferredOrder,
    };
  }

  /** What the annotator sees, minus transient overlays; two tabs on the
   * same session must agree on this after a refresh. */
  displayState(): unknown {
    return {
      phase: this.phase,
      sessionId: this.sessionId,
      entity: this.entity,
      mode: this.mode,
      selection: this.selection,
      modelRef: this.modelRef,
      cards: this.cards.map((c) => ({
        factId: c.factId,
        question: c.question,
        source: c.source,
        relation: c.relation,
        target: c.target,
        p: c.p,
        answer: c.answer,
      })),
      autoAccepted: this.autoAccepted,
      progress: this.snapshot().progress,
      counts: this.counts,
      inferred: this.inferred,
    };
  }

  private refitGate(): RefitGate {
    if (this.phase === "refitting") {
      return { enabled: false, tooltip: "refit in progress" };
    }
    if (this.phase === "done") {
      return { enabled: false, tooltip: "session complete" };
    }
    if (this.phase !== "awaiting-annotation") {
      return { enabled: false, tooltip: null };
    }
    const pending = this.refitDeniedPending ?? this.pending;
    if (pending > 0) {
      const noun = pending === 1 ? "question" : "questions";
      return {
        enabled: false,
        tooltip: `${pending} ${noun} still unanswered`,
      };
    }
    return { enabled: true, tooltip: null };
  }

  private applySession(view: SessionView): void {
    this.sessionId = view.id;
    this.phase = view.status;
    this.entity = view.session.entity;
    this.mode = view.session.mode;
    this.selection = view.session.selection;
    this.modelRef = view.session.model_ref;
    this.pending = view.pending;
    this.refitError = view.error;
    this.autoAccepted = view.auto_accepted;
    // the service's question order is the display order
    this.cards = view.questions.map((q) => ({
      factId: q.fact_id,
      question: q.question,
      source: q.source,
      relation: q.relation,
      target: q.target,
      p: q.p,
      answer: q.answer,
      inFlight: null,
    }));
    if (view.pending === 0) this.refitDeniedPending = null;
  }

  private fail(err: unknown, retry: (() => Promise<void>) | null): void {
    const detail =
      err instanceof ApiError
        ? err.message
        : err instanceof Error
          ? err.message
          : String(err);
    const wantedSiblings = this.mode === "sibling" || this.mode == null;
    const coldish =
      err instanceof ApiError &&
      err.status === 400 &&
      /sibling|cold/i.test(detail);
    this.banner = {
      kind: "error",
      text: detail,
      canRetry: retry !== null,
      suggestion:
        coldish && wantedSiblings
          ? "try the schema-consistent proposal mode instead"
          : null,
    };
    this.retryAction = retry;
    this.notify();
  }

  async retry(): Promise<void> {
    const action = this.retryAction;
    if (!action) return;
    this.banner = null;
    this.retryAction = null;
    this.notify();
    await action();
  }

  dismissBanner(): void {
    this.banner = null;
    this.retryAction = null;
    this.notify();
  }

  async start(
    entity: string,
    opts: { mode?: string; selection?: string; budget?: number } = {},
  ): Promise<void> {
    this.phase = "loading";
    this.banner = null;
    this.mode = opts.mode ?? null;
    this.counts = null;
    this.inferred = null;
    this.notify();
    try {
      const view = await this.api.createSession({ entity, ...opts });
      this.applySession(view);
      this.notify();
    } catch (err) {
      this.phase = "idle";
      this.fail(err, () => this.start(entity, opts));
    }
  }

  /** Rebuild the whole view from service GETs (page reload, second tab). */
  async hydrate(sessionId: string): Promise<void> {
    this.phase = "loading";
    this.banner = null;
    this.notify();
    try {
      const view = await this.api.getSession(sessionId);
      this.applySession(view);
      if (view.status === "done") {
        const inf = await this.api.getInferred(sessionId);
        this.counts = inf.counts;
        this.inferred = inf.facts;
        this.modelRef = inf.model_ref;
      }
      this.notify();
    } catch (err) {
      this.phase = "idle";
      this.fail(err, () => this.hydrate(sessionId));
    }
  }

  async answer(factId: string, label: Label): Promise<void> {
    const sid = this.sessionId;
    const card = this.cards.find((c) => c.factId === factId);
    if (!sid || !card) return;
    card.inFlight = label;
    this.notify();
    try {
      const view = await this.api.submitAnnotations(sid, { [factId]: label });
      this.applySession(view);
      this.notify();
    } catch (err) {
      card.inFlight = null;
      this.fail(err, () => this.answer(factId, label));
    }
  }

  /** Kick off the refit and poll until the service settles.  A 409 is
   * not an exception path for the UI: its pending count becomes the
   * disabled-button tooltip. */
  async refit(): Promise<void> {
    const sid = this.sessionId;
    if (!sid) return;
    try {
      await this.api.startRefit(sid);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        if (typeof err.payload.pending === "number" && err.payload.pending > 0) {
          this.refitDeniedPending = err.payload.pending;
          this.notify();
          return;
        }
        // already refitting or already done: fall through to polling,
        // the session view tells us which
      } else {
        this.fail(err, () => this.refit());
        return;
      }
    }
    this.phase = "refitting";
    this.refitDeniedPending = null;
    this.notify();
    await this.pollUntilSettled(sid);
  }

  private async pollUntilSettled(sid: string): Promise<void> {
    for (let i = 0; i < this.maxPolls; i++) {
      await this.sleep(this.pollIntervalMs);
      let view: SessionView;
      try {
        view = await this.api.getSession(sid);
      } catch (err) {
        this.fail(err, () => this.pollUntilSettled(sid));
        return;
      }
      this.applySession(view);
      if (view.status === "done") {
        this.notify();
        await this.loadInferred();
        return;
      }
      if (view.error) {
        // refit crashed server-side; show it and stop polling
        this.banner = {
          kind: "error",
          text: `refit failed: ${view.error}`,
          canRetry: true,
          suggestion: null,
        };
        this.retryAction = () => this.pollUntilSettled(sid);
        this.notify();
        return;
      }
      this.notify();
    }
    this.fail(
      new ApiError(0, { detail: "refit did not finish in time" }),
      () => this.pollUntilSettled(sid),
    );
  }

  async loadInferred(): Promise<void> {
    const sid = this.sessionId;
    if (!sid) return;
    try {
      const inf = await this.api.getInferred(sid);
      this.counts = inf.counts;
      this.inferred = inf.facts;
      this.modelRef = inf.model_ref;
      this.notify();
    } catch (err) {
      this.fail(err, () => this.loadInferred());
    }
  }

  /** service order -> probability desc -> probability asc -> service */
  cycleInferredOrder(): void {
    const next: Record<InferredOrder, InferredOrder> = {
      service: "prob-desc",
      "prob-desc": "prob-asc",
      "prob-asc": "service",
    };
    this.inferredOrder = next[this.inferredOrder];
    this.notify();
  }

  private orderedInferred(): InferredFact[] {
    const rows = (this.inferred ?? []).map((f) => ({ ...f }));
    if (this.inferredOrder === "prob-desc") {
      rows.sort((a, b) => b.probability - a.probability);
    } else if (this.inferredOrder === "prob-asc") {
      rows.sort((a, b) => a.probability - b.probability);
    }
    return rows;
  }

  /** First card with no confirmed or in-flight answer; shortcut target. */
  nextUnanswered(): CardVM | null {
    return this.cards.find((c) => c.answer === null && c.inFlight === null) ?? null;
  }
}
