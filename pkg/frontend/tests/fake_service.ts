/** In-memory stand-in for the annotation service.
 *
 * Implements the same routes and JSON shapes as the real thing behind a
 * FetchLike, so `ConsoleApi` runs against it unmodified.  Refits settle
 * after a configurable number of status polls instead of a background
 * thread, which keeps the unit tests synchronous-ish and deterministic.
 */

import {
  InferredFact,
  Label,
  QuestionItem,
  SessionStatus,
  YieldCounts,
} from "../src/api.js";

interface FakeSession {
  id: string;
  entity: string;
  mode: string;
  selection: string;
  budget: number;
  status: SessionStatus;
  created: string;
  updated: string;
  error: string | null;
  questions: QuestionItem[];
  annotations: Record<string, Label>;
  pollsUntilDone: number;
  result: {
    model_ref: string;
    counts: YieldCounts;
    inferred: InferredFact[];
  } | null;
}

const VALID_LABELS = new Set(["all", "some", "none"]);

/** Deliberately non-lexicographic: the console must preserve this order. */
export const QUESTION_ORDER = ["q-03", "q-01", "q-02"] as const;

function makeQuestions(entity: string): QuestionItem[] {
  const rows: Array<[string, string, string, number]> = [
    ["q-03", "migrate-to", "wetland", 0.5],
    ["q-01", "eat", "insect", 0.4],
    ["q-02", "nest-in", "reed", 0.6],
  ];
  return rows.map(([fact_id, relation, target, p]) => ({
    fact_id,
    question: `is it true that all ${entity} ${relation} some ${target}?`,
    options: ["all", "some", "none"] as Label[],
    source: entity,
    relation,
    target,
    p,
    answer: null,
  }));
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export class FakeService {
  sessions = new Map<string, FakeSession>();
  nextId = 1;
  /** status polls a refit takes before flipping to done */
  refitPolls = 2;
  /** when set, the refit settles into an error instead of done */
  refitError: string | null = null;
  /** when set, the next annotation POST fails once with this status */
  failNextAnnotation: number | null = null;
  coldEntities = new Set<string>(["coldling"]);
  requests: string[] = [];

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const url = new URL(input, "http://fake");
    const method = (init?.method ?? "GET").toUpperCase();
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    this.requests.push(`${method} ${url.pathname}`);
    const parts = url.pathname.split("/").filter(Boolean);

    if (parts[0] !== "sessions") return json(404, { detail: "not found" });

    if (parts.length === 1) {
      if (method === "GET") return this.listSessions();
      if (method === "POST") return this.createSession(body);
    }
    const sess = this.sessions.get(parts[1] ?? "");
    if (!sess) return json(404, { detail: `no such session: ${parts[1]}` });
    if (parts.length === 2 && method === "GET") return this.getSession(sess);
    if (parts[2] === "annotations" && method === "POST") {
      return this.annotate(sess, body);
    }
    if (parts[2] === "refit" && method === "POST") return this.refit(sess);
    if (parts[2] === "inferred" && method === "GET") {
      return this.inferred(sess);
    }
    return json(404, { detail: "not found" });
  };

  private publicDict(sess: FakeSession): unknown {
    const pending = sess.questions.filter(
      (q) => !(q.fact_id in sess.annotations),
    ).length;
    return {
      id: sess.id,
      status: sess.status,
      created: sess.created,
      updated: sess.updated,
      error: sess.error,
      session: {
        entity: sess.entity,
        mode: sess.mode,
        selection: sess.selection,
        thresholds: { kappa_m: 0.9, tau_low: 0.2, tau_high: 0.8 },
        budget: sess.budget,
        selected: sess.questions.map((q) => q.fact_id),
        annotations: { ...sess.annotations },
        model_ref: "fit-0",
      },
      questions: sess.questions.map((q) => ({
        ...q,
        answer: sess.annotations[q.fact_id] ?? null,
      })),
      auto_accepted: [
        {
          fact_id: "m-01",
          source: sess.entity,
          relation: "live-in",
          target: "marsh",
          p: 0.95,
        },
      ],
      pending,
    };
  }

  private listSessions(): Response {
    return json(
      200,
      [...this.sessions.values()].map((s) => ({
        id: s.id,
        entity: s.entity,
        status: s.status,
        updated: s.updated,
        pending: s.questions.filter((q) => !(q.fact_id in s.annotations))
          .length,
      })),
    );
  }

  private createSession(body: {
    entity?: string;
    mode?: string;
    selection?: string;
    budget?: number;
  }): Response {
    const entity = body?.entity ?? "";
    if (!entity) return json(400, { detail: "entity must be a non-empty string" });
    if (this.coldEntities.has(entity)) {
      return json(400, {
        detail: `no labeled sibling facts for ${entity}`,
      });
    }
    if (body.budget !== undefined && body.budget < 1) {
      return json(400, { detail: "budget must be a positive integer" });
    }
    const sess: FakeSession = {
      id: `fake-${this.nextId++}`,
      entity,
      mode: body.mode ?? "sibling",
      selection: body.selection ?? "sm",
      budget: body.budget ?? 6,
      status: "awaiting-annotation",
      created: new Date().toISOString(),
      updated: new Date().toISOString(),
      error: null,
      questions: makeQuestions(entity),
      annotations: {},
      pollsUntilDone: this.refitPolls,
      result: null,
    };
    this.sessions.set(sess.id, sess);
    return json(201, this.publicDict(sess));
  }

  private getSession(sess: FakeSession): Response {
    if (sess.status === "refitting" && sess.error === null) {
      sess.pollsUntilDone -= 1;
      if (sess.pollsUntilDone <= 0) {
        if (this.refitError !== null) {
          // mirrors the real service: a crashed refit keeps the
          // refitting status and surfaces the error on the record
          sess.error = this.refitError;
        } else {
          this.completeRefit(sess);
        }
      }
    }
    return json(200, this.publicDict(sess));
  }

  private annotate(sess: FakeSession, body: unknown): Response {
    if (this.failNextAnnotation !== null) {
      const status = this.failNextAnnotation;
      this.failNextAnnotation = null;
      return json(status, { detail: "annotation write failed" });
    }
    if (sess.status !== "awaiting-annotation") {
      return json(409, {
        detail: `session is ${sess.status}, not awaiting-annotation`,
        status: sess.status,
      });
    }
    const answers = body as Record<string, string>;
    if (!answers || Object.keys(answers).length === 0) {
      return json(400, { detail: "expected a non-empty fact-id to label map" });
    }
    const known = new Set(sess.questions.map((q) => q.fact_id));
    for (const [fid, label] of Object.entries(answers)) {
      if (!known.has(fid)) return json(400, { detail: `unknown fact id: ${fid}` });
      if (!VALID_LABELS.has(label)) {
        return json(400, { detail: `invalid label ${label}` });
      }
    }
    for (const [fid, label] of Object.entries(answers)) {
      sess.annotations[fid] = label as Label;
    }
    sess.updated = new Date().toISOString();
    return json(200, this.publicDict(sess));
  }

  private refit(sess: FakeSession): Response {
    if (sess.status === "refitting") {
      return json(409, { detail: "refit already running", pending: 0 });
    }
    if (sess.status === "done") {
      return json(409, { detail: "session already refitted", pending: 0 });
    }
    const pending = sess.questions.filter(
      (q) => !(q.fact_id in sess.annotations),
    ).length;
    if (pending > 0) {
      return json(409, {
        detail: `${pending} selected queries still await annotation`,
        pending,
        status: sess.status,
      });
    }
    sess.status = "refitting";
    sess.pollsUntilDone = this.refitPolls;
    return json(202, { id: sess.id, status: sess.status });
  }

  private completeRefit(sess: FakeSession): void {
    const positives = sess.questions.filter((q) => {
      const label = sess.annotations[q.fact_id];
      return label === "all" || label === "some";
    });
    const inferred: InferredFact[] = positives.map((q) => ({
      source: q.source,
      relation: q.relation,
      target: q.target,
      label: sess.annotations[q.fact_id] ?? null,
      probability: 0.9,
      provenance: "annotation",
    }));
    inferred.push({
      source: sess.entity,
      relation: "live-in",
      target: "marsh",
      label: "some",
      probability: 0.88,
      provenance: "sibling-agreement",
    });
    inferred.push({
      source: sess.entity,
      relation: "drink",
      target: "water",
      label: null,
      probability: 0.81,
      provenance: "factorization",
    });
    inferred.push({
      source: sess.entity,
      relation: "visit",
      target: "shore",
      label: null,
      probability: 0.93,
      provenance: "factorization",
    });
    sess.result = {
      model_ref: "fit-1",
      counts: {
        annotation: positives.length,
        sibling: 1,
        factorization: 2,
        total: positives.length + 3,
      },
      inferred,
    };
    sess.status = "done";
    sess.error = null;
  }

  private inferred(sess: FakeSession): Response {
    if (sess.status !== "done" || !sess.result) {
      return json(409, {
        detail: `session is ${sess.status}; inferred facts appear once done`,
        status: sess.status,
      });
    }
    return json(200, {
      id: sess.id,
      entity: sess.entity,
      model_ref: sess.result.model_ref,
      counts: sess.result.counts,
      facts: sess.result.inferred,
    });
  }
}
