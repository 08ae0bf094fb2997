/** Typed client for the annotation session HTTP API.
 *
 * Every shape here mirrors a JSON body the service emits; the console
 * displays nothing that did not arrive through one of these calls.
 */

export type Label = "all" | "some" | "none";

export type SessionStatus =
  | "proposing"
  | "awaiting-annotation"
  | "refitting"
  | "done";

export type Provenance = "annotation" | "sibling-agreement" | "factorization";

export interface SessionSummary {
  id: string;
  entity: string;
  status: SessionStatus;
  updated: string;
  pending: number;
}

export interface QuestionItem {
  fact_id: string;
  question: string;
  options: Label[];
  source: string;
  relation: string;
  target: string;
  p: number;
  answer: Label | null;
}

export interface AcceptedItem {
  fact_id: string;
  source: string;
  relation: string;
  target: string;
  p: number;
}

export interface SessionDetail {
  entity: string;
  mode: string;
  selection: string;
  thresholds: { kappa_m: number; tau_low: number; tau_high: number };
  budget: number;
  selected: string[];
  annotations: Record<string, Label>;
  model_ref: string;
}

export interface YieldCounts {
  annotation: number;
  sibling: number;
  factorization: number;
  total: number;
}

export interface InferredFact {
  source: string;
  relation: string;
  target: string;
  label: Label | null;
  probability: number;
  provenance: Provenance;
}

export interface SessionView {
  id: string;
  status: SessionStatus;
  created: string;
  updated: string;
  error: string | null;
  session: SessionDetail;
  questions: QuestionItem[];
  auto_accepted: AcceptedItem[];
  pending: number;
}

export interface InferredView {
  id: string;
  entity: string;
  model_ref: string;
  counts: YieldCounts;
  facts: InferredFact[];
}

export interface RefitAck {
  id: string;
  status: string;
}

export interface ErrorPayload {
  detail?: string;
  pending?: number;
  status?: string;
  [key: string]: unknown;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly payload: ErrorPayload,
  ) {
    super(payload.detail ?? `request failed with HTTP ${status}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export interface CreateSessionBody {
  entity: string;
  mode?: string;
  selection?: string;
  budget?: number;
}

export class ConsoleApi {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly baseUrl: string = "",
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private async request<T>(
    path: string,
    init: { method?: string; body?: unknown } = {},
  ): Promise<T> {
    const opts: RequestInit = { method: init.method ?? "GET" };
    if (init.body !== undefined) {
      opts.body = JSON.stringify(init.body);
      opts.headers = { "content-type": "application/json" };
    }
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + path, opts);
    } catch (err) {
      throw new ApiError(0, {
        detail: `service unreachable: ${err instanceof Error ? err.message : String(err)}`,
      });
    }
    const text = await resp.text();
    let body: unknown = null;
    if (text.length > 0) {
      try {
        body = JSON.parse(text);
      } catch {
        body = { detail: text };
      }
    }
    if (!resp.ok) {
      const payload =
        body !== null && typeof body === "object"
          ? (body as ErrorPayload)
          : { detail: String(body) };
      throw new ApiError(resp.status, payload);
    }
    return body as T;
  }

  listSessions(): Promise<SessionSummary[]> {
    return this.request<SessionSummary[]>("/sessions");
  }

  createSession(body: CreateSessionBody): Promise<SessionView> {
    return this.request<SessionView>("/sessions", { method: "POST", body });
  }

  getSession(id: string): Promise<SessionView> {
    return this.request<SessionView>(`/sessions/${id}`);
  }

  /** Idempotent per fact id; re-posting overwrites the previous answer. */
  submitAnnotations(
    id: string,
    answers: Record<string, Label>,
  ): Promise<SessionView> {
    return this.request<SessionView>(`/sessions/${id}/annotations`, {
      method: "POST",
      body: answers,
    });
  }

  startRefit(id: string): Promise<RefitAck> {
    return this.request<RefitAck>(`/sessions/${id}/refit`, { method: "POST" });
  }

  getInferred(id: string): Promise<InferredView> {
    return this.request<InferredView>(`/sessions/${id}/inferred`);
  }
}
