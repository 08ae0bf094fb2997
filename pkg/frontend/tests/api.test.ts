import { describe, expect, it } from "vitest";

import { ApiError, ConsoleApi, FetchLike } from "../src/api.js";

interface Recorded {
  input: string;
  init: RequestInit | undefined;
}

function recordingFetch(
  responder: (input: string, init?: RequestInit) => Response,
): { calls: Recorded[]; fetch: FetchLike } {
  const calls: Recorded[] = [];
  return {
    calls,
    fetch: async (input, init) => {
      calls.push({ input, init });
      return responder(input, init);
    },
  };
}

const ok = (body: unknown) =>
  new Response(JSON.stringify(body), {
    status: 200,
    headers: { "content-type": "application/json" },
  });

describe("request shaping", () => {
  it("joins the base url and the route path", async () => {
    const { calls, fetch } = recordingFetch(() => ok([]));
    const api = new ConsoleApi("http://service:9", fetch);
    await api.listSessions();
    await api.getSession("abc");
    await api.getInferred("abc");
    expect(calls.map((c) => c.input)).toEqual([
      "http://service:9/sessions",
      "http://service:9/sessions/abc",
      "http://service:9/sessions/abc/inferred",
    ]);
  });

  it("sets a json content type only when there is a body", async () => {
    const { calls, fetch } = recordingFetch(() => ok({}));
    const api = new ConsoleApi("", fetch);
    await api.listSessions();
    await api.submitAnnotations("abc", { "q-01": "all" });
    await api.startRefit("abc");

    expect(calls[0]!.init?.headers).toBeUndefined();
    expect(calls[0]!.init?.body).toBeUndefined();

    expect(calls[1]!.init?.headers).toEqual({
      "content-type": "application/json",
    });
    expect(JSON.parse(String(calls[1]!.init?.body))).toEqual({ "q-01": "all" });

    // the refit trigger posts with no body at all
    expect(calls[2]!.init?.method).toBe("POST");
    expect(calls[2]!.init?.body).toBeUndefined();
  });
});

describe("error handling", () => {
  it("propagates structured error payloads", async () => {
    const { fetch } = recordingFetch(
      () =>
        new Response(
          JSON.stringify({
            detail: "2 selected queries still await annotation",
            pending: 2,
            status: "awaiting-annotation",
          }),
          { status: 409 },
        ),
    );
    const api = new ConsoleApi("", fetch);
    const err: unknown = await api.startRefit("abc").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    const apiErr = err as ApiError;
    expect(apiErr.status).toBe(409);
    expect(apiErr.payload.pending).toBe(2);
    expect(apiErr.payload.status).toBe("awaiting-annotation");
    expect(apiErr.message).toBe("2 selected queries still await annotation");
  });

  it("wraps a non-json error body as the detail", async () => {
    const { fetch } = recordingFetch(
      () => new Response("proxy exploded", { status: 502 }),
    );
    const api = new ConsoleApi("", fetch);
    const err = (await api.listSessions().catch((e: unknown) => e)) as ApiError;
    expect(err.status).toBe(502);
    expect(err.payload).toEqual({ detail: "proxy exploded" });
  });

  it("turns a network failure into a status-0 error", async () => {
    const api = new ConsoleApi("", () =>
      Promise.reject(new TypeError("fetch failed")),
    );
    const err = (await api.listSessions().catch((e: unknown) => e)) as ApiError;
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(0);
    expect(err.message).toMatch(/service unreachable/);
    expect(err.message).toMatch(/fetch failed/);
  });

  it("tolerates an empty response body", async () => {
    const { fetch } = recordingFetch(() => new Response(null, { status: 204 }));
    const api = new ConsoleApi("", fetch);
    await expect(api.startRefit("abc")).resolves.toBeNull();
  });
});
