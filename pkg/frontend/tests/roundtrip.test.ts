/** End-to-end console flow against the real annotation service.
 *
 * Spawns the bundled fixture world behind the actual HTTP server, then
 * drives the same store the page uses: start, premature refit, answer
 * everything, refit, read the inferred table, and finally prove that a
 * second client rebuilds identical display state from GETs alone.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ConsoleApi, Label } from "../src/api.js";
import { ConsoleStore } from "../src/state.js";

const repoRoot = fileURLToPath(new URL("../..", import.meta.url));
const fixtures = join(repoRoot, "src", "genkbc", "fixtures");

const entity = readFileSync(join(fixtures, "entity.txt"), "utf8").trim();

const truth = new Map<string, Label>();
for (const line of readFileSync(join(fixtures, "truth.tsv"), "utf8").split(
  "\n",
)) {
  if (!line.trim()) continue;
  const [s, r, t, label] = line.split("\t");
  truth.set(`${s}\t${r}\t${t}`, label as Label);
}

function truthLabel(card: {
  source: string;
  relation: string;
  target: string;
}): Label {
  return truth.get(`${card.source}\t${card.relation}\t${card.target}`) ?? "none";
}

let child: ChildProcess | null = null;
let childExit: Promise<unknown> | null = null;
let serverLog = "";
let base = "";
let outDir = "";

beforeAll(async () => {
  outDir = mkdtempSync(join(tmpdir(), "genkbc-console-"));
  const port = 20000 + Math.floor(Math.random() * 20000);
  base = `http://127.0.0.1:${port}`;
  child = spawn(
    "python3",
    [
      "-m",
      "genkbc.cli",
      "serve",
      "--kb", join(fixtures, "kb.tsv"),
      "--taxonomy", join(fixtures, "taxonomy.tsv"),
      "--typemap", join(fixtures, "typemap.tsv"),
      "--schema", join(fixtures, "schema.tsv"),
      "--dim", "8",
      "--epochs", "3",
      "--negatives", "1",
      "--out-dir", outDir,
      "--host", "127.0.0.1",
      "--port", String(port),
      "--budget", "4",
      "--report-threshold", "0.7",
      "--seed", "0",
    ],
    { cwd: repoRoot, stdio: ["ignore", "pipe", "pipe"] },
  );
  child.stdout!.on("data", (chunk: Buffer) => (serverLog += chunk));
  child.stderr!.on("data", (chunk: Buffer) => (serverLog += chunk));
  let exited = false;
  childExit = new Promise((resolve) =>
    child!.on("exit", (code) => {
      exited = true;
      resolve(code);
    }),
  );

  // initial model fit happens before the port opens; wait it out
  for (let i = 0; i < 120; i++) {
    if (exited) throw new Error(`service exited during startup:\n${serverLog}`);
    try {
      const resp = await fetch(`${base}/sessions`);
      if (resp.ok) return;
    } catch {
      // not listening yet
    }
    await new Promise((resolve) => setTimeout(resolve, 500));
  }
  throw new Error(`service never became ready:\n${serverLog}`);
}, 90_000);

afterAll(async () => {
  if (child && child.exitCode === null) {
    child.kill("SIGTERM");
    const hardStop = setTimeout(() => child!.kill("SIGKILL"), 5_000);
    await childExit;
    clearTimeout(hardStop);
  }
  rmSync(outDir, { recursive: true, force: true });
});

describe("console round trip", () => {
  let store: ConsoleStore;
  let sid: string;

  it("starts a session for the fixture entity", async () => {
    store = new ConsoleStore(new ConsoleApi(base), {
      pollIntervalMs: 500,
      maxPolls: 120,
    });
    await store.start(entity, { mode: "sibling", selection: "sm" });

    const snap = store.snapshot();
    expect(snap.banner).toBeNull();
    expect(snap.phase).toBe("awaiting-annotation");
    expect(snap.entity).toBe(entity);
    expect(snap.sessionId).not.toBeNull();
    sid = snap.sessionId!;

    expect(snap.cards.length).toBeGreaterThanOrEqual(1);
    expect(snap.cards.length).toBeLessThanOrEqual(4);
    for (const card of snap.cards) {
      expect(card.question).toContain(card.source);
      expect(card.question).toContain(card.target);
      expect(card.p).toBeGreaterThanOrEqual(0);
      expect(card.p).toBeLessThanOrEqual(1);
      expect(card.answer).toBeNull();
    }
    expect(snap.progress.answered).toBe(0);
  });

  it("denies a premature refit and mirrors the pending count", async () => {
    await store.refit();
    const snap = store.snapshot();
    expect(snap.phase).toBe("awaiting-annotation");
    expect(snap.refit.enabled).toBe(false);
    const total = snap.progress.total;
    expect(snap.refit.tooltip).toBe(
      `${total} question${total === 1 ? "" : "s"} still unanswered`,
    );
  });

  it("accepts an overwrite and then every remaining answer", async () => {
    const first = store.snapshot().cards[0]!;
    const right = truthLabel(first);
    const wrong: Label = right === "none" ? "all" : "none";

    await store.answer(first.factId, wrong);
    expect(
      store.snapshot().cards.find((c) => c.factId === first.factId)!.answer,
    ).toBe(wrong);

    await store.answer(first.factId, right);
    expect(
      store.snapshot().cards.find((c) => c.factId === first.factId)!.answer,
    ).toBe(right);

    for (const card of store.snapshot().cards) {
      if (card.answer === null) {
        await store.answer(card.factId, truthLabel(card));
      }
    }
    const snap = store.snapshot();
    expect(snap.banner).toBeNull();
    expect(snap.progress.answered).toBe(snap.progress.total);
    expect(snap.refit).toEqual({ enabled: true, tooltip: null });
  });

  it("refits and reports inferred facts with provenance", async () => {
    await store.refit();

    const snap = store.snapshot();
    expect(snap.banner).toBeNull();
    expect(snap.phase).toBe("done");
    expect(snap.modelRef).toBe("fit-1");
    expect(snap.refit).toEqual({ enabled: false, tooltip: "session complete" });

    expect(snap.counts).not.toBeNull();
    expect(snap.inferred).not.toBeNull();
    expect(snap.inferred!).toHaveLength(snap.counts!.total);
    expect(snap.counts!.total).toBe(
      snap.counts!.annotation + snap.counts!.sibling + snap.counts!.factorization,
    );

    const allowed = new Set(["annotation", "sibling-agreement", "factorization"]);
    for (const fact of snap.inferred!) {
      expect(allowed.has(fact.provenance)).toBe(true);
      expect(fact.probability).toBeGreaterThanOrEqual(0);
      expect(fact.probability).toBeLessThanOrEqual(1);
      if (fact.provenance === "annotation") {
        expect(["all", "some"]).toContain(fact.label);
      }
    }
  });

  it("a fresh client rebuilds identical display state from GETs", async () => {
    const second = new ConsoleStore(new ConsoleApi(base), {
      pollIntervalMs: 500,
      maxPolls: 120,
    });
    await second.hydrate(sid);
    expect(second.snapshot().phase).toBe("done");
    expect(second.displayState()).toEqual(store.displayState());

    const listed = await new ConsoleApi(base).listSessions();
    const mine = listed.find((s) => s.id === sid);
    expect(mine).toBeDefined();
    expect(mine!.status).toBe("done");
    expect(mine!.pending).toBe(0);
  });
});
