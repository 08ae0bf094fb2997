// @vitest-environment jsdom

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ConsoleApi } from "../src/api.js";
import { ConsoleStore } from "../src/state.js";
import { ConsoleView } from "../src/view.js";
import { FakeService, QUESTION_ORDER } from "./fake_service.js";

let fake: FakeService;
let store: ConsoleStore;
let view: ConsoleView;
let root: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = '<div id="app"></div>';
  root = document.getElementById("app")!;
  fake = new FakeService();
  store = new ConsoleStore(new ConsoleApi("http://fake", fake.fetch), {
    pollIntervalMs: 0,
    sleep: () => Promise.resolve(),
  });
  view = new ConsoleView(root, store);
  view.mount();
});

afterEach(() => {
  view.unmount();
});

const byTestId = (id: string) =>
  root.querySelector<HTMLElement>(`[data-testid="${id}"]`);
const allByTestId = (id: string) =>
  [...root.querySelectorAll<HTMLElement>(`[data-testid="${id}"]`)];

function cardButton(factId: string, label: string): HTMLButtonElement {
  const card = root.querySelector(`[data-fact-id="${factId}"]`)!;
  return card.querySelector<HTMLButtonElement>(`[data-label="${label}"]`)!;
}

function press(key: string, target: EventTarget = document) {
  target.dispatchEvent(
    new KeyboardEvent("keydown", { key, bubbles: true, cancelable: true }),
  );
}

async function startSession() {
  await store.start("stilt", { mode: "sibling", selection: "sm", budget: 3 });
}

async function answerAll() {
  await store.answer("q-03", "all");
  await store.answer("q-01", "some");
  await store.answer("q-02", "none");
}

describe("rendering", () => {
  it("shows only the start form before a session exists", () => {
    expect(byTestId("start-form")).not.toBeNull();
    expect(byTestId("cards")).toBeNull();
    expect(byTestId("refit-button")).toBeNull();
  });

  it("submitting the form starts a session and draws the cards", async () => {
    const entity = byTestId("entity-input") as HTMLInputElement;
    entity.value = "stilt";
    byTestId("start-form")!.dispatchEvent(
      new Event("submit", { bubbles: true, cancelable: true }),
    );
    await vi.waitFor(() => {
      expect(allByTestId("card")).toHaveLength(3);
    });
    // DOM order mirrors the service's question order
    expect(allByTestId("card").map((c) => c.dataset.factId)).toEqual([
      ...QUESTION_ORDER,
    ]);
    expect(byTestId("phase-text")!.textContent).toContain(
      "awaiting-annotation",
    );
    expect(byTestId("progress")!.textContent).toBe("0/3 answered");
    expect(byTestId("accepted")!.textContent).toContain(
      "1 facts accepted from sibling agreement",
    );
  });

  it("question cards carry the question text and candidate metadata", async () => {
    await startSession();
    const card = root.querySelector('[data-fact-id="q-01"]')!;
    expect(card.textContent).toContain(
      "is it true that all stilt eat some insect?",
    );
    expect(card.textContent).toContain("stilt · eat · insect");
    expect(card.textContent).toContain("p=0.40");
  });
});

describe("answering from the page", () => {
  it("clicking an answer button posts it and marks the selection", async () => {
    await startSession();
    cardButton("q-03", "some").click();
    await vi.waitFor(() => {
      expect(byTestId("progress")!.textContent).toBe("1/3 answered");
    });
    expect(cardButton("q-03", "some").className).toContain("selected");
    expect(fake.sessions.values().next().value!.annotations["q-03"]).toBe(
      "some",
    );
  });

  it("keyboard shortcuts answer the next open card", async () => {
    await startSession();
    press("a");
    await vi.waitFor(() => {
      expect(byTestId("progress")!.textContent).toBe("1/3 answered");
    });
    expect(cardButton("q-03", "all").className).toContain("selected");
    press("n");
    await vi.waitFor(() => {
      expect(byTestId("progress")!.textContent).toBe("2/3 answered");
    });
    expect(cardButton("q-01", "none").className).toContain("selected");
  });

  it("shortcuts stay quiet while typing in a form control", async () => {
    await startSession();
    press("a", byTestId("entity-input")!);
    // give any stray async work a chance to land, then check nothing did
    await new Promise((resolve) => setTimeout(resolve, 10));
    expect(byTestId("progress")!.textContent).toBe("0/3 answered");
  });
});

describe("refit controls", () => {
  it("keeps the button disabled with a tooltip until every card is answered", async () => {
    await startSession();
    let button = byTestId("refit-button") as HTMLButtonElement;
    expect(button.disabled).toBe(true);
    expect(button.title).toBe("3 questions still unanswered");
    expect(byTestId("refit-tooltip")!.textContent).toBe(
      "3 questions still unanswered",
    );

    await answerAll();
    button = byTestId("refit-button") as HTMLButtonElement;
    expect(button.disabled).toBe(false);
    expect(byTestId("refit-tooltip")).toBeNull();
  });

  it("runs the refit to done and renders the inferred table", async () => {
    await startSession();
    await answerAll();
    (byTestId("refit-button") as HTMLButtonElement).click();
    await vi.waitFor(() => {
      expect(byTestId("phase-text")!.textContent).toContain("done");
    });

    expect(byTestId("counts")!.textContent).toBe(
      "new facts · annotation: 2, sibling: 1, factorization: 2, total: 5",
    );
    expect(allByTestId("inferred-row")).toHaveLength(5);
    const badges = allByTestId("provenance-badge").map((b) => b.className);
    expect(badges).toContain("badge badge-annotation");
    expect(badges).toContain("badge badge-sibling-agreement");
    expect(badges).toContain("badge badge-factorization");

    const button = byTestId("refit-button") as HTMLButtonElement;
    expect(button.disabled).toBe(true);
    expect(button.title).toBe("session complete");
  });

  it("cycles the row order when the probability header is clicked", async () => {
    await startSession();
    await answerAll();
    await store.refit();

    const probCell = (row: Element) => row.children[2]!.textContent;
    const serviceOrder = allByTestId("inferred-row").map(probCell);

    byTestId("prob-header")!.click();
    expect(byTestId("prob-header")!.textContent).toContain("prob-desc");
    const desc = allByTestId("inferred-row").map(probCell);
    expect(desc).toEqual([...serviceOrder].sort().reverse());

    byTestId("prob-header")!.click();
    expect(byTestId("prob-header")!.textContent).toContain("prob-asc");

    byTestId("prob-header")!.click();
    expect(allByTestId("inferred-row").map(probCell)).toEqual(serviceOrder);
  });
});

describe("failure banners", () => {
  it("a cold entity start renders the banner with suggestion and retry", async () => {
    await store.start("coldling", { mode: "sibling" });
    const banner = byTestId("banner")!;
    expect(banner.getAttribute("role")).toBe("alert");
    expect(banner.textContent).toContain("no labeled sibling facts");
    expect(banner.textContent).toContain(
      "try the schema-consistent proposal mode instead",
    );

    fake.coldEntities.clear();
    byTestId("retry-button")!.click();
    await vi.waitFor(() => {
      expect(allByTestId("card")).toHaveLength(3);
    });
    expect(byTestId("banner")).toBeNull();
  });

  it("the dismiss control clears the banner", async () => {
    await store.start("coldling", { mode: "sibling" });
    root.querySelector<HTMLButtonElement>(".dismiss")!.click();
    expect(byTestId("banner")).toBeNull();
  });
});
