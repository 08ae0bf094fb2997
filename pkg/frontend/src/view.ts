/** DOM layer: renders the store snapshot and wires user input.
 *
 * Rendering is a full rebuild per notification; at annotation-session
 * scale (a handful of cards) that is simpler and faster than diffing.
 */

import { Label } from "./api.js";
import { ConsoleStore, Snapshot } from "./state.js";

const LABELS: Label[] = ["all", "some", "none"];
const SHORTCUTS: Record<string, Label> = { a: "all", s: "some", n: "none" };

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) node.textContent = text;
  return node;
}

export class ConsoleView {
  private readonly root: HTMLElement;
  private keyHandler: ((ev: KeyboardEvent) => void) | null = null;

  constructor(
    root: HTMLElement,
    private readonly store: ConsoleStore,
  ) {
    this.root = root;
    store.subscribe(() => this.render());
  }

  /** Installs the a/s/n shortcuts on the document and draws once. */
  mount(): void {
    this.keyHandler = (ev: KeyboardEvent) => {
      const target = ev.target as HTMLElement | null;
      if (target && (target.tagName === "INPUT" || target.tagName === "SELECT")) {
        return;
      }
      const label = SHORTCUTS[ev.key.toLowerCase()];
      if (!label) return;
      const card = this.store.nextUnanswered();
      if (card) {
        ev.preventDefault();
        void this.store.answer(card.factId, label);
      }
    };
    document.addEventListener("keydown", this.keyHandler);
    this.render();
  }

  unmount(): void {
    if (this.keyHandler) {
      document.removeEventListener("keydown", this.keyHandler);
      this.keyHandler = null;
    }
  }

  render(): void {
    const snap = this.store.snapshot();
    this.root.textContent = "";
    this.root.append(this.renderStartForm(snap));
    if (snap.banner) this.root.append(this.renderBanner(snap));
    if (snap.sessionId) {
      this.root.append(this.renderPhaseBanner(snap));
      this.root.append(this.renderCards(snap));
      if (snap.autoAccepted.length > 0) {
        this.root.append(this.renderAutoAccepted(snap));
      }
      this.root.append(this.renderRefit(snap));
      if (snap.inferred) this.root.append(this.renderInferred(snap));
    }
  }

  private renderStartForm(snap: Snapshot): HTMLElement {
    const form = el("form", { "data-testid": "start-form", class: "start" });
    const entity = el("input", {
      name: "entity",
      placeholder: "new entity",
      "data-testid": "entity-input",
    });
    const mode = el("select", { name: "mode", "data-testid": "mode-select" });
    for (const [value, title] of [
      ["sibling", "sibling guided"],
      ["schema", "schema consistent"],
      ["random", "random"],
    ] as const) {
      mode.append(el("option", { value }, title));
    }
    const selection = el("select", { name: "selection" });
    for (const [value, title] of [
      ["sm", "submodular"],
      ["tk", "top-k"],
    ] as const) {
      selection.append(el("option", { value }, title));
    }
    const budget = el("input", {
      name: "budget",
      type: "number",
      min: "1",
      value: "6",
      "data-testid": "budget-input",
    });
    const go = el(
      "button",
      { type: "submit", "data-testid": "start-button" },
      "start session",
    );
    if (snap.phase === "loading") go.setAttribute("disabled", "");
    form.append(entity, mode, selection, budget, go);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const name = entity.value.trim();
      if (!name) return;
      void this.store.start(name, {
        mode: mode.value,
        selection: selection.value,
        budget: Number(budget.value) || undefined,
      });
    });
    return form;
  }

  private renderBanner(snap: Snapshot): HTMLElement {
    const banner = snap.banner!;
    const box = el("div", {
      class: `banner banner-${banner.kind}`,
      "data-testid": "banner",
      role: "alert",
    });
    box.append(el("span", {}, banner.text));
    if (banner.suggestion) {
      box.append(el("span", { class: "suggestion" }, ` · ${banner.suggestion}`));
    }
    if (banner.canRetry) {
      const retry = el(
        "button",
        { type: "button", "data-testid": "retry-button" },
        "retry",
      );
      retry.addEventListener("click", () => void this.store.retry());
      box.append(retry);
    }
    const close = el("button", { type: "button", class: "dismiss" }, "×");
    close.addEventListener("click", () => this.store.dismissBanner());
    box.append(close);
    return box;
  }

  private renderPhaseBanner(snap: Snapshot): HTMLElement {
    const box = el("div", { class: "phase", "data-testid": "phase-banner" });
    box.append(el("strong", {}, snap.entity ?? ""));
    box.append(
      el(
        "span",
        { "data-testid": "phase-text" },
        ` · ${snap.phase} (${snap.mode}/${snap.selection}, model ${snap.modelRef})`,
      ),
    );
    box.append(
      el(
        "span",
        { class: "progress", "data-testid": "progress" },
        `${snap.progress.answered}/${snap.progress.total} answered`,
      ),
    );
    return box;
  }

  private renderCards(snap: Snapshot): HTMLElement {
    const list = el("ol", { class: "cards", "data-testid": "cards" });
    for (const card of snap.cards) {
      const item = el("li", {
        class: "card",
        "data-testid": "card",
        "data-fact-id": card.factId,
      });
      item.append(el("p", { class: "question" }, card.question));
      item.append(
        el(
          "p",
          { class: "meta" },
          `${card.source} · ${card.relation} · ${card.target}  (p=${card.p.toFixed(2)})`,
        ),
      );
      const group = el("div", { class: "answers", role: "group" });
      const shown = card.inFlight ?? card.answer;
      for (const label of LABELS) {
        const btn = el(
          "button",
          {
            type: "button",
            "data-label": label,
            class: shown === label ? "answer selected" : "answer",
          },
          label,
        );
        if (card.inFlight !== null) btn.setAttribute("disabled", "");
        btn.addEventListener("click", () =>
          void this.store.answer(card.factId, label),
        );
        group.append(btn);
      }
      item.append(group);
      list.append(item);
    }
    return list;
  }

  private renderAutoAccepted(snap: Snapshot): HTMLElement {
    const box = el("details", { class: "accepted", "data-testid": "accepted" });
    box.append(
      el(
        "summary",
        {},
        `${snap.autoAccepted.length} facts accepted from sibling agreement`,
      ),
    );
    const list = el("ul", {});
    for (const fact of snap.autoAccepted) {
      list.append(
        el(
          "li",
          {},
          `${fact.source} ${fact.relation} ${fact.target} (p=${fact.p.toFixed(2)})`,
        ),
      );
    }
    box.append(list);
    return box;
  }

  private renderRefit(snap: Snapshot): HTMLElement {
    const box = el("div", { class: "refit" });
    const btn = el(
      "button",
      { type: "button", "data-testid": "refit-button" },
      snap.phase === "refitting" ? "refitting…" : "refit model",
    );
    if (!snap.refit.enabled) {
      btn.setAttribute("disabled", "");
      if (snap.refit.tooltip) btn.setAttribute("title", snap.refit.tooltip);
    }
    btn.addEventListener("click", () => void this.store.refit());
    box.append(btn);
    if (snap.refit.tooltip) {
      box.append(
        el("span", { class: "tooltip", "data-testid": "refit-tooltip" },
          snap.refit.tooltip),
      );
    }
    if (snap.refitError) {
      box.append(
        el("span", { class: "refit-error", "data-testid": "refit-error" },
          snap.refitError),
      );
    }
    return box;
  }

  private renderInferred(snap: Snapshot): HTMLElement {
    const box = el("section", { class: "inferred", "data-testid": "inferred" });
    const counts = snap.counts;
    if (counts) {
      box.append(
        el(
          "p",
          { "data-testid": "counts" },
          `new facts · annotation: ${counts.annotation}, sibling: ${counts.sibling}, ` +
            `factorization: ${counts.factorization}, total: ${counts.total}`,
        ),
      );
    }
    const table = el("table", {});
    const head = el("tr", {});
    for (const title of ["fact", "label"]) head.append(el("th", {}, title));
    const probHeader = el(
      "th",
      { class: "sortable", "data-testid": "prob-header" },
      `probability (${snap.inferredOrder})`,
    );
    probHeader.addEventListener("click", () => this.store.cycleInferredOrder());
    head.append(probHeader);
    head.append(el("th", {}, "provenance"));
    table.append(head);
    for (const fact of snap.inferred ?? []) {
      const row = el("tr", { "data-testid": "inferred-row" });
      row.append(
        el("td", {}, `${fact.source} ${fact.relation} ${fact.target}`),
      );
      row.append(el("td", {}, fact.label ?? "-"));
      row.append(el("td", {}, fact.probability.toFixed(3)));
      const badge = el(
        "span",
        {
          class: `badge badge-${fact.provenance}`,
          "data-testid": "provenance-badge",
        },
        fact.provenance,
      );
      const cell = el("td", {});
      cell.append(badge);
      row.append(cell);
      table.append(row);
    }
    box.append(table);
    return box;
  }
}
