/** Entry point: resolve the service base URL, build the store, mount.
 *
 * The base URL is configurable three ways, highest priority first:
 * `?api=` query parameter (remembered), a previously remembered value,
 * and the default local service address.  `?session=` resumes an
 * existing session from the service's persisted state.
 */

import { ConsoleApi } from "./api.js";
import { ConsoleStore } from "./state.js";
import { ConsoleView } from "./view.js";

const STORAGE_KEY = "genkbc-api-base";
const DEFAULT_BASE = "http://127.0.0.1:8008";

function resolveBase(): string {
  const params = new URLSearchParams(window.location.search);
  const fromQuery = params.get("api");
  if (fromQuery) {
    try {
      window.localStorage.setItem(STORAGE_KEY, fromQuery);
    } catch {
      // private mode; the query value still applies for this load
    }
    return fromQuery;
  }
  try {
    const remembered = window.localStorage.getItem(STORAGE_KEY);
    if (remembered) return remembered;
  } catch {
    // fall through to the default
  }
  return DEFAULT_BASE;
}

export function boot(root: HTMLElement): ConsoleStore {
  const base = resolveBase();
  const store = new ConsoleStore(new ConsoleApi(base));
  const view = new ConsoleView(root, store);
  view.mount();
  const params = new URLSearchParams(window.location.search);
  const sessionId = params.get("session");
  if (sessionId) void store.hydrate(sessionId);
  return store;
}

const rootEl = document.getElementById("app");
if (rootEl) boot(rootEl);
