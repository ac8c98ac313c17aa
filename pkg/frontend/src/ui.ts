/** Minimal DOM bindings: rendering is kept apart from the state machine
 * so the session logic stays testable without a browser. */

import { SessionSnapshot } from "./session.js";

export interface UiElements {
  source: HTMLElement;
  hypothesis: HTMLElement;
  status: HTMLElement;
  counters: HTMLElement;
}

export function render(snapshot: SessionSnapshot, el: UiElements): void {
  el.source.textContent = snapshot.sourcePreview;

  const validated = snapshot.hypothesis.slice(0, snapshot.validatedPrefixLength);
  const rest = snapshot.hypothesis.slice(snapshot.validatedPrefixLength);
  el.hypothesis.replaceChildren();
  const prefixSpan = document.createElement("span");
  prefixSpan.className = "validated-prefix";
  prefixSpan.textContent = validated;
  const restSpan = document.createElement("span");
  restSpan.className = "suggestion";
  restSpan.textContent = rest;
  el.hypothesis.append(prefixSpan, restSpan);

  el.status.textContent = snapshot.requestInFlight ? `${snapshot.phase}…` : snapshot.phase;

  if (snapshot.report) {
    const r = snapshot.report;
    el.counters.textContent =
      `keystrokes ${r.keystrokes} · mouse actions ${r.mouse_actions} · ` +
      `iterations ${r.iterations} · ksmr ${r.ksmr.toFixed(3)}`;
  } else {
    el.counters.textContent = "";
  }
}
