import { ApiClient } from "./api.js";
import { InteractiveSession } from "./session.js";
import { render, UiElements } from "./ui.js";

function element(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el;
}

async function boot(): Promise<void> {
  const api = new ApiClient("");
  const ui: UiElements = {
    source: element("source"),
    hypothesis: element("hypothesis"),
    status: element("status"),
    counters: element("counters"),
  };
  const taskSelect = element("task") as HTMLSelectElement;
  const sampleInput = element("sample") as HTMLInputElement;
  const caretInput = element("caret") as HTMLInputElement;
  const typedInput = element("typed") as HTMLInputElement;

  for (const task of await api.tasks()) {
    const option = document.createElement("option");
    option.value = task.id;
    option.textContent = `${task.name} (${task.modality})`;
    taskSelect.append(option);
  }

  let session: InteractiveSession | null = null;

  element("start").addEventListener("click", async () => {
    session = new InteractiveSession(api, { onChange: (s) => render(s, ui) });
    await session.open(taskSelect.value, sampleInput.value || "0");
    await session.requestInitial();
  });

  element("correct").addEventListener("click", () => {
    if (!session) {
      return;
    }
    session.moveCaret(Number(caretInput.value));
    for (const char of typedInput.value) {
      session.keystroke(char);
    }
    typedInput.value = "";
  });

  element("accept").addEventListener("click", async () => {
    if (session) {
      await session.validate();
    }
  });
}

void boot();
