import { AnnotationApi } from "./api.js";
import { AnnotationSession, verdictForKey } from "./session.js";
import type { SessionState } from "./session.js";

const app = document.getElementById("app") as HTMLElement;
const noticeBar = document.getElementById("notice") as HTMLElement;

let session: AnnotationSession | null = null;
let noticeTimer: number | undefined;

function notice(message: string): void {
  noticeBar.textContent = message;
  noticeBar.classList.add("visible");
  window.clearTimeout(noticeTimer);
  noticeTimer = window.setTimeout(
    () => noticeBar.classList.remove("visible"),
    4000,
  );
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderEnterId(): void {
  app.replaceChildren();
  const form = el("form", "enter-id");
  const label = el("label", "", "Annotator ID");
  const input = document.createElement("input");
  input.type = "text";
  input.autofocus = true;
  const button = el("button", "", "Start") as HTMLButtonElement;
  (button as HTMLButtonElement).type = "submit";
  form.append(label, input, button);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const id = input.value.trim();
    if (!id) return;
    session = new AnnotationSession(new AnnotationApi(), id, {
      onState: render,
      onNotice: notice,
    });
    void session.next();
  });
  app.append(form);
}

function renderTaskCard(state: Extract<SessionState, { kind: "task" }>): void {
  const task = state.task;
  app.replaceChildren();
  const card = el("section", "card");
  card.append(el("div", "progress-line", progressText(task.progress)));
  card.append(el("h2", "question", task.question));
  const list = el("ul", "choices");
  for (const choice of task.choices) {
    const item = el(
      "li",
      choice.label === task.gold_key ? "choice gold" : "choice",
      `(${choice.label}) ${choice.text}`,
    );
    list.append(item);
  }
  card.append(list);
  if (task.gold_key !== null) {
    card.append(
      el("p", "hint", `Gold answer is highlighted (${task.gold_key}). ` +
        "Can the answer be concluded from the question and choices?"),
    );
  } else {
    card.append(el("p", "hint", "Pick the verdict for this question."));
  }
  const buttons = el("div", "buttons");
  const yes = el("button", "valid", "Valid (y)");
  const no = el("button", "invalid", "Invalid (n)");
  yes.addEventListener("click", () => void session?.vote("valid"));
  no.addEventListener("click", () => void session?.vote("invalid"));
  buttons.append(yes, no);
  card.append(buttons);
  app.append(card);
}

function progressText(progress: {
  pending: number;
  retained: number;
  removed: number;
  total: number;
}): string {
  return (
    `pending ${progress.pending} / retained ${progress.retained} / ` +
    `removed ${progress.removed} (total ${progress.total})`
  );
}

function render(state: SessionState): void {
  switch (state.kind) {
    case "loading":
      app.replaceChildren(el("p", "status", "Loading next task..."));
      break;
    case "task":
      renderTaskCard(state);
      break;
    case "done": {
      app.replaceChildren();
      const card = el("section", "card done");
      card.append(el("h2", "", "All done."));
      card.append(
        el("p", "", state.progress
          ? progressText(state.progress)
          : "No pending tasks for you."),
      );
      app.append(card);
      break;
    }
    case "offline": {
      app.replaceChildren();
      const banner = el("section", "card offline");
      banner.append(el("h2", "", "Connection lost"));
      banner.append(el("p", "", "Nothing was submitted. Retry when ready."));
      const button = el("button", "", "Retry");
      button.addEventListener("click", () => void session?.retry());
      banner.append(button);
      app.append(banner);
      break;
    }
    default:
      renderEnterId();
  }
}

document.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLInputElement) return;
  const verdict = verdictForKey(event.key);
  if (verdict && session) void session.vote(verdict);
});

renderEnterId();
