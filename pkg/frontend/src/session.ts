import { AnnotationApi } from "./api.js";
import type { Progress, TaskView, Verdict } from "./types.js";

export type SessionState =
  | { kind: "idle" }
  | { kind: "loading" }
  | { kind: "task"; task: TaskView }
  | { kind: "done"; progress: Progress | null }
  | { kind: "offline"; retryOf: "next" };

export interface SessionEvents {
  onState?: (state: SessionState) => void;
  onNotice?: (message: string) => void;
}

/** Map a keyboard key to a verdict; y/n are the annotation shortcuts. */
export function verdictForKey(key: string): Verdict | null {
  if (key === "y" || key === "Y") return "valid";
  if (key === "n" || key === "N") return "invalid";
  return null;
}

/**
 * One annotator's pass over the task queue.
 *
 * The server decides which task comes next (never one this annotator has
 * voted on); the session only renders it, posts at most one vote per
 * displayed task (a submit lock holds until the response lands), and
 * advances. Network failures surface as an offline state that retries
 * without losing anything: no vote was sent, so none can be lost.
 */
export class AnnotationSession {
  private state: SessionState = { kind: "idle" };
  private submitLocked = false;

  constructor(
    private readonly api: AnnotationApi,
    readonly annotatorId: string,
    private readonly events: SessionEvents = {},
  ) {}

  get current(): SessionState {
    return this.state;
  }

  private setState(state: SessionState): void {
    this.state = state;
    this.events.onState?.(state);
  }

  /** Fetch and display the next task, or the done screen. */
  async next(): Promise<SessionState> {
    this.setState({ kind: "loading" });
    try {
      const task = await this.api.nextTask(this.annotatorId);
      if (task === null) {
        const progress = await this.api.progress().catch(() => null);
        this.setState({ kind: "done", progress });
      } else {
        this.submitLocked = false;
        this.setState({ kind: "task", task });
      }
    } catch {
      this.setState({ kind: "offline", retryOf: "next" });
    }
    return this.state;
  }

  /** Retry after a network failure. */
  async retry(): Promise<SessionState> {
    if (this.state.kind !== "offline") return this.state;
    return this.next();
  }

  /**
   * Vote on the displayed task and auto-advance. Ignored unless a task is
   * showing and no submission is in flight.
   */
  async vote(verdict: Verdict): Promise<SessionState> {
    if (this.state.kind !== "task" || this.submitLocked) return this.state;
    this.submitLocked = true;
    const task = this.state.task;
    let result;
    try {
      result = await this.api.submitVote(task.task_id, this.annotatorId, verdict);
    } catch {
      // Vote may or may not have landed; the server's duplicate guard
      // makes a retried submission safe, so stay on the task unlocked.
      this.submitLocked = false;
      this.events.onNotice?.("network error, vote not confirmed; try again");
      return this.state;
    }
    if (result.kind === "duplicate") {
      this.events.onNotice?.("vote already counted; moving on");
    } else if (result.kind === "rejected") {
      this.events.onNotice?.(`vote rejected (${result.code}): ${result.message}`);
    }
    return this.next();
  }

  /** Run a whole pass with a scripted verdict function (used in tests). */
  async run(script: (task: TaskView) => Verdict): Promise<Progress | null> {
    let state = await this.next();
    while (state.kind === "task") {
      state = await this.vote(script(state.task));
    }
    if (state.kind === "done") return state.progress;
    throw new Error(`session halted in state ${state.kind}`);
  }
}
