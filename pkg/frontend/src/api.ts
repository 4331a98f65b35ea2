import type { Progress, TaskView, Verdict, VoteResult } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Typed client over the verification service JSON API. */
export class AnnotationApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  /** Next pending task for this annotator, or null when none remain (204). */
  async nextTask(annotatorId: string): Promise<TaskView | null> {
    const url = `${this.baseUrl}/api/tasks/next?annotator=${encodeURIComponent(annotatorId)}`;
    const response = await this.fetchFn(url);
    if (response.status === 204) return null;
    if (!response.ok) {
      throw new Error(`tasks/next failed with ${response.status}`);
    }
    return (await response.json()) as TaskView;
  }

  /**
   * Record one verdict. 409 (duplicate or already-resolved) is a normal
   * outcome surfaced as {kind: "duplicate"} so callers advance instead of
   * retrying.
   */
  async submitVote(
    taskId: string,
    annotatorId: string,
    verdict: Verdict,
  ): Promise<VoteResult> {
    const response = await this.fetchFn(`${this.baseUrl}/api/votes`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        task_id: taskId,
        annotator_id: annotatorId,
        verdict,
      }),
    });
    if (response.ok) {
      const body = (await response.json()) as { status: string; votes: number };
      return { kind: "ok", status: body.status, votes: body.votes };
    }
    const message = await response
      .json()
      .then((body: { error?: string }) => body.error ?? "")
      .catch(() => "");
    if (response.status === 409) {
      return { kind: "duplicate", message };
    }
    return { kind: "rejected", code: response.status, message };
  }

  async progress(): Promise<Progress> {
    const response = await this.fetchFn(`${this.baseUrl}/api/progress`);
    if (!response.ok) {
      throw new Error(`progress failed with ${response.status}`);
    }
    return (await response.json()) as Progress;
  }
}
