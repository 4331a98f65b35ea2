export interface Choice {
  label: string;
  text: string;
}

export interface Progress {
  pending: number;
  retained: number;
  removed: number;
  total: number;
}

export interface TaskView {
  task_id: string;
  question: string;
  choices: Choice[];
  gold_key: string | null;
  progress: Progress;
}

export type Verdict = "valid" | "invalid";

/** Outcome of one vote POST, discriminated on the response status. */
export type VoteResult =
  | { kind: "ok"; status: string; votes: number }
  | { kind: "duplicate"; message: string }
  | { kind: "rejected"; code: number; message: string };
