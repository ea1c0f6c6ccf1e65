// Wire types for the adjudication API.

export type Quality = "success" | "failure";

export type RcofCode = "E1" | "E2" | "E3" | "E4" | "E5" | "E6" | "E7";

export const RCOF_CODES: RcofCode[] = ["E1", "E2", "E3", "E4", "E5", "E6", "E7"];

export const RCOF_LABELS: Record<RcofCode, string> = {
  E1: "Language Understanding",
  E2: "Refusal",
  E3: "Incorrect Retrieval",
  E4: "Retrieval Failure",
  E5: "System Error",
  E6: "Incorrect Routing",
  E7: "Out-of-Domain Query",
};

export type AmbiguousField = [number, string];

export interface QueueItemSummary {
  item_id: string;
  dialog_id: string;
  ambiguous_fields: AmbiguousField[];
  status: "pending" | "resolved";
  enqueued_at: string | null;
  age_seconds: number | null;
  annotator_id: string | null;
  resolved_at: string | null;
}

export interface QueueResponse {
  items: QueueItemSummary[];
}

export interface WireTurn {
  turn_number: number;
  user_msg: string;
  response: string;
  source_urls: string[];
  source_names: string[];
  source_snippets: string[];
}

export interface WireDialog {
  dialog_id: string;
  turns: WireTurn[];
}

export interface AnnotationTurn {
  turn_number: number;
  is_new_goal: boolean;
  quality: Quality;
  rcof: RcofCode | null;
  rationale?: string | null;
}

export interface Provenance {
  kind: "judge" | "vote" | "human";
  judge_id?: string;
  judge_ids?: string[];
  annotator_id?: string;
}

export interface WireAnnotation {
  dialog_id: string;
  turns: AnnotationTurn[];
  provenance: Provenance;
}

export interface VerdictView {
  judge_id: string;
  annotation: WireAnnotation | null;
  think_text: string | null;
  raw?: string | null;
  latency: number;
  error: string | null;
}

export type Undecidable<T> = T | "undecided";

export interface VotedTurn {
  turn_number: number;
  is_new_goal: Undecidable<boolean>;
  quality: Undecidable<Quality>;
  rcof: Undecidable<RcofCode> | null;
}

export interface ItemDetail {
  item_id: string;
  dialog_id: string;
  dialog: WireDialog;
  verdicts: VerdictView[];
  voted: { dialog_id: string; turns: VotedTurn[] };
  ambiguous_fields: AmbiguousField[];
  status: "pending" | "resolved";
  resolution: WireAnnotation | null;
  annotator_id: string | null;
  resolved_at: string | null;
  enqueued_at: string | null;
  sop: string;
}

export interface ReportGoals {
  total: number;
  successful: number;
  failed: number;
}

export interface Report {
  goals: ReportGoals;
  gsr: { pct: number | null; raw: [number, number] | null; undefined: boolean };
  failure_breakdown: {
    code: RcofCode;
    label: string;
    count: number;
    pct_of_goals: number;
  }[];
}

export interface ResolutionBody {
  annotation: WireAnnotation;
  annotator_id: string;
}
