// Client-side mirror of the server's annotation rules: the form can never
// submit a resolution the server would reject for rcof presence or the
// first-turn rule. The server remains authoritative.

import type {
  AmbiguousField,
  AnnotationTurn,
  Quality,
  RcofCode,
  VotedTurn,
  WireAnnotation,
} from "./types";

export interface TurnDraft {
  turn_number: number;
  is_new_goal: boolean | null;
  quality: Quality | null;
  rcof: RcofCode | null;
}

export function draftsFromVoted(turns: VotedTurn[]): TurnDraft[] {
  return turns.map((t) => ({
    turn_number: t.turn_number,
    is_new_goal: t.is_new_goal === "undecided" ? null : t.is_new_goal,
    quality: t.quality === "undecided" ? null : t.quality,
    rcof: t.rcof === "undecided" ? null : t.rcof,
  }));
}

export function flaggedFieldKeys(fields: AmbiguousField[]): Set<string> {
  return new Set(fields.map(([turn, field]) => `${turn}:${field}`));
}

export function turnProblems(draft: TurnDraft): string[] {
  const problems: string[] = [];
  if (draft.is_new_goal === null) {
    problems.push("goal boundary is undecided");
  }
  if (draft.turn_number === 1 && draft.is_new_goal === false) {
    problems.push("turn 1 always starts a goal");
  }
  if (draft.quality === null) {
    problems.push("quality is undecided");
  } else if (draft.quality === "failure" && draft.rcof === null) {
    problems.push("a failed turn needs a root-cause code");
  } else if (draft.quality === "success" && draft.rcof !== null) {
    problems.push("a successful turn cannot carry a root-cause code");
  }
  return problems;
}

export function formProblems(drafts: TurnDraft[]): string[] {
  return drafts.flatMap((draft) =>
    turnProblems(draft).map((p) => `turn ${draft.turn_number}: ${p}`),
  );
}

export function canSubmit(drafts: TurnDraft[], annotatorId: string): boolean {
  return annotatorId.trim().length > 0 && formProblems(drafts).length === 0;
}

export function toAnnotation(
  dialogId: string,
  drafts: TurnDraft[],
  annotatorId: string,
): WireAnnotation {
  if (!canSubmit(drafts, annotatorId)) {
    throw new Error(`form not submittable: ${formProblems(drafts).join("; ")}`);
  }
  const turns: AnnotationTurn[] = drafts.map((d) => ({
    turn_number: d.turn_number,
    is_new_goal: d.is_new_goal as boolean,
    quality: d.quality as Quality,
    rcof: d.quality === "failure" ? d.rcof : null,
    rationale: null,
  }));
  return {
    dialog_id: dialogId,
    turns,
    provenance: { kind: "human", annotator_id: annotatorId },
  };
}
