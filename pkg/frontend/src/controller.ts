// View-model for the adjudication workflow. Rendering subscribes to this;
// all server interaction and form state lives here so it can be exercised
// headlessly in tests.

import { ApiClient, ApiError } from "./api";
import type {
  ItemDetail,
  Quality,
  QueueItemSummary,
  RcofCode,
  Report,
} from "./types";
import {
  TurnDraft,
  canSubmit,
  draftsFromVoted,
  formProblems,
  toAnnotation,
} from "./validation";

export type SubmitOutcome = "ok" | "blocked" | "conflict" | "invalid" | "error";

export interface AppState {
  view: "queue" | "item";
  filter: "pending" | "resolved" | "all";
  queue: QueueItemSummary[];
  item: ItemDetail | null;
  drafts: TurnDraft[];
  annotatorId: string;
  banner: string | null;
  notice: string | null;
  report: Report | null;
}

export class AdjudicationController {
  state: AppState = {
    view: "queue",
    filter: "pending",
    queue: [],
    item: null,
    drafts: [],
    annotatorId: "",
    banner: null,
    notice: null,
    report: null,
  };

  private listeners: ((state: AppState) => void)[] = [];

  constructor(private api: ApiClient) {}

  subscribe(listener: (state: AppState) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  async loadQueue(filter?: "pending" | "resolved" | "all"): Promise<void> {
    if (filter) {
      this.state.filter = filter;
    }
    try {
      const response = await this.api.getQueue(this.state.filter);
      this.state.queue = response.items;
      this.state.view = "queue";
      this.state.item = null;
      this.state.banner = null;
    } catch (error) {
      this.state.banner = `cannot reach the adjudication service (${String(error)})`;
    }
    this.emit();
  }

  async openItem(itemId: string): Promise<void> {
    try {
      const item = await this.api.getItem(itemId);
      this.state.item = item;
      this.state.drafts = draftsFromVoted(item.voted.turns);
      this.state.view = "item";
      this.state.banner = null;
      this.state.notice = null;
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        this.state.banner = `item ${itemId} does not exist`;
      } else {
        this.state.banner = `cannot load item (${String(error)})`;
      }
    }
    this.emit();
  }

  backToQueue(): Promise<void> {
    return this.loadQueue();
  }

  setAnnotator(annotatorId: string): void {
    this.state.annotatorId = annotatorId;
    this.emit();
  }

  private draft(turnNumber: number): TurnDraft {
    const draft = this.state.drafts.find((d) => d.turn_number === turnNumber);
    if (!draft) {
      throw new Error(`no draft for turn ${turnNumber}`);
    }
    return draft;
  }

  setIsNewGoal(turnNumber: number, value: boolean): void {
    this.draft(turnNumber).is_new_goal = value;
    this.emit();
  }

  setQuality(turnNumber: number, value: Quality): void {
    const draft = this.draft(turnNumber);
    draft.quality = value;
    if (value === "success") {
      draft.rcof = null; // rcof selector only applies to failures
    }
    this.emit();
  }

  setRcof(turnNumber: number, code: RcofCode | null): void {
    this.draft(turnNumber).rcof = code;
    this.emit();
  }

  canSubmit(): boolean {
    return this.state.item !== null && canSubmit(this.state.drafts, this.state.annotatorId);
  }

  problems(): string[] {
    return formProblems(this.state.drafts);
  }

  async submitResolution(): Promise<SubmitOutcome> {
    const item = this.state.item;
    if (!item || !this.canSubmit()) {
      this.state.notice = "resolve every flagged field before submitting";
      this.emit();
      return "blocked";
    }
    const annotation = toAnnotation(item.dialog_id, this.state.drafts, this.state.annotatorId);
    try {
      await this.api.postResolution(item.item_id, {
        annotation,
        annotator_id: this.state.annotatorId,
      });
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.state.notice = "someone else already resolved this item; reload to see it";
        this.emit();
        return "conflict";
      }
      if (error instanceof ApiError && error.status === 422) {
        this.state.notice = `the service rejected the resolution: ${error.detail}`;
        this.emit();
        return "invalid";
      }
      this.state.banner = `submission failed (${String(error)})`;
      this.emit();
      return "error";
    }
    this.state.notice = `resolved ${item.item_id}`;
    await this.loadQueue();
    return "ok";
  }

  async loadReport(): Promise<void> {
    try {
      this.state.report = await this.api.getReport();
      this.state.banner = null;
    } catch (error) {
      this.state.banner = `cannot load the report (${String(error)})`;
    }
    this.emit();
  }
}
