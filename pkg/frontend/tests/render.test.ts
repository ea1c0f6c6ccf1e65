import { describe, expect, it } from "vitest";

import type { AppState } from "../src/controller";
import { formatAge, render, renderItem, renderQueue } from "../src/render";
import { draftsFromVoted } from "../src/validation";
import { escalatedItemFixture } from "./fake_service";

function baseState(overrides: Partial<AppState>): AppState {
  return {
    view: "queue",
    filter: "pending",
    queue: [],
    item: null,
    drafts: [],
    annotatorId: "",
    banner: null,
    notice: null,
    report: null,
    ...overrides,
  };
}

describe("renderQueue", () => {
  it("shows an empty-state message", () => {
    const html = renderQueue(baseState({}));
    expect(html).toContain("No pending items");
  });

  it("lists items with an ambiguous-field badge", () => {
    const item = escalatedItemFixture();
    const html = renderQueue(
      baseState({
        queue: [
          {
            item_id: item.item_id,
            dialog_id: item.dialog_id,
            ambiguous_fields: item.ambiguous_fields,
            status: "pending",
            enqueued_at: item.enqueued_at,
            age_seconds: 300,
            annotator_id: null,
            resolved_at: null,
          },
        ],
      }),
    );
    expect(html).toContain("it-3way-rcof");
    expect(html).toContain("turn 2: rcof");
    expect(html).toContain('data-action="open"');
  });
});

describe("renderItem", () => {
  function itemState(): AppState {
    const item = escalatedItemFixture();
    return baseState({
      view: "item",
      item,
      drafts: draftsFromVoted(item.voted.turns),
      annotatorId: "casey",
    });
  }

  it("renders the transcript, judge matrix, and SOP", () => {
    const html = renderItem(itemState());
    expect(html).toContain("How do I book a visitor badge?");
    expect(html).toContain("alpha");
    expect(html).toContain("timeout reads like retrieval never returned");
    expect(html).toContain("Prefer the earliest broken stage");
  });

  it("flags the ambiguous selector and disables submit", () => {
    const html = renderItem(itemState());
    expect(html).toMatch(/data-turn="2" data-field="rcof" class="flagged"/);
    expect(html).toMatch(/data-action="submit" disabled/);
    expect(html).toContain("a failed turn needs a root-cause code");
  });

  it("enables submit once the flagged field is decided", () => {
    const state = itemState();
    state.drafts[1].rcof = "E4";
    const html = renderItem(state);
    expect(html).not.toMatch(/data-action="submit" disabled/);
  });

  it("shows failed judges as a failed column, not blank labels", () => {
    const state = itemState();
    state.item!.verdicts[2] = {
      judge_id: "gamma",
      annotation: null,
      think_text: null,
      latency: 0,
      error: "ParseError: no_json",
    };
    const html = renderItem(state);
    expect(html).toContain("judge failed: ParseError: no_json");
  });

  it("escapes dialog content", () => {
    const state = itemState();
    state.item!.dialog.turns[0].user_msg = "<script>alert(1)</script>";
    const html = renderItem(state);
    expect(html).not.toContain("<script>alert(1)");
    expect(html).toContain("&lt;script&gt;");
  });
});

describe("formatAge", () => {
  it("humanizes and tolerates unknown ages", () => {
    expect(formatAge(null)).toBe("—");
    expect(formatAge(42)).toBe("42s");
    expect(formatAge(600)).toBe("10m");
    expect(formatAge(7200)).toBe("2h");
    expect(formatAge(200000)).toBe("2d");
  });
});

describe("render dispatch", () => {
  it("routes on the view field", () => {
    expect(render(baseState({}))).toContain("Adjudication queue");
    expect(render(baseState({ view: "item" }))).toContain("No item loaded");
  });
});
