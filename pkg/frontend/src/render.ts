// Pure HTML renderers over the controller state. Keeping these as string
// functions lets the listing and form-gating logic run headlessly in tests;
// app.ts owns the DOM wiring.

import type { AppState } from "./controller";
import type { ItemDetail, QueueItemSummary, VerdictView } from "./types";
import { RCOF_CODES, RCOF_LABELS } from "./types";
import { TurnDraft, canSubmit, flaggedFieldKeys, formProblems } from "./validation";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function formatAge(seconds: number | null): string {
  if (seconds === null) {
    return "—";
  }
  if (seconds < 90) {
    return `${Math.round(seconds)}s`;
  }
  if (seconds < 5400) {
    return `${Math.round(seconds / 60)}m`;
  }
  if (seconds < 172800) {
    return `${Math.round(seconds / 3600)}h`;
  }
  return `${Math.round(seconds / 86400)}d`;
}

export function ambiguousSummary(item: QueueItemSummary): string {
  return item.ambiguous_fields
    .map(([turn, field]) => `turn ${turn}: ${field}`)
    .join(", ");
}

function banner(state: AppState): string {
  const parts: string[] = [];
  if (state.banner) {
    parts.push(`<div class="banner error">${escapeHtml(state.banner)}</div>`);
  }
  if (state.notice) {
    parts.push(`<div class="banner notice">${escapeHtml(state.notice)}</div>`);
  }
  return parts.join("");
}

export function renderQueue(state: AppState): string {
  const filters = (["pending", "resolved", "all"] as const)
    .map(
      (f) =>
        `<button data-action="filter" data-filter="${f}"` +
        `${f === state.filter ? ' class="active"' : ""}>${f}</button>`,
    )
    .join(" ");
  if (state.queue.length === 0) {
    return `
      <header><h1>Adjudication queue</h1><nav>${filters}</nav></header>
      ${banner(state)}
      <p class="empty">No ${escapeHtml(state.filter)} items. Nothing needs a human right now.</p>`;
  }
  const rows = state.queue
    .map(
      (item) => `
      <tr>
        <td><code>${escapeHtml(item.item_id)}</code></td>
        <td><code>${escapeHtml(item.dialog_id)}</code></td>
        <td><span class="badge">${escapeHtml(ambiguousSummary(item))}</span></td>
        <td>${formatAge(item.age_seconds)}</td>
        <td>${escapeHtml(item.status)}${
          item.annotator_id ? ` by ${escapeHtml(item.annotator_id)}` : ""
        }</td>
        <td><button data-action="open" data-item="${escapeHtml(item.item_id)}">open</button></td>
      </tr>`,
    )
    .join("");
  return `
    <header><h1>Adjudication queue</h1><nav>${filters}</nav></header>
    ${banner(state)}
    <table class="queue">
      <thead><tr><th>item</th><th>dialog</th><th>ambiguous</th><th>age</th><th>status</th><th></th></tr></thead>
      <tbody>${rows}</tbody>
    </table>`;
}

function verdictCell(verdict: VerdictView, turnNumber: number): string {
  if (verdict.annotation === null) {
    return `<td class="judge-failed">judge failed: ${escapeHtml(verdict.error ?? "unknown")}</td>`;
  }
  const turn = verdict.annotation.turns.find((t) => t.turn_number === turnNumber);
  if (!turn) {
    return `<td class="judge-failed">no label</td>`;
  }
  const goal = turn.is_new_goal ? "new goal" : "continues";
  const rcof = turn.rcof ? ` · ${turn.rcof}` : "";
  return `<td>${goal} · ${turn.quality}${rcof}</td>`;
}

function judgeMatrix(item: ItemDetail): string {
  const heads = item.verdicts
    .map((v) => `<th>${escapeHtml(v.judge_id)}</th>`)
    .join("");
  const rows = item.dialog.turns
    .map(
      (turn) =>
        `<tr><th>turn ${turn.turn_number}</th>` +
        item.verdicts.map((v) => verdictCell(v, turn.turn_number)).join("") +
        "</tr>",
    )
    .join("");
  const rationales = item.verdicts
    .map((v) => {
      if (v.annotation === null) {
        return `<details><summary>${escapeHtml(v.judge_id)} (failed)</summary><pre>${escapeHtml(
          v.error ?? "",
        )}</pre></details>`;
      }
      return `<details><summary>${escapeHtml(v.judge_id)} rationale</summary><pre>${escapeHtml(
        v.think_text ?? "(no reasoning captured)",
      )}</pre></details>`;
    })
    .join("");
  return `
    <table class="judges"><thead><tr><th></th>${heads}</tr></thead><tbody>${rows}</tbody></table>
    <div class="rationales">${rationales}</div>`;
}

function transcript(item: ItemDetail): string {
  return item.dialog.turns
    .map((turn) => {
      const sources = turn.source_names.length
        ? `<div class="sources">sources: ${escapeHtml(turn.source_names.join("; "))}</div>`
        : "";
      return `
      <div class="turn">
        <div class="turn-no">turn ${turn.turn_number}</div>
        <div class="user">${escapeHtml(turn.user_msg)}</div>
        <div class="bot">${escapeHtml(turn.response)}</div>
        ${sources}
      </div>`;
    })
    .join("");
}

function select(
  turnNumber: number,
  field: string,
  options: { value: string; label: string; selected: boolean }[],
  flagged: boolean,
  disabled = false,
  undecided = false,
): string {
  const opts = [
    `<option value=""${undecided && !options.some((o) => o.selected) ? " selected" : ""}>— undecided —</option>`,
    ...options.map(
      (o) =>
        `<option value="${escapeHtml(o.value)}"${o.selected ? " selected" : ""}>${escapeHtml(
          o.label,
        )}</option>`,
    ),
  ].join("");
  return `<select data-turn="${turnNumber}" data-field="${field}"${
    flagged ? ' class="flagged"' : ""
  }${disabled ? " disabled" : ""}>${opts}</select>`;
}

function editor(draft: TurnDraft, flagged: Set<string>): string {
  const n = draft.turn_number;
  const goal = select(
    n,
    "is_new_goal",
    [
      { value: "yes", label: "new goal", selected: draft.is_new_goal === true },
      { value: "no", label: "continues", selected: draft.is_new_goal === false },
    ],
    flagged.has(`${n}:is_new_goal`),
    n === 1, // turn 1 is a new goal by definition
    draft.is_new_goal === null,
  );
  const quality = select(
    n,
    "quality",
    [
      { value: "success", label: "success", selected: draft.quality === "success" },
      { value: "failure", label: "failure", selected: draft.quality === "failure" },
    ],
    flagged.has(`${n}:quality`),
    false,
    draft.quality === null,
  );
  const rcof = select(
    n,
    "rcof",
    RCOF_CODES.map((code) => ({
      value: code,
      label: `${code} ${RCOF_LABELS[code]}`,
      selected: draft.rcof === code,
    })),
    flagged.has(`${n}:rcof`),
    draft.quality !== "failure", // enabled only when the turn failed
    draft.rcof === null && draft.quality === "failure",
  );
  return `
    <tr>
      <th>turn ${n}</th>
      <td>${goal}</td>
      <td>${quality}</td>
      <td>${rcof}</td>
    </tr>`;
}

export function renderItem(state: AppState): string {
  const item = state.item;
  if (!item) {
    return `${banner(state)}<p class="empty">No item loaded.</p>
      <button data-action="back">back to queue</button>`;
  }
  const flagged = flaggedFieldKeys(item.ambiguous_fields);
  const editors = state.drafts.map((d) => editor(d, flagged)).join("");
  const problems = formProblems(state.drafts)
    .map((p) => `<li>${escapeHtml(p)}</li>`)
    .join("");
  const submittable = canSubmit(state.drafts, state.annotatorId);
  const resolved = item.status === "resolved";
  return `
    <header>
      <button data-action="back">← queue</button>
      <h1>Item <code>${escapeHtml(item.item_id)}</code></h1>
      <span class="status">${escapeHtml(item.status)}</span>
    </header>
    ${banner(state)}
    <section class="transcript"><h2>Dialog <code>${escapeHtml(item.dialog_id)}</code></h2>
      ${transcript(item)}
    </section>
    <section class="judges-panel"><h2>Judges</h2>${judgeMatrix(item)}</section>
    <details class="sop" open><summary>SOP</summary><pre>${escapeHtml(item.sop)}</pre></details>
    <section class="resolution">
      <h2>Resolution</h2>
      <table class="editors">
        <thead><tr><th></th><th>goal boundary</th><th>quality</th><th>root cause</th></tr></thead>
        <tbody>${editors}</tbody>
      </table>
      ${problems ? `<ul class="problems">${problems}</ul>` : ""}
      <label>annotator
        <input name="annotator" value="${escapeHtml(state.annotatorId)}" placeholder="your id" ${
          resolved ? "disabled" : ""
        }/>
      </label>
      <button data-action="submit" ${submittable && !resolved ? "" : "disabled"}>
        submit resolution
      </button>
    </section>`;
}

export function render(state: AppState): string {
  return state.view === "queue" ? renderQueue(state) : renderItem(state);
}
