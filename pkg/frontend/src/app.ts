// DOM bootstrap: render on every state change, delegate events back to the
// controller. All behavior lives in controller.ts/validation.ts.

import { ApiClient } from "./api";
import { AdjudicationController } from "./controller";
import { render } from "./render";
import type { Quality, RcofCode } from "./types";

export function mount(root: HTMLElement, controller: AdjudicationController): void {
  controller.subscribe((state) => {
    root.innerHTML = render(state);
  });

  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest("[data-action]");
    if (!(target instanceof HTMLElement)) {
      return;
    }
    const action = target.dataset.action;
    if (action === "open" && target.dataset.item) {
      void controller.openItem(target.dataset.item);
    } else if (action === "back") {
      void controller.backToQueue();
    } else if (action === "filter") {
      void controller.loadQueue(target.dataset.filter as "pending" | "resolved" | "all");
    } else if (action === "submit") {
      void controller.submitResolution();
    }
  });

  root.addEventListener("change", (event) => {
    const target = event.target as HTMLElement;
    if (target instanceof HTMLInputElement && target.name === "annotator") {
      controller.setAnnotator(target.value);
      return;
    }
    if (!(target instanceof HTMLSelectElement)) {
      return;
    }
    const turn = Number(target.dataset.turn);
    const field = target.dataset.field;
    const value = target.value;
    if (field === "is_new_goal" && value) {
      controller.setIsNewGoal(turn, value === "yes");
    } else if (field === "quality" && value) {
      controller.setQuality(turn, value as Quality);
    } else if (field === "rcof") {
      controller.setRcof(turn, (value || null) as RcofCode | null);
    }
  });

  // keep annotator input edits without forcing a rerender on each keystroke
  root.addEventListener("input", (event) => {
    const target = event.target as HTMLElement;
    if (target instanceof HTMLInputElement && target.name === "annotator") {
      controller.state.annotatorId = target.value;
    }
  });
}

export function start(): void {
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app mount point");
  }
  const controller = new AdjudicationController(new ApiClient());
  mount(root, controller);
  void controller.loadQueue();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  start();
}
