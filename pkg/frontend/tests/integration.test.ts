// End-to-end flow against the fixture service (the secondary acceptance
// criterion): list the escalated item, block failure-without-rcof, submit a
// valid resolution, and watch the report GSR move by the expected delta.

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { AdjudicationController } from "../src/controller";
import { renderItem, renderQueue } from "../src/render";
import { FakeService, standardFixture } from "./fake_service";

describe("adjudication round trip", () => {
  let service: FakeService;
  let controller: AdjudicationController;
  let api: ApiClient;

  beforeEach(() => {
    service = standardFixture();
    api = new ApiClient("", service.fetch);
    controller = new AdjudicationController(api);
  });

  it("resolves the escalated item and moves the report GSR from 100 to 50", async () => {
    // one labeled success goal -> GSR 100.0 before adjudication
    const before = await api.getReport();
    expect(before.gsr.pct).toBe(100.0);
    expect(before.goals.total).toBe(1);

    // the queue lists the escalated item
    await controller.loadQueue();
    expect(controller.state.queue.map((i) => i.item_id)).toEqual(["it-3way-rcof"]);
    expect(renderQueue(controller.state)).toContain("it-3way-rcof");

    // open it; the rcof selector for turn 2 is flagged and empty
    await controller.openItem("it-3way-rcof");
    expect(controller.state.drafts[1].quality).toBe("failure");
    expect(controller.state.drafts[1].rcof).toBeNull();

    // submission is blocked while the failure lacks a code
    controller.setAnnotator("casey");
    expect(controller.canSubmit()).toBe(false);
    expect(await controller.submitResolution()).toBe("blocked");
    expect(renderItem(controller.state)).toMatch(/data-action="submit" disabled/);
    expect(service.requests.filter((r) => r.startsWith("POST"))).toHaveLength(0);

    // pick the code the SOP suggests and submit
    controller.setRcof(2, "E4");
    expect(controller.canSubmit()).toBe(true);
    expect(await controller.submitResolution()).toBe("ok");

    // the item left the pending queue
    expect(controller.state.view).toBe("queue");
    expect(controller.state.queue).toEqual([]);

    // the resolved dialog adds one failed goal: 1 of 2 succeed -> 50.0
    const after = await api.getReport();
    expect(after.goals.total).toBe(2);
    expect(after.gsr.pct).toBe(50.0);
    expect(after.failure_breakdown).toEqual([
      { code: "E4", label: "E4", count: 1, pct_of_goals: 50.0 },
    ]);
  });

  it("keeps the resolved item visible under the resolved filter", async () => {
    await controller.openItem("it-3way-rcof");
    controller.setAnnotator("casey");
    controller.setRcof(2, "E4");
    await controller.submitResolution();
    await controller.loadQueue("resolved");
    expect(controller.state.queue).toHaveLength(1);
    expect(controller.state.queue[0].annotator_id).toBe("casey");
  });
});
