import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { mountReviewView, type ReviewViewHandle } from "../src/reviewView";
import { installMockFetch, makeWorld, type MockWorld } from "./mockServer";

let world: MockWorld;
let root: HTMLElement;
let view: ReviewViewHandle;

function query(testId: string): HTMLElement | null {
  return root.querySelector(`[data-testid="${testId}"]`);
}

function text(testId: string): string {
  return query(testId)?.textContent ?? "";
}

function press(key: string): void {
  document.dispatchEvent(new KeyboardEvent("keydown", { key, bubbles: true }));
}

async function mounted(): Promise<void> {
  view = mountReviewView(root);
  await view.refresh();
}

beforeEach(() => {
  world = makeWorld();
  installMockFetch(world);
  root = document.createElement("div");
  document.body.appendChild(root);
});

afterEach(() => {
  view?.destroy();
  root.remove();
});

describe("review queue rendering", () => {
  it("shows the first pending pair with the gold entity highlighted", async () => {
    await mounted();
    expect(text("qa-question")).toBe("What is the student name?");
    expect(text("qa-answer")).toBe("Student: Lin Haoran");
    const image = query("page-image") as HTMLImageElement;
    // highlight always matches gold_entity_index from the API
    expect(image.getAttribute("src")).toBe("/api/documents/exam-e/image?boxes=1");
  });

  it("shows the empty state when nothing is pending", async () => {
    for (const pair of world.pairs) pair.review_status = "approved";
    await mounted();
    expect(text("empty-state")).toBe("no pending pairs");
  });

  it("shows status counts", async () => {
    await mounted();
    expect(text("counts")).toContain("pending 3");
    expect(text("counts")).toContain("approved 0");
  });
});

describe("keyboard flow", () => {
  it("approves with 'a' and advances to the next pair", async () => {
    await mounted();
    press("a");
    await vi.waitFor(() => {
      expect(world.pairs[0].review_status).toBe("approved");
    });
    expect(text("qa-question")).toBe("What is the score?");
    expect(query("banner")?.classList.contains("hidden")).toBe(true);
  });

  it("rejects with 'r'", async () => {
    await mounted();
    press("r");
    await vi.waitFor(() => {
      expect(world.pairs[0].review_status).toBe("rejected");
    });
    expect(text("qa-question")).toBe("What is the score?");
  });

  it("edits the answer with 'e' and re-points the gold entity", async () => {
    await mounted();
    press("e");
    const panel = query("edit-panel")!;
    expect(panel.classList.contains("hidden")).toBe(false);
    const value = query("edit-value") as HTMLInputElement;
    value.value = "Score: 87 points";
    (query("edit-save") as HTMLButtonElement).click();
    await vi.waitFor(() => {
      expect(world.pairs[0].review_status).toBe("edited");
    });
    expect(world.pairs[0].gold_entity_index).toBe(3);
    expect(world.pairs[0].answer).toBe("Score: 87 points");
    // queue advanced optimistically
    expect(text("qa-question")).toBe("What is the score?");
  });

  it("ignores action keys while typing in the edit panel", async () => {
    await mounted();
    press("e");
    const value = query("edit-value") as HTMLInputElement;
    value.dispatchEvent(
      new KeyboardEvent("keydown", { key: "a", bubbles: true }),
    );
    await new Promise((resolve) => setTimeout(resolve, 10));
    expect(world.pairs[0].review_status).toBe("pending");
  });
});

describe("rollback on server rejection", () => {
  it("rolls back and surfaces the error on an illegal transition (409)", async () => {
    await mounted();
    // another reviewer approved it behind our back
    world.pairs[0].review_status = "approved";
    press("a");
    await vi.waitFor(() => {
      expect(query("banner")?.classList.contains("hidden")).toBe(false);
    });
    expect(text("banner")).toContain("409");
    expect(text("banner")).toContain("cannot approve");
    // the same pair is shown again
    expect(text("qa-question")).toBe("What is the student name?");
  });

  it("rolls back and surfaces the error on an invalid edit (422)", async () => {
    await mounted();
    press("e");
    const value = query("edit-value") as HTMLInputElement;
    value.value = "text that matches no entity";
    (query("edit-save") as HTMLButtonElement).click();
    await vi.waitFor(() => {
      expect(query("banner")?.classList.contains("hidden")).toBe(false);
    });
    expect(text("banner")).toContain("422");
    expect(text("qa-question")).toBe("What is the student name?");
    expect(world.pairs[0].review_status).toBe("pending");
  });
});

describe("network failures", () => {
  it("offers a retry affordance and recovers", async () => {
    world.failNetwork = true;
    await mounted();
    expect(text("banner")).toContain("failed to load queue");
    world.failNetwork = false;
    (query("retry") as HTMLButtonElement).click();
    await vi.waitFor(() => {
      expect(text("qa-question")).toBe("What is the student name?");
    });
  });

  it("rolls back an action that failed on the network", async () => {
    await mounted();
    world.failNetwork = true;
    press("a");
    await vi.waitFor(() => {
      expect(query("banner")?.classList.contains("hidden")).toBe(false);
    });
    expect(text("qa-question")).toBe("What is the student name?");
    expect(world.pairs[0].review_status).toBe("pending");
  });
});

describe("state machine guards", () => {
  it("offers no actions on terminal pairs and ignores action keys", async () => {
    world.pairs[0].review_status = "approved";
    await mounted();
    const select = query("filter-status") as HTMLSelectElement;
    select.value = "approved";
    select.dispatchEvent(new Event("change", { bubbles: true }));
    await vi.waitFor(() => {
      expect(text("hints")).toBe("no actions from this status");
    });
    const requestsBefore = world.requests.filter((r) => r.startsWith("POST")).length;
    press("a");
    press("r");
    press("e");
    await new Promise((resolve) => setTimeout(resolve, 10));
    expect(world.pairs[0].review_status).toBe("approved");
    expect(world.requests.filter((r) => r.startsWith("POST")).length).toBe(
      requestsBefore,
    );
    expect(query("edit-panel")!.classList.contains("hidden")).toBe(true);
  });

  it("edited pairs allow approve/reject but not another edit", async () => {
    world.pairs[0].review_status = "edited";
    await mounted();
    const select = query("filter-status") as HTMLSelectElement;
    select.value = "edited";
    select.dispatchEvent(new Event("change", { bubbles: true }));
    await vi.waitFor(() => {
      expect(text("hints")).toBe("[a] approve   [r] reject");
    });
    press("e");
    expect(query("edit-panel")!.classList.contains("hidden")).toBe(true);
    press("a");
    await vi.waitFor(() => {
      expect(world.pairs[0].review_status).toBe("approved");
    });
  });
});

describe("filters", () => {
  it("reloads the queue when the status filter changes", async () => {
    world.pairs[1].review_status = "approved";
    await mounted();
    const select = query("filter-status") as HTMLSelectElement;
    select.value = "approved";
    select.dispatchEvent(new Event("change", { bubbles: true }));
    await vi.waitFor(() => {
      expect(text("qa-question")).toBe("What is the score?");
    });
  });
});
