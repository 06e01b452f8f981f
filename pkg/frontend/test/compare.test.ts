import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { mountCompareView, type CompareViewHandle } from "../src/compareView";
import { installMockFetch, makeWorld, type MockWorld } from "./mockServer";

let world: MockWorld;
let root: HTMLElement;
let view: CompareViewHandle;

function query(testId: string): HTMLElement | null {
  return root.querySelector(`[data-testid="${testId}"]`);
}

function text(testId: string): string {
  return query(testId)?.textContent ?? "";
}

async function submitCompare(question = "What is the student name?"): Promise<void> {
  (query("compare-question") as HTMLInputElement).value = question;
  const form = root.querySelector("form")!;
  form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
}

beforeEach(async () => {
  world = makeWorld();
  installMockFetch(world);
  root = document.createElement("div");
  document.body.appendChild(root);
  view = mountCompareView(root);
  await view.refresh();
});

afterEach(() => {
  view.destroy();
  root.remove();
});

describe("comparison view", () => {
  it("renders two strategies side by side", async () => {
    await submitCompare();
    await vi.waitFor(() => {
      expect(query("column-trained")).not.toBeNull();
      expect(query("column-rag-baseline")).not.toBeNull();
    });
    expect(text("answer-trained")).toBe("Lin");
    expect(text("answer-rag-baseline")).toBe("Lin");
  });

  it("has one iteration tab per trace iteration", async () => {
    await submitCompare();
    await vi.waitFor(() => expect(query("column-trained")).not.toBeNull());
    const trainedTabs = query("tabs-trained")!.querySelectorAll("button");
    const ragTabs = query("tabs-rag-baseline")!.querySelectorAll("button");
    expect(trainedTabs.length).toBe(world.traces.trained.iterations.length);
    expect(ragTabs.length).toBe(world.traces["rag-baseline"].iterations.length);
  });

  it("steps t1 -> t2: incomplete name corrected, image and evidence swap", async () => {
    await submitCompare();
    await vi.waitFor(() => expect(query("column-trained")).not.toBeNull());
    // iteration 1: partial student name from the wrong evidence
    expect(text("answer-trained")).toBe("Lin");
    const image = query("image-trained") as HTMLImageElement;
    expect(image.getAttribute("src")).toBe("/api/artifacts/annotated/exam-e/q/t1.png");
    expect(text("evidence-trained")).toContain("E1: Class: Grade 9 Section B");

    (query("tab-trained-t2") as HTMLButtonElement).click();
    // iteration 2: gold entity retrieved, answer corrected
    expect(text("answer-trained")).toBe("Lin Haoran");
    const image2 = query("image-trained") as HTMLImageElement;
    expect(image2.getAttribute("src")).toBe(
      "/api/artifacts/annotated/exam-e/q/t2.png",
    );
    expect(text("evidence-trained")).toContain("E1: Student: Lin Haoran");
  });

  it("hovering an evidence item highlights its box, leaving restores", async () => {
    await submitCompare();
    await vi.waitFor(() => expect(query("column-trained")).not.toBeNull());
    const item = query("evidence-trained")!.querySelector("li")!;
    item.dispatchEvent(new MouseEvent("mouseenter", { bubbles: false }));
    const image = query("image-trained") as HTMLImageElement;
    expect(image.getAttribute("src")).toBe("/api/documents/exam-e/image?boxes=2");
    item.dispatchEvent(new MouseEvent("mouseleave", { bubbles: false }));
    expect(image.getAttribute("src")).toBe("/api/artifacts/annotated/exam-e/q/t1.png");
  });

  it("renders 409 (no checkpoint) as guidance to train", async () => {
    world.hasCheckpoint = false;
    await submitCompare();
    await vi.waitFor(() => {
      expect(query("compare-banner")?.classList.contains("hidden")).toBe(false);
    });
    expect(text("compare-banner")).toContain("409");
    expect(text("compare-banner")).toContain("docs2synth train");
  });

  it("runs a single strategy when only one is selected", async () => {
    (query("strategy-trained") as HTMLInputElement).checked = false;
    await submitCompare();
    await vi.waitFor(() => expect(query("column-rag-baseline")).not.toBeNull());
    expect(query("column-trained")).toBeNull();
  });

  it("populates the document selector from the API", () => {
    const select = query("compare-doc") as HTMLSelectElement;
    expect([...select.options].map((o) => o.value)).toEqual(["exam-e"]);
  });
});
