import { ApiError, compare, imageUrl, listDocuments } from "./api";
import type { InferenceTrace } from "./types";

export interface CompareViewHandle {
  refresh(): Promise<void>;
  destroy(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  testId?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (testId) node.dataset.testid = testId;
  return node;
}

/** One strategy's timeline: iteration tabs, annotated image, evidence, answer. */
function renderStrategyColumn(trace: InferenceTrace, strategy: string): HTMLElement {
  const column = el("div", "strategy-column", `column-${strategy}`);
  const title = el("h3");
  title.textContent = strategy;
  column.appendChild(title);

  const tabs = el("div", "iteration-tabs", `tabs-${strategy}`);
  const body = el("div", "iteration-body");
  column.append(tabs, body);

  let activeStep = 0;

  function renderStep(): void {
    const record = trace.iterations[activeStep];
    body.innerHTML = "";

    const image = el("img", "annotated-image", `image-${strategy}`);
    const annotatedSrc =
      record.annotated_image_url ?? imageUrl(trace.doc_id, record.topk_indices);
    image.src = annotatedSrc;
    image.alt = `iteration ${record.t} annotated page`;

    const evidence = el("ol", "evidence", `evidence-${strategy}`);
    record.retrieved_contents.forEach((content, j) => {
      const item = el("li", "evidence-item");
      item.textContent = `E${j + 1}: ${content}`;
      // hovering an evidence item highlights just its box on the image
      item.addEventListener("mouseenter", () => {
        image.src = imageUrl(trace.doc_id, [record.topk_indices[j]]);
      });
      item.addEventListener("mouseleave", () => {
        image.src = annotatedSrc;
      });
      evidence.appendChild(item);
    });

    const answer = el("p", "iteration-answer", `answer-${strategy}`);
    answer.textContent = record.answer === "" ? "(empty answer)" : record.answer;

    const footer = el("p", "trace-footer");
    footer.textContent = `final: ${trace.final_answer} · stop: ${trace.stop_reason}`;

    body.append(image, evidence, answer, footer);
    for (const [index, button] of tabButtons.entries()) {
      button.classList.toggle("active", index === activeStep);
    }
  }

  const tabButtons: HTMLButtonElement[] = [];
  trace.iterations.forEach((record, index) => {
    const tab = el("button", "tab", `tab-${strategy}-t${record.t}`);
    tab.textContent = `t${record.t}`;
    tab.addEventListener("click", () => {
      activeStep = index;
      renderStep();
    });
    tabButtons.push(tab);
    tabs.appendChild(tab);
  });

  renderStep();
  return column;
}

export function mountCompareView(root: HTMLElement): CompareViewHandle {
  root.innerHTML = "";
  const container = el("section", "compare-view");

  const form = el("form", "compare-form");
  const questionInput = el("input", "", "compare-question");
  questionInput.placeholder = "question";
  const docSelect = el("select", "", "compare-doc");
  const kInput = el("input", "", "compare-k");
  kInput.type = "number";
  kInput.value = "3";
  const iterationsInput = el("input", "", "compare-iterations");
  iterationsInput.type = "number";
  iterationsInput.value = "2";

  const strategyBoxes: Record<string, HTMLInputElement> = {};
  const strategyWrap = el("span", "strategies");
  for (const strategy of ["trained", "rag-baseline"]) {
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = true;
    box.dataset.testid = `strategy-${strategy}`;
    strategyBoxes[strategy] = box;
    label.append(box, document.createTextNode(strategy));
    strategyWrap.appendChild(label);
  }

  const submit = el("button", "", "compare-submit");
  submit.type = "submit";
  submit.textContent = "compare";
  form.append(questionInput, docSelect, strategyWrap, kInput, iterationsInput, submit);

  const banner = el("div", "banner hidden", "compare-banner");
  const columns = el("div", "columns", "columns");
  container.append(form, banner, columns);
  root.appendChild(container);

  function showBanner(message: string): void {
    banner.textContent = message;
    banner.classList.remove("hidden");
  }

  function clearBanner(): void {
    banner.classList.add("hidden");
    banner.textContent = "";
  }

  async function loadDocuments(): Promise<void> {
    try {
      const body = await listDocuments();
      docSelect.innerHTML = "";
      for (const doc of body.items) {
        const option = document.createElement("option");
        option.value = doc.doc_id;
        option.textContent = doc.doc_id;
        docSelect.appendChild(option);
      }
    } catch (error) {
      showBanner(`failed to list documents: ${describe(error)}`);
    }
  }

  function describe(error: unknown): string {
    if (error instanceof ApiError) return error.detail;
    return error instanceof Error ? error.message : String(error);
  }

  async function runCompare(): Promise<void> {
    clearBanner();
    columns.innerHTML = "";
    const strategies = Object.entries(strategyBoxes)
      .filter(([, box]) => box.checked)
      .map(([name]) => name);
    if (!strategies.length) {
      showBanner("pick at least one strategy");
      return;
    }
    try {
      const body = await compare({
        question: questionInput.value,
        doc_id: docSelect.value,
        strategies,
        k: Number(kInput.value) || 3,
        iterations: Number(iterationsInput.value) || 2,
      });
      for (const strategy of strategies) {
        const trace = body.traces[strategy];
        if (trace) columns.appendChild(renderStrategyColumn(trace, strategy));
      }
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        showBanner(
          `not ready (409): ${error.detail} — train a retriever first ` +
            "(docs2synth train --config config.yml), then compare again.",
        );
      } else {
        showBanner(`comparison failed: ${describe(error)}`);
      }
    }
  }

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void runCompare();
  });

  return {
    async refresh(): Promise<void> {
      await loadDocuments();
    },
    destroy(): void {
      root.innerHTML = "";
    },
  };
}
