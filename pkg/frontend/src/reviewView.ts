import { ApiError, approve, edit, imageUrl, listQa, reject, statusCounts } from "./api";
import { ReviewQueue } from "./queueState";
import type { QAPair, ReviewStatus } from "./types";

const PAGE_SIZE = 200;

export interface ReviewViewHandle {
  refresh(): Promise<void>;
  destroy(): void;
}

/** Actions the server's state machine allows from a status; the UI never
 * offers anything outside this set. */
export function legalActions(status: QAPair["review_status"]): Set<"approve" | "reject" | "edit"> {
  if (status === "pending") return new Set(["approve", "reject", "edit"]);
  if (status === "edited") return new Set(["approve", "reject"]);
  return new Set();
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

export function mountReviewView(root: HTMLElement): ReviewViewHandle {
  const queue = new ReviewQueue();
  let filterStatus: ReviewStatus = "pending";
  let filterDoc = "";
  let editOpen = false;

  root.innerHTML = "";
  const container = el("section", "review-view");

  const toolbar = el("div", "toolbar");
  const statusSelect = el("select", "", "filter-status");
  for (const status of ["pending", "approved", "rejected", "edited"] as const) {
    const option = document.createElement("option");
    option.value = status;
    option.textContent = status;
    statusSelect.appendChild(option);
  }
  statusSelect.value = filterStatus;
  const docInput = el("input", "", "filter-doc");
  docInput.placeholder = "filter by doc id";
  const countsSpan = el("span", "counts", "counts");
  toolbar.append(statusSelect, docInput, countsSpan);

  const banner = el("div", "banner hidden", "banner");
  const card = el("div", "card", "card");
  const editPanel = el("div", "edit-panel hidden", "edit-panel");

  container.append(toolbar, banner, card, editPanel);
  root.appendChild(container);

  function showBanner(message: string, withRetry = false): void {
    banner.innerHTML = "";
    banner.classList.remove("hidden");
    banner.appendChild(document.createTextNode(message));
    if (withRetry) {
      const retry = el("button", "", "retry");
      retry.textContent = "retry";
      retry.addEventListener("click", () => {
        void refresh();
      });
      banner.appendChild(retry);
    }
  }

  function clearBanner(): void {
    banner.classList.add("hidden");
    banner.innerHTML = "";
  }

  function renderCurrent(): void {
    card.innerHTML = "";
    const pair = queue.current();
    if (!pair) {
      const empty = el("div", "empty", "empty-state");
      empty.textContent =
        filterStatus === "pending" ? "no pending pairs" : `no ${filterStatus} pairs`;
      card.appendChild(empty);
      return;
    }
    const question = el("h3", "qa-question", "qa-question");
    question.textContent = pair.question;
    const answer = el("p", "qa-answer", "qa-answer");
    answer.textContent = pair.answer;
    const meta = el("p", "qa-meta", "qa-meta");
    meta.textContent =
      `${pair.doc_id} · entity ${pair.gold_entity_index} · ${pair.review_status} · ` +
      `${queue.length} in queue`;
    // the gold highlight always reflects gold_entity_index from the API
    const image = el("img", "page-image", "page-image");
    image.src = imageUrl(pair.doc_id, [pair.gold_entity_index]);
    image.alt = `page ${pair.doc_id} with gold entity highlighted`;
    const hints = el("p", "hints", "hints");
    const allowed = legalActions(pair.review_status);
    const labels: string[] = [];
    if (allowed.has("approve")) labels.push("[a] approve");
    if (allowed.has("reject")) labels.push("[r] reject");
    if (allowed.has("edit")) labels.push("[e] edit");
    hints.textContent = labels.length ? labels.join("   ") : "no actions from this status";
    card.append(question, answer, meta, image, hints);
  }

  async function refreshCounts(): Promise<void> {
    try {
      const counts = await statusCounts();
      countsSpan.textContent =
        `pending ${counts.pending} · approved ${counts.approved} · ` +
        `rejected ${counts.rejected} · edited ${counts.edited}`;
    } catch {
      countsSpan.textContent = "";
    }
  }

  async function refresh(): Promise<void> {
    clearBanner();
    try {
      const body = await listQa({
        status: filterStatus,
        doc_id: filterDoc || undefined,
        page: 1,
        page_size: PAGE_SIZE,
      });
      queue.load(body.items);
      renderCurrent();
      await refreshCounts();
    } catch (error) {
      queue.load([]);
      renderCurrent();
      showBanner(`failed to load queue: ${describe(error)}`, true);
    }
  }

  function describe(error: unknown): string {
    if (error instanceof ApiError) return error.detail;
    return error instanceof Error ? error.message : String(error);
  }

  async function act(
    pair: QAPair,
    call: () => Promise<QAPair>,
    label: string,
  ): Promise<void> {
    clearBanner();
    renderCurrent(); // optimistic advance has already happened
    try {
      await call();
      void refreshCounts();
    } catch (error) {
      queue.restore(pair);
      renderCurrent();
      if (error instanceof ApiError) {
        showBanner(`${label} failed (${error.status}): ${error.detail}`);
      } else {
        showBanner(`${label} failed: ${describe(error)}`, true);
      }
    }
  }

  function handleApprove(): void {
    const current = queue.current();
    if (!current || !legalActions(current.review_status).has("approve")) return;
    const pair = queue.takeCurrent();
    if (pair) void act(pair, () => approve(pair.qa_id), "approve");
  }

  function handleReject(): void {
    const current = queue.current();
    if (!current || !legalActions(current.review_status).has("reject")) return;
    const pair = queue.takeCurrent();
    if (pair) void act(pair, () => reject(pair.qa_id), "reject");
  }

  function openEditPanel(): void {
    const pair = queue.current();
    if (!pair || !legalActions(pair.review_status).has("edit")) return;
    editOpen = true;
    editPanel.classList.remove("hidden");
    editPanel.innerHTML = "";
    const fieldSelect = el("select", "", "edit-field");
    for (const field of ["answer", "question"]) {
      const option = document.createElement("option");
      option.value = field;
      option.textContent = field;
      fieldSelect.appendChild(option);
    }
    const valueInput = el("input", "", "edit-value");
    valueInput.value = pair.answer;
    fieldSelect.addEventListener("change", () => {
      valueInput.value = fieldSelect.value === "answer" ? pair.answer : pair.question;
    });
    const save = el("button", "", "edit-save");
    save.textContent = "save";
    const cancel = el("button", "", "edit-cancel");
    cancel.textContent = "cancel";
    save.addEventListener("click", () => {
      const field = fieldSelect.value as "question" | "answer";
      const value = valueInput.value;
      closeEditPanel();
      const taken = queue.takeCurrent();
      if (taken) void act(taken, () => edit(taken.qa_id, field, value), "edit");
    });
    cancel.addEventListener("click", closeEditPanel);
    editPanel.append(fieldSelect, valueInput, save, cancel);
    valueInput.focus();
  }

  function closeEditPanel(): void {
    editOpen = false;
    editPanel.classList.add("hidden");
    editPanel.innerHTML = "";
  }

  function onKeydown(event: KeyboardEvent): void {
    const target = event.target as HTMLElement | null;
    if (target && ["INPUT", "TEXTAREA", "SELECT"].includes(target.tagName)) return;
    if (editOpen) {
      if (event.key === "Escape") closeEditPanel();
      return;
    }
    if (event.key === "a") handleApprove();
    else if (event.key === "r") handleReject();
    else if (event.key === "e") openEditPanel();
  }

  statusSelect.addEventListener("change", () => {
    filterStatus = statusSelect.value as ReviewStatus;
    void refresh();
  });
  docInput.addEventListener("change", () => {
    filterDoc = docInput.value.trim();
    void refresh();
  });
  document.addEventListener("keydown", onKeydown);

  return {
    refresh,
    destroy(): void {
      document.removeEventListener("keydown", onKeydown);
      root.innerHTML = "";
    },
  };
}
