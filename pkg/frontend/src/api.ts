import type {
  CompareRequest,
  CompareResponse,
  EntityInfo,
  QAPair,
  QaListResponse,
  ReviewStatus,
  StatusCounts,
} from "./types";

/** Server-reported failure; status distinguishes 409 conflicts from 422 edits. */
export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export interface QaFilter {
  status?: ReviewStatus;
  doc_id?: string;
  page?: number;
  page_size?: number;
}

export function listQa(filter: QaFilter = {}): Promise<QaListResponse> {
  const params = new URLSearchParams();
  if (filter.status) params.set("status", filter.status);
  if (filter.doc_id) params.set("doc_id", filter.doc_id);
  if (filter.page) params.set("page", String(filter.page));
  if (filter.page_size) params.set("page_size", String(filter.page_size));
  const query = params.toString();
  return request<QaListResponse>(`/api/qa${query ? `?${query}` : ""}`);
}

export async function statusCounts(): Promise<StatusCounts> {
  const body = await request<{ counts: StatusCounts }>("/api/session");
  return body.counts;
}

export function approve(qaId: string): Promise<QAPair> {
  return request<QAPair>(`/api/qa/${qaId}/approve`, { method: "POST" });
}

export function reject(qaId: string): Promise<QAPair> {
  return request<QAPair>(`/api/qa/${qaId}/reject`, { method: "POST" });
}

export function edit(
  qaId: string,
  field: "question" | "answer",
  newValue: string,
): Promise<QAPair> {
  return request<QAPair>(`/api/qa/${qaId}`, {
    method: "PATCH",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ field, new_value: newValue }),
  });
}

export function listEntities(docId: string): Promise<{ items: EntityInfo[] }> {
  return request<{ items: EntityInfo[] }>(`/api/entities/${docId}`);
}

export function listDocuments(): Promise<{ items: { doc_id: string }[] }> {
  return request<{ items: { doc_id: string }[] }>("/api/documents");
}

export function compare(body: CompareRequest): Promise<CompareResponse> {
  return request<CompareResponse>("/api/compare", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
}

/** Page image URL, optionally with entity boxes outlined in red. */
export function imageUrl(docId: string, boxes?: number[]): string {
  const suffix = boxes && boxes.length ? `?boxes=${boxes.join(",")}` : "";
  return `/api/documents/${docId}/image${suffix}`;
}
