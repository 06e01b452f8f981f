/** Server-reported failure; status distinguishes 409 conflicts from 422 edits. */
export class ApiError extends Error {
    constructor(status, detail) {
        super(`HTTP ${status}: ${detail}`);
        this.status = status;
        this.detail = detail;
    }
}
async function request(url, init) {
    const response = await fetch(url, init);
    if (!response.ok) {
        let detail = response.statusText;
        try {
            const body = (await response.json());
            if (body.detail)
                detail = body.detail;
        }
        catch {
            // non-JSON error body; keep the status text
        }
        throw new ApiError(response.status, detail);
    }
    return (await response.json());
}
export function listQa(filter = {}) {
    const params = new URLSearchParams();
    if (filter.status)
        params.set("status", filter.status);
    if (filter.doc_id)
        params.set("doc_id", filter.doc_id);
    if (filter.page)
        params.set("page", String(filter.page));
    if (filter.page_size)
        params.set("page_size", String(filter.page_size));
    const query = params.toString();
    return request(`/api/qa${query ? `?${query}` : ""}`);
}
export async function statusCounts() {
    const body = await request("/api/session");
    return body.counts;
}
export function approve(qaId) {
    return request(`/api/qa/${qaId}/approve`, { method: "POST" });
}
export function reject(qaId) {
    return request(`/api/qa/${qaId}/reject`, { method: "POST" });
}
export function edit(qaId, field, newValue) {
    return request(`/api/qa/${qaId}`, {
        method: "PATCH",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ field, new_value: newValue }),
    });
}
export function listEntities(docId) {
    return request(`/api/entities/${docId}`);
}
export function listDocuments() {
    return request("/api/documents");
}
export function compare(body) {
    return request("/api/compare", {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
    });
}
/** Page image URL, optionally with entity boxes outlined in red. */
export function imageUrl(docId, boxes) {
    const suffix = boxes && boxes.length ? `?boxes=${boxes.join(",")}` : "";
    return `/api/documents/${docId}/image${suffix}`;
}
