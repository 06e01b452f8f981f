export type ReviewStatus = "pending" | "approved" | "rejected" | "edited";

export interface VerifierVerdict {
  relevant_and_clear: boolean;
  answer_valid: boolean;
  rationale: string;
  passed: boolean;
}

export interface QAPair {
  qa_id: string;
  doc_id: string;
  question: string;
  answer: string;
  gold_entity_index: number;
  verifier: VerifierVerdict;
  review_status: ReviewStatus;
  edit_history: unknown[];
}

export interface QaListResponse {
  items: QAPair[];
  total: number;
}

export interface EntityInfo {
  index: number;
  content: string;
  bbox: [number, number, number, number];
}

export interface IterationRecord {
  t: number;
  topk_indices: number[];
  retrieved_contents: string[];
  annotated_image_ref: string;
  annotated_image_url?: string;
  answer: string;
}

export interface InferenceTrace {
  question: string;
  doc_id: string;
  iterations: IterationRecord[];
  final_answer: string;
  stop_reason: string;
  strategy: string;
}

export interface CompareRequest {
  question: string;
  doc_id: string;
  strategies: string[];
  k: number;
  iterations: number;
}

export interface CompareResponse {
  traces: Record<string, InferenceTrace>;
}

export interface StatusCounts {
  pending: number;
  approved: number;
  rejected: number;
  edited: number;
}
