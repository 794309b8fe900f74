/** Wire types for the /api/v1 JSON contract. */

export type ModelName = "gatys" | "ast" | "cyclegan";

export type JobStatus = "QUEUED" | "RUNNING" | "DONE" | "FAILED";

export interface SubmitResponse {
  job_id: string;
}

export interface JobStatusDoc {
  status: JobStatus;
  submitted_at: number;
  finished_at?: number;
  error?: string;
  result_url?: string;
}

export interface ModelDoc {
  name: string;
  kind: string;
  description: string;
  default_params: Record<string, unknown>;
}

export interface HealthDoc {
  status: string;
  queue_depth: number;
  workers_busy: number;
}

export interface ApiError {
  error: string;
}
