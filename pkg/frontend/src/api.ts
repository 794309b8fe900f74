import type { JobStatusDoc, ModelDoc, ModelName, SubmitResponse } from "./types";

export interface SubmitJobInput {
  content: File;
  style?: File;
  model: ModelName;
  params?: Record<string, unknown>;
}

export class ApiRequestError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = typeof fetch;

/**
 * Thin typed client over the documented /api/v1 endpoints. `fetch` is
 * injectable so tests can run against a scripted transport.
 */
export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async parseError(res: Response): Promise<never> {
    let message = `HTTP ${res.status}`;
    try {
      const doc = (await res.json()) as { error?: string };
      if (doc.error) message = doc.error;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiRequestError(res.status, message);
  }

  async submitJob(input: SubmitJobInput): Promise<SubmitResponse> {
    const form = new FormData();
    form.append("content", input.content);
    if (input.style) form.append("style", input.style);
    form.append("model", input.model);
    if (input.params && Object.keys(input.params).length > 0) {
      form.append("params", JSON.stringify(input.params));
    }
    const res = await this.fetchFn(`${this.baseUrl}/api/v1/jobs`, {
      method: "POST",
      body: form,
    });
    if (!res.ok) await this.parseError(res);
    return (await res.json()) as SubmitResponse;
  }

  async getJob(jobId: string): Promise<JobStatusDoc> {
    const res = await this.fetchFn(`${this.baseUrl}/api/v1/jobs/${jobId}`);
    if (!res.ok) await this.parseError(res);
    return (await res.json()) as JobStatusDoc;
  }

  resultUrl(relative: string): string {
    return `${this.baseUrl}${relative}`;
  }

  async listModels(): Promise<ModelDoc[]> {
    const res = await this.fetchFn(`${this.baseUrl}/api/v1/models`);
    if (!res.ok) await this.parseError(res);
    return (await res.json()) as ModelDoc[];
  }
}
