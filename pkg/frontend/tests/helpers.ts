import type { JobStatusDoc, ModelDoc } from "../src/types";

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export function pngFile(name = "img.png", bytes = 64): File {
  return new File([new Uint8Array(bytes)], name, { type: "image/png" });
}

export const THREE_MODELS: ModelDoc[] = [
  {
    name: "ast",
    kind: "AST",
    description: "feed-forward arbitrary style transfer",
    default_params: { strength: 1.0 },
  },
  {
    name: "cyclegan",
    kind: "CYCLEGAN",
    description: "unpaired domain translation",
    default_params: {},
  },
  {
    name: "gatys",
    kind: "GATYS",
    description: "iterative optimization transfer",
    default_params: { iterations: 20 },
  },
];

/** Scripted fetch: answers submit then a fixed sequence of job polls. */
export class ScriptedTransport {
  calls: { url: string; method: string; body?: FormData }[] = [];
  private pollDocs: JobStatusDoc[];
  private pollIndex = 0;

  constructor(
    public jobId = "job-1",
    pollDocs: JobStatusDoc[] = [],
  ) {
    this.pollDocs = pollDocs;
  }

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = String(input);
    const method = init?.method ?? "GET";
    this.calls.push({ url, method, body: init?.body as FormData | undefined });

    if (url.endsWith("/api/v1/jobs") && method === "POST") {
      return jsonResponse({ job_id: this.jobId }, 202);
    }
    if (url.includes("/api/v1/jobs/") && method === "GET") {
      const doc = this.pollDocs[Math.min(this.pollIndex, this.pollDocs.length - 1)];
      this.pollIndex += 1;
      return jsonResponse(doc);
    }
    if (url.endsWith("/api/v1/models")) {
      return jsonResponse(THREE_MODELS);
    }
    throw new Error(`unexpected request: ${method} ${url}`);
  };

  pollCount(): number {
    return this.calls.filter((c) => c.url.includes("/api/v1/jobs/") && c.method === "GET").length;
  }
}

/** Manually stepped scheduler standing in for setTimeout in store tests. */
export class ManualScheduler {
  private queue: (() => void)[] = [];

  schedule = (fn: () => void): unknown => {
    this.queue.push(fn);
    return this.queue.length - 1;
  };

  cancel = (): void => undefined;

  async tick(): Promise<void> {
    const fns = this.queue.splice(0);
    for (const fn of fns) fn();
    // yield to the event loop until the fetch/json chains started by the
    // callbacks settle and have re-scheduled their next poll
    await new Promise((resolve) => setTimeout(resolve, 0));
    await new Promise((resolve) => setTimeout(resolve, 0));
  }

  pending(): number {
    return this.queue.length;
  }
}
