import { ApiClient, ApiRequestError } from "./api";
import type { JobStatus, ModelName } from "./types";

export type Phase = "idle" | "submitting" | "polling" | "done" | "failed";

export interface DashboardState {
  model: ModelName;
  strength: number;
  contentFile: File | null;
  styleFile: File | null;
  phase: Phase;
  jobId: string | null;
  jobStatus: JobStatus | null;
  resultUrl: string | null;
  /** job-level failure, rendered inline next to the result slot */
  errorMessage: string | null;
  /** transport-level failure, rendered as a banner with a retry action */
  networkError: string | null;
  oversizeWarning: string | null;
}

export interface DashboardOptions {
  pollIntervalMs?: number;
  maxUploadBytes?: number;
  schedule?: (fn: () => void, ms: number) => unknown;
  cancel?: (handle: unknown) => void;
}

const initialState = (): DashboardState => ({
  model: "gatys",
  strength: 1.0,
  contentFile: null,
  styleFile: null,
  phase: "idle",
  jobId: null,
  jobStatus: null,
  resultUrl: null,
  errorMessage: null,
  networkError: null,
  oversizeWarning: null,
});

/**
 * Framework-free state machine behind the dashboard.
 *
 * Invariants it enforces:
 *  - no API call is issued before the files the selected model requires
 *    are chosen (content always; style unless the model is cyclegan);
 *  - polling runs at a fixed interval while the job is QUEUED/RUNNING and
 *    stops permanently once a terminal status arrives;
 *  - a transport failure pauses the flow behind a retry banner instead of
 *    crashing or spinning.
 */
export class DashboardStore {
  private state: DashboardState = initialState();
  private listeners = new Set<(s: DashboardState) => void>();
  private pollIntervalMs: number;
  private maxUploadBytes: number;
  private schedule: (fn: () => void, ms: number) => unknown;
  private cancelTimer: (handle: unknown) => void;
  private pendingTimer: unknown = null;
  private terminal = false;

  constructor(
    private api: ApiClient,
    opts: DashboardOptions = {},
  ) {
    this.pollIntervalMs = opts.pollIntervalMs ?? 1000;
    this.maxUploadBytes = opts.maxUploadBytes ?? 10 * 1024 * 1024;
    this.schedule = opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.cancelTimer = opts.cancel ?? ((h) => clearTimeout(h as number));
  }

  getState(): DashboardState {
    return this.state;
  }

  subscribe(fn: (s: DashboardState) => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private set(patch: Partial<DashboardState>) {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  private warnIfOversized() {
    const files = [this.state.contentFile, this.state.styleFile];
    const big = files.find((f) => f && f.size > this.maxUploadBytes);
    this.set({
      oversizeWarning: big
        ? `${big.name} is ${(big.size / 1e6).toFixed(1)} MB, above the upload limit; the server will reject it`
        : null,
    });
  }

  setContent(file: File | null) {
    this.set({ contentFile: file });
    this.warnIfOversized();
  }

  setStyle(file: File | null) {
    this.set({ styleFile: file });
    this.warnIfOversized();
  }

  setModel(model: ModelName) {
    this.set({ model });
  }

  setStrength(strength: number) {
    this.set({ strength });
  }

  styleRequired(): boolean {
    return this.state.model !== "cyclegan";
  }

  canStart(): boolean {
    const s = this.state;
    if (s.phase === "submitting" || s.phase === "polling") return false;
    if (!s.contentFile) return false;
    if (this.styleRequired() && !s.styleFile) return false;
    return true;
  }

  /** Submit the job; a no-op (and no network) while gated. */
  async start(): Promise<void> {
    if (!this.canStart()) return;
    const s = this.state;
    this.stopPolling();
    this.terminal = false;
    this.set({
      phase: "submitting",
      jobId: null,
      jobStatus: null,
      resultUrl: null,
      errorMessage: null,
      networkError: null,
    });
    try {
      const params = s.model === "ast" ? { strength: s.strength } : {};
      const res = await this.api.submitJob({
        content: s.contentFile as File,
        style: this.styleRequired() ? (s.styleFile as File) : undefined,
        model: s.model,
        params,
      });
      this.set({ phase: "polling", jobId: res.job_id, jobStatus: "QUEUED" });
      this.queuePoll(0);
    } catch (err) {
      if (err instanceof ApiRequestError) {
        // the service rejected the job (bad model, bad params, 413, ...)
        this.set({ phase: "failed", errorMessage: err.message });
      } else {
        this.set({ phase: "idle", networkError: describe(err) });
      }
    }
  }

  /** Resume after a transport failure: re-poll, or allow re-submission. */
  retry(): void {
    this.set({ networkError: null });
    if (this.state.jobId && !this.terminal) {
      this.set({ phase: "polling" });
      this.queuePoll(0);
    }
  }

  private queuePoll(delayMs: number) {
    this.pendingTimer = this.schedule(() => void this.pollOnce(), delayMs);
  }

  private stopPolling() {
    if (this.pendingTimer !== null) {
      this.cancelTimer(this.pendingTimer);
      this.pendingTimer = null;
    }
  }

  private async pollOnce(): Promise<void> {
    const jobId = this.state.jobId;
    if (!jobId || this.terminal) return;
    try {
      const doc = await this.api.getJob(jobId);
      if (doc.status === "DONE") {
        this.terminal = true;
        this.set({
          phase: "done",
          jobStatus: doc.status,
          resultUrl: doc.result_url ? this.api.resultUrl(doc.result_url) : null,
        });
        return;
      }
      if (doc.status === "FAILED") {
        this.terminal = true;
        this.set({
          phase: "failed",
          jobStatus: doc.status,
          errorMessage: doc.error ?? "job failed",
        });
        return;
      }
      this.set({ jobStatus: doc.status });
      this.queuePoll(this.pollIntervalMs);
    } catch (err) {
      if (err instanceof ApiRequestError) {
        this.terminal = true;
        this.set({ phase: "failed", errorMessage: err.message });
      } else {
        this.set({ networkError: describe(err) });
      }
    }
  }

  reset(): void {
    this.stopPolling();
    this.terminal = false;
    this.state = initialState();
    for (const fn of this.listeners) fn(this.state);
  }
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
