import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { DashboardStore } from "../src/jobFlow";
import { ManualScheduler, ScriptedTransport, pngFile } from "./helpers";

function makeStore(transport: ScriptedTransport, scheduler = new ManualScheduler()) {
  const api = new ApiClient("", transport.fetch);
  const store = new DashboardStore(api, {
    schedule: scheduler.schedule,
    cancel: scheduler.cancel,
    pollIntervalMs: 1000,
  });
  return { store, scheduler };
}

describe("dashboard job flow", () => {
  it("issues no API call before both required files are selected", async () => {
    const transport = new ScriptedTransport();
    const { store } = makeStore(transport);

    expect(store.canStart()).toBe(false);
    await store.start();
    expect(transport.calls.length).toBe(0);

    store.setContent(pngFile("c.png"));
    expect(store.canStart()).toBe(false); // gatys still needs a style
    await store.start();
    expect(transport.calls.length).toBe(0);
  });

  it("cyclegan requires only the content image", () => {
    const transport = new ScriptedTransport();
    const { store } = makeStore(transport);
    store.setModel("cyclegan");
    store.setContent(pngFile("c.png"));
    expect(store.canStart()).toBe(true);
  });

  it("walks QUEUED -> RUNNING -> DONE and renders the result URL", async () => {
    const transport = new ScriptedTransport("j7", [
      { status: "QUEUED", submitted_at: 1 },
      { status: "RUNNING", submitted_at: 1 },
      { status: "DONE", submitted_at: 1, finished_at: 2, result_url: "/api/v1/jobs/j7/result" },
    ]);
    const { store, scheduler } = makeStore(transport);
    store.setContent(pngFile("c.png"));
    store.setStyle(pngFile("s.png"));

    await store.start();
    expect(store.getState().phase).toBe("polling");
    await scheduler.tick(); // poll 1: QUEUED
    expect(store.getState().jobStatus).toBe("QUEUED");
    await scheduler.tick(); // poll 2: RUNNING
    expect(store.getState().jobStatus).toBe("RUNNING");
    await scheduler.tick(); // poll 3: DONE
    const s = store.getState();
    expect(s.phase).toBe("done");
    expect(s.resultUrl).toBe("/api/v1/jobs/j7/result");
  });

  it("stops polling permanently once a terminal status arrives", async () => {
    const transport = new ScriptedTransport("j1", [
      { status: "DONE", submitted_at: 1, result_url: "/api/v1/jobs/j1/result" },
    ]);
    const { store, scheduler } = makeStore(transport);
    store.setContent(pngFile());
    store.setStyle(pngFile());
    await store.start();
    await scheduler.tick();
    expect(store.getState().phase).toBe("done");
    expect(scheduler.pending()).toBe(0); // nothing scheduled after terminal
    await scheduler.tick();
    expect(transport.pollCount()).toBe(1);
  });

  it("shows the job error inline when the job FAILED", async () => {
    const transport = new ScriptedTransport("j2", [
      { status: "FAILED", submitted_at: 1, error: "diverged at iteration 3" },
    ]);
    const { store, scheduler } = makeStore(transport);
    store.setContent(pngFile());
    store.setStyle(pngFile());
    await store.start();
    await scheduler.tick();
    const s = store.getState();
    expect(s.phase).toBe("failed");
    expect(s.errorMessage).toContain("diverged");
    expect(scheduler.pending()).toBe(0);
  });

  it("renders a service rejection (e.g. unknown model) without crashing", async () => {
    const transport = new ScriptedTransport();
    transport.fetch = async () =>
      new Response(JSON.stringify({ error: "unknown model" }), { status: 404 });
    const { store } = makeStore(transport);
    store.setContent(pngFile());
    store.setStyle(pngFile());
    await store.start();
    const s = store.getState();
    expect(s.phase).toBe("failed");
    expect(s.errorMessage).toBe("unknown model");
  });

  it("raises a retryable network banner when the transport dies mid-poll", async () => {
    let failNext = false;
    const transport = new ScriptedTransport("j3", [
      { status: "QUEUED", submitted_at: 1 },
      { status: "DONE", submitted_at: 1, result_url: "/api/v1/jobs/j3/result" },
    ]);
    const realFetch = transport.fetch;
    transport.fetch = async (input, init) => {
      if (failNext) {
        failNext = false;
        throw new TypeError("network down");
      }
      return realFetch(input, init);
    };
    const { store, scheduler } = makeStore(transport);
    store.setContent(pngFile());
    store.setStyle(pngFile());
    await store.start();
    await scheduler.tick(); // QUEUED
    failNext = true;
    await scheduler.tick(); // network failure
    expect(store.getState().networkError).toContain("network down");
    expect(scheduler.pending()).toBe(0); // paused, not spinning

    store.retry();
    await scheduler.tick(); // resumes polling -> DONE
    expect(store.getState().phase).toBe("done");
  });

  it("warns before upload when a file exceeds the limit", () => {
    const transport = new ScriptedTransport();
    const api = new ApiClient("", transport.fetch);
    const store = new DashboardStore(api, { maxUploadBytes: 100 });
    store.setContent(pngFile("big.png", 5000));
    expect(store.getState().oversizeWarning).toContain("big.png");
    store.setContent(pngFile("small.png", 10));
    expect(store.getState().oversizeWarning).toBeNull();
  });

  it("sends the strength parameter only for ast", async () => {
    const transport = new ScriptedTransport("j4", [
      { status: "DONE", submitted_at: 1, result_url: "/r" },
    ]);
    const { store } = makeStore(transport);
    store.setModel("ast");
    store.setStrength(0.25);
    store.setContent(pngFile());
    store.setStyle(pngFile());
    await store.start();
    const submit = transport.calls.find((c) => c.method === "POST")!;
    expect(JSON.parse(submit.body!.get("params") as string)).toEqual({ strength: 0.25 });
  });

  it("blocks double submission while a job is in flight", async () => {
    const transport = new ScriptedTransport("j5", [{ status: "QUEUED", submitted_at: 1 }]);
    const { store } = makeStore(transport);
    store.setContent(pngFile());
    store.setStyle(pngFile());
    await store.start();
    expect(store.canStart()).toBe(false);
    await store.start();
    expect(transport.calls.filter((c) => c.method === "POST").length).toBe(1);
  });
});
