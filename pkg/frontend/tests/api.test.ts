import { describe, expect, it } from "vitest";

import { ApiClient, ApiRequestError } from "../src/api";
import { THREE_MODELS, jsonResponse, pngFile } from "./helpers";

describe("api client contract", () => {
  it("submits multipart jobs to POST /api/v1/jobs", async () => {
    let captured: { url: string; init?: RequestInit } | null = null;
    const client = new ApiClient("", async (input, init) => {
      captured = { url: String(input), init };
      return jsonResponse({ job_id: "abc" }, 202);
    });

    const res = await client.submitJob({
      content: pngFile("c.png"),
      style: pngFile("s.png"),
      model: "ast",
      params: { strength: 0.5 },
    });

    expect(res.job_id).toBe("abc");
    expect(captured!.url).toBe("/api/v1/jobs");
    expect(captured!.init?.method).toBe("POST");
    const form = captured!.init?.body as FormData;
    expect(form.get("model")).toBe("ast");
    expect((form.get("content") as File).name).toBe("c.png");
    expect((form.get("style") as File).name).toBe("s.png");
    expect(JSON.parse(form.get("params") as string)).toEqual({ strength: 0.5 });
  });

  it("omits the style part when not provided", async () => {
    let form: FormData | null = null;
    const client = new ApiClient("", async (_url, init) => {
      form = init?.body as FormData;
      return jsonResponse({ job_id: "x" }, 202);
    });
    await client.submitJob({ content: pngFile(), model: "cyclegan" });
    expect(form!.get("style")).toBeNull();
  });

  it("reads job status from GET /api/v1/jobs/{id}", async () => {
    const client = new ApiClient("", async (input) => {
      expect(String(input)).toBe("/api/v1/jobs/j42");
      return jsonResponse({ status: "RUNNING", submitted_at: 1 });
    });
    const doc = await client.getJob("j42");
    expect(doc.status).toBe("RUNNING");
  });

  it("lists models from GET /api/v1/models", async () => {
    const client = new ApiClient("", async (input) => {
      expect(String(input)).toBe("/api/v1/models");
      return jsonResponse(THREE_MODELS);
    });
    const models = await client.listModels();
    expect(models.map((m) => m.name)).toEqual(["ast", "cyclegan", "gatys"]);
  });

  it("surfaces service errors with status and message", async () => {
    const client = new ApiClient("", async () =>
      jsonResponse({ error: "unknown model 'bogus'" }, 404),
    );
    await expect(
      client.submitJob({ content: pngFile(), model: "gatys" }),
    ).rejects.toMatchObject({ status: 404, message: "unknown model 'bogus'" });
    const err = await client.getJob("nope").catch((e) => e);
    expect(err).toBeInstanceOf(ApiRequestError);
  });

  it("builds result URLs relative to the base", () => {
    const client = new ApiClient("http://host:9000");
    expect(client.resultUrl("/api/v1/jobs/j/result")).toBe(
      "http://host:9000/api/v1/jobs/j/result",
    );
  });
});
