import { describe, expect, it } from "vitest";

import { ApiClient, type FetchLike } from "../src/api.js";
import type { Job } from "../src/types.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

/** Scripted fetch: each matching request pops the next canned response. */
function scriptedFetch(script: Array<{ match: string; response: Response }>): FetchLike {
  return async (url) => {
    const index = script.findIndex((s) => url.includes(s.match));
    if (index < 0) throw new Error(`unexpected request ${url}`);
    return script.splice(index, 1)[0].response;
  };
}

describe("ApiClient", () => {
  it("submits an edit and polls the job to completion", async () => {
    const doneJob: Job<{ image: string; steps: number }> = {
      id: "J1", kind: "edit", state: "done",
      result: { image: "abc", steps: 4 }, error: null,
    };
    const fetchFn = scriptedFetch([
      { match: "/v1/edit", response: jsonResponse({ job_id: "J1" }) },
      { match: "/v1/jobs/J1", response: jsonResponse({ ...doneJob, state: "running", result: null }) },
      { match: "/v1/jobs/J1", response: jsonResponse(doneJob) },
    ]);
    const client = new ApiClient("", fetchFn, 1);
    const result = await client.edit("imgb64", "recolor the square to blue", null, 3);
    expect(result.steps).toBe(4);
  });

  it("surfaces server error codes", async () => {
    const fetchFn = scriptedFetch([
      { match: "/v1/edit", response: jsonResponse({ detail: { code: "bad_image", message: "nope" } }, 400) },
    ]);
    const client = new ApiClient("", fetchFn, 1);
    await expect(client.edit("zzz", "remove the bar", null)).rejects.toMatchObject({
      status: 400,
      code: "bad_image",
    });
  });

  it("rejects when a job fails", async () => {
    const fetchFn = scriptedFetch([
      { match: "/v1/refine", response: jsonResponse({ job_id: "J2" }) },
      { match: "/v1/jobs/J2", response: jsonResponse({
        id: "J2", kind: "refine", state: "failed", result: null,
        error: { code: "bad_request", message: "boom" } }) },
    ]);
    const client = new ApiClient("", fetchFn, 1);
    await expect(client.refine("prompt", null)).rejects.toMatchObject({ code: "bad_request" });
  });
});
