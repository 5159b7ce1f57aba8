/**
 * Typed client for the editing service. The fetch function is injectable
 * so tests can run against recorded responses.
 */

import type { EditResult, GenerateResult, Health, Job, RefineResult } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ApiError {
  status: number;
  code: string;
  message: string;
}

async function raise(response: Response): Promise<never> {
  let code = "http_error";
  let message = response.statusText;
  try {
    const body = await response.json();
    if (body?.detail?.code) {
      code = body.detail.code;
      message = body.detail.message;
    }
  } catch {
    /* non-JSON error body */
  }
  throw { status: response.status, code, message } satisfies ApiError;
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
    private readonly pollIntervalMs = 250,
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) await raise(response);
    return (await response.json()) as T;
  }

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.base + path);
    if (!response.ok) await raise(response);
    return (await response.json()) as T;
  }

  health(): Promise<Health> {
    return this.get("/v1/health");
  }

  getJob<R>(id: string): Promise<Job<R>> {
    return this.get(`/v1/jobs/${id}`);
  }

  /** Poll a job until done/failed; resolves with the result payload. */
  async pollJob<R>(id: string, timeoutMs = 120_000): Promise<R> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const job = await this.getJob<R>(id);
      if (job.state === "done" && job.result !== null) return job.result;
      if (job.state === "failed") {
        throw { status: 0, code: job.error?.code ?? "job_failed", message: job.error?.message ?? "" } satisfies ApiError;
      }
      if (Date.now() > deadline) {
        throw { status: 0, code: "timeout", message: `job ${id} timed out` } satisfies ApiError;
      }
      await new Promise((resolve) => setTimeout(resolve, this.pollIntervalMs));
    }
  }

  async generate(prompt: string, seed = 0): Promise<GenerateResult> {
    const { job_id } = await this.post<{ job_id: string }>("/v1/generate", { prompt, seed });
    return this.pollJob<GenerateResult>(job_id);
  }

  async edit(imageB64: string, instruction: string, maskB64: string | null, seed = 0): Promise<EditResult> {
    const { job_id } = await this.post<{ job_id: string }>("/v1/edit", {
      image: imageB64,
      instruction,
      mask: maskB64,
      seed,
    });
    return this.pollJob<EditResult>(job_id);
  }

  async refine(
    prompt: string,
    imageB64: string | null,
    options: { rounds?: number; k?: number; candidates?: number; seed?: number } = {},
  ): Promise<RefineResult> {
    const { job_id } = await this.post<{ job_id: string }>("/v1/refine", {
      prompt,
      image: imageB64,
      rounds: options.rounds ?? 4,
      k: options.k ?? 16,
      candidates: options.candidates ?? 4,
      seed: options.seed ?? 0,
    });
    return this.pollJob<RefineResult>(job_id);
  }
}
