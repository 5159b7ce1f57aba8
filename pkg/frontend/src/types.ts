/** Wire types of the editing service (JSON over HTTP). */

export type JobState = "queued" | "running" | "done" | "failed";

export interface Job<R> {
  id: string;
  kind: string;
  state: JobState;
  result: R | null;
  error: { code: string; message: string } | null;
}

export interface GenerateResult {
  image: string; // base64 PNG
  tokens: number[];
  logprob_sum: number;
}

export interface EditResult {
  image: string;
  l_e: number;
  steps: number;
  positions: number[];
  logprob_sum: number;
  outside_checksum_source: string;
  outside_checksum_result: string;
}

export interface RefinePoint {
  image: string;
  reward: number;
  accepted: boolean;
}

export interface RefineResult {
  trajectory: RefinePoint[];
}

export interface Health {
  checkpoints: {
    model: { config_hash: string } | null;
    critic: { config_hash: string } | null;
  };
  config: {
    model: Record<string, unknown>;
    tokenizer: { image_h: number; image_w: number; patch: number };
  } | null;
}
