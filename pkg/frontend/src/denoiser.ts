/**
 * Denoiser backends. A backend predicts the noise component eps of a
 * latent y at timestep t, conditioned on a prompt string. Swapping in a
 * real model means implementing this one interface; the adapter does no
 * editing or guidance of its own.
 */

import type { BackendConfig } from "./config.js";

export interface Denoiser {
  readonly m: number;
  readonly T: number;
  /** Must be deterministic for fixed inputs. May reject bad prompts. */
  epsilon(prompt: string, t: number, y: number[]): number[] | Promise<number[]>;
}

export class UnknownPromptError extends Error {}

/**
 * Deterministic stand-in model used for protocol tests and transcripts.
 * Uses only exactly-specified IEEE 754 arithmetic (+, -, *, /) so any
 * runtime reproduces its outputs bit for bit. Protocol timesteps map
 * directly onto scheduler indices 0..T.
 */
export class StubDenoiser implements Denoiser {
  readonly m: number;
  readonly T: number;
  private readonly allowed: Set<string> | null;

  constructor(config: BackendConfig) {
    this.m = config.m;
    this.T = config.T;
    this.allowed = config.promptPassthrough ? null : new Set(config.prompts ?? []);
  }

  epsilon(prompt: string, t: number, y: number[]): number[] {
    if (this.allowed !== null && !this.allowed.has(prompt)) {
      throw new UnknownPromptError(`prompt not in model vocabulary: ${JSON.stringify(prompt)}`);
    }
    // small integer hash of the prompt, kept exact in doubles
    let code = 0;
    for (let i = 0; i < prompt.length; i++) {
      code = (code * 31 + prompt.charCodeAt(i)) % 1000003;
    }
    const bias = code / 1000003 - 0.5;
    const scale = t / this.T;
    return y.map((v, i) => v * scale + bias / (i + 1));
  }
}

export function makeDenoiser(config: BackendConfig): Denoiser {
  if (config.model === "stub") {
    return new StubDenoiser(config);
  }
  throw new Error(
    `no backend for model ${JSON.stringify(config.model)}; implement the Denoiser interface`
  );
}
