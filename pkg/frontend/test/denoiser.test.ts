import { describe, expect, it } from "vitest";

import { backendConfigSchema } from "../src/config.js";
import { StubDenoiser, UnknownPromptError, makeDenoiser } from "../src/denoiser.js";

const base = backendConfigSchema.parse({ model: "stub", m: 3, T: 1000 });

describe("StubDenoiser", () => {
  it("is deterministic", () => {
    const d = new StubDenoiser(base);
    const a = d.epsilon("a man", 500, [0.1, -0.2, 0.3]);
    const b = d.epsilon("a man", 500, [0.1, -0.2, 0.3]);
    expect(a).toEqual(b);
  });

  it("responds to prompt and timestep", () => {
    const d = new StubDenoiser(base);
    const y = [0.1, -0.2, 0.3];
    expect(d.epsilon("a man", 500, y)).not.toEqual(d.epsilon("a woman", 500, y));
    expect(d.epsilon("a man", 500, y)).not.toEqual(d.epsilon("a man", 400, y));
  });

  it("enforces the vocabulary when passthrough is off", () => {
    const cfg = backendConfigSchema.parse({
      model: "stub",
      m: 2,
      T: 10,
      promptPassthrough: false,
      prompts: ["a man"],
    });
    const d = new StubDenoiser(cfg);
    expect(d.epsilon("a man", 5, [0, 0])).toHaveLength(2);
    expect(() => d.epsilon("a woman", 5, [0, 0])).toThrow(UnknownPromptError);
  });
});

describe("makeDenoiser", () => {
  it("builds the stub and rejects unknown models", () => {
    expect(makeDenoiser(base)).toBeInstanceOf(StubDenoiser);
    expect(() => makeDenoiser({ ...base, model: "sd-v1.5" })).toThrow(/no backend/);
  });
});
