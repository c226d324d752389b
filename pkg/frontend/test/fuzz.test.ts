import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { backendConfigSchema } from "../src/config.js";
import { StubDenoiser } from "../src/denoiser.js";
import { responseSchema } from "../src/framing.js";
import { AdapterServer } from "../src/server.js";
import { connect } from "./client.js";

const config = backendConfigSchema.parse({ model: "stub", m: 3, T: 1000 });
const stub = new StubDenoiser(config);

let server: AdapterServer;
let port: number;

beforeAll(async () => {
  server = new AdapterServer(stub);
  port = (await server.listen(0)).port;
});

afterAll(async () => {
  await server.close();
});

// deterministic PRNG so a failing case is reproducible
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function randomFrame(rnd: () => number): string {
  const pick = rnd();
  if (pick < 0.2) {
    // raw byte noise
    let s = "";
    const len = 1 + Math.floor(rnd() * 40);
    for (let i = 0; i < len; i++) s += String.fromCharCode(32 + Math.floor(rnd() * 1000));
    return s;
  }
  if (pick < 0.35) {
    // truncated JSON
    const full = JSON.stringify({ id: 1, op: "score", prompt: "x", t: 1, y: [0, 0, 0] });
    return full.slice(0, 1 + Math.floor(rnd() * (full.length - 2)));
  }
  if (pick < 0.5) {
    // valid JSON, wrong top-level type
    return JSON.stringify([rnd(), "x", null].slice(0, 1 + Math.floor(rnd() * 3)));
  }
  if (pick < 0.7) {
    // object with mangled fields
    const fields: Record<string, unknown> = {
      id: [null, "a", 3, {}, []][Math.floor(rnd() * 5)],
      op: ["score", "chat", 7, null][Math.floor(rnd() * 4)],
      prompt: ["ok", 5, null, ["a"]][Math.floor(rnd() * 4)],
      t: [1, -3, 1.5, 1e9, "1", null][Math.floor(rnd() * 6)],
      y: [[0, 0, 0], [0], "y", 4, null, [0, "a", 0]][Math.floor(rnd() * 6)],
    };
    if (rnd() < 0.3) delete fields[["id", "op", "prompt", "t", "y"][Math.floor(rnd() * 5)]];
    return JSON.stringify(fields);
  }
  if (pick < 0.85) {
    // deeply nested junk
    let v: unknown = rnd();
    for (let i = 0; i < 20; i++) v = rnd() < 0.5 ? [v] : { k: v };
    return JSON.stringify({ id: 1, op: "score", prompt: "x", t: 1, y: v });
  }
  // well-formed request (the server must keep answering these correctly)
  return JSON.stringify({ id: 42, op: "score", prompt: "p", t: 5, y: [rnd(), rnd(), rnd()] });
}

describe("malformed-input fuzz", () => {
  it("answers 10k fuzzed frames with schema-valid responses and survives", async () => {
    const rnd = mulberry32(20260823);
    const frames: string[] = [];
    while (frames.length < 10000) {
      const frame = randomFrame(rnd).replace(/[\n\r]/g, " ");
      if (frame.trim()) frames.push(frame);
    }
    const client = await connect(port);
    await client.nextLine(); // hello
    // pipeline in batches to keep socket buffers reasonable
    const batch = 500;
    for (let i = 0; i < frames.length; i += batch) {
      client.sendRaw(`${frames.slice(i, i + batch).join("\n")}\n`);
      for (let j = i; j < Math.min(i + batch, frames.length); j++) {
        const resp = JSON.parse(await client.nextLine());
        expect(() => responseSchema.parse(resp)).not.toThrow();
      }
    }
    // server is still fully functional afterwards
    client.sendLine(JSON.stringify({ id: 1, op: "score", prompt: "a man", t: 500, y: [0.1, -0.2, 0.3] }));
    const resp = JSON.parse(await client.nextLine());
    expect(resp).toEqual({ id: 1, eps: stub.epsilon("a man", 500, [0.1, -0.2, 0.3]) });
    client.close();
  }, 60000);
});
