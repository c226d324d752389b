import { readFileSync } from "node:fs";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { backendConfigSchema } from "../src/config.js";
import { StubDenoiser } from "../src/denoiser.js";
import { AdapterServer } from "../src/server.js";
import { connect } from "./client.js";

const here = new URL("..", import.meta.url).pathname;
const transcriptPath = join(here, "golden", "stub-transcript.jsonl");

let server: AdapterServer;
let port: number;

beforeAll(async () => {
  server = new AdapterServer(
    new StubDenoiser(backendConfigSchema.parse({ model: "stub", m: 3, T: 1000 }))
  );
  port = (await server.listen(0)).port;
});

afterAll(async () => {
  await server.close();
});

describe("golden transcript", () => {
  it("replays byte-for-byte against a fresh server", async () => {
    const entries = readFileSync(transcriptPath, "utf-8")
      .split("\n")
      .filter((line) => line.trim())
      .map((line) => JSON.parse(line));
    expect(entries.length).toBe(11); // hello + 10 request/response pairs
    const client = await connect(port);
    for (const entry of entries) {
      if ("hello" in entry) {
        expect(await client.nextLine()).toBe(entry.hello);
      } else {
        client.sendLine(entry.send);
        expect(await client.nextLine()).toBe(entry.recv);
      }
    }
    client.close();
  });

  it("matches the copy bundled with the engine's fixtures", () => {
    const bundled = join(here, "..", "src", "conceptlab", "fixtures", "golden", "stub-transcript.jsonl");
    expect(readFileSync(bundled, "utf-8")).toBe(readFileSync(transcriptPath, "utf-8"));
  });
});
