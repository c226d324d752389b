/**
 * Records the golden transcript: canned requests against the stub backend,
 * with the exact response bytes. The committed transcript is replayed by
 * conformance checks on both sides of the protocol, byte for byte.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import net from "node:net";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { loadConfig } from "./config.js";
import { makeDenoiser } from "./denoiser.js";
import { AdapterServer } from "./server.js";

const here = dirname(fileURLToPath(import.meta.url));
const root = join(here, "..");

export const goldenRequests: unknown[] = [
  { id: 1, op: "score", prompt: "", t: 1, y: [0.0, 0.0, 0.0] },
  { id: 2, op: "score", prompt: "a man", t: 500, y: [0.1, -0.2, 0.3] },
  { id: 3, op: "score", prompt: "a woman", t: 500, y: [0.1, -0.2, 0.3] },
  { id: 4, op: "score", prompt: "a male mathematician", t: 999, y: [1.5, -2.25, 0.125] },
  { id: 5, op: "score", prompt: "a nurse", t: 1000, y: [-1.0, 1.0, -1.0] },
  { id: 6, op: "score", prompt: "café au lait", t: 250, y: [0.25, 0.5, 0.75] },
  { id: 7, op: "score", prompt: "a man", t: 0, y: [3.0, 2.0, 1.0] },
  { id: 8, op: "score", prompt: "x", t: 500, y: [0.1, 0.2] },
  { id: 9, op: "chat", prompt: "a man", t: 10, y: [0, 0, 0] },
  { id: 10, op: "score", prompt: "a man", t: 500, y: [0.1, -0.2, 0.3] },
];

async function main(): Promise<void> {
  const config = loadConfig(join(root, "config", "stub.json"));
  const server = new AdapterServer(makeDenoiser(config));
  const addr = await server.listen(0);

  const socket = net.createConnection(addr.port, addr.host);
  let buffer = "";
  const lines: string[] = [];
  let wake: (() => void) | null = null;
  socket.on("data", (chunk) => {
    buffer += chunk.toString("utf-8");
    for (;;) {
      const idx = buffer.indexOf("\n");
      if (idx === -1) break;
      lines.push(buffer.slice(0, idx));
      buffer = buffer.slice(idx + 1);
    }
    if (wake) wake();
  });
  const nextLine = async (): Promise<string> => {
    while (lines.length === 0) {
      await new Promise<void>((resolve) => (wake = resolve));
      wake = null;
    }
    return lines.shift() as string;
  };

  const entries: string[] = [];
  entries.push(JSON.stringify({ hello: await nextLine() }));
  for (const req of goldenRequests) {
    const send = JSON.stringify(req);
    socket.write(`${send}\n`);
    entries.push(JSON.stringify({ send, recv: await nextLine() }));
  }
  socket.end();
  await server.close();

  const out = `${entries.join("\n")}\n`;
  mkdirSync(join(root, "golden"), { recursive: true });
  writeFileSync(join(root, "golden", "stub-transcript.jsonl"), out);
  process.stderr.write(`recorded ${entries.length} transcript lines\n`);
}

void main();
