/**
 * Wire framing for the score-oracle protocol (version 1).
 *
 * Frames are UTF-8 JSON objects, one per line. The server opens with a
 * hello frame advertising (version, m, T); afterwards every request gets
 * exactly one response carrying either "eps" or "error".
 */

import { z } from "zod";

export const PROTOCOL_VERSION = 1;

export type ErrorCode =
  | "bad_json"
  | "unknown_op"
  | "bad_request"
  | "bad_dimension"
  | "unknown_prompt"
  | "internal";

export const scoreRequestSchema = z.object({
  id: z.union([z.number(), z.string(), z.null()]),
  op: z.literal("score"),
  prompt: z.string(),
  t: z.number().int(),
  y: z.array(z.number()),
});

export type ScoreRequest = z.infer<typeof scoreRequestSchema>;

export const responseSchema = z.union([
  z.object({ id: z.union([z.number(), z.string(), z.null()]), eps: z.array(z.number()) }),
  z.object({
    id: z.union([z.number(), z.string(), z.null()]),
    error: z.object({ code: z.string(), msg: z.string() }),
  }),
]);

export const helloSchema = z.object({
  op: z.literal("hello"),
  version: z.number().int(),
  m: z.number().int().positive(),
  T: z.number().int().positive(),
});

export function encodeFrame(value: unknown): string {
  return `${JSON.stringify(value)}\n`;
}

export function helloFrame(m: number, T: number): string {
  return encodeFrame({ op: "hello", version: PROTOCOL_VERSION, m, T });
}

export function errorFrame(id: unknown, code: ErrorCode, msg: string): string {
  const safeId = typeof id === "number" || typeof id === "string" ? id : null;
  return encodeFrame({ id: safeId, error: { code, msg } });
}

export type ParsedLine =
  | { kind: "ok"; value: unknown }
  | { kind: "bad_json"; msg: string };

/** Incremental line splitter; parse failures come back as values, never throws. */
export class LineDecoder {
  private buffer = "";

  push(chunk: string): ParsedLine[] {
    this.buffer += chunk;
    const out: ParsedLine[] = [];
    for (;;) {
      const idx = this.buffer.indexOf("\n");
      if (idx === -1) break;
      const line = this.buffer.slice(0, idx);
      this.buffer = this.buffer.slice(idx + 1);
      if (!line.trim()) continue;
      out.push(parseLine(line));
    }
    return out;
  }
}

export function parseLine(line: string): ParsedLine {
  let value: unknown;
  try {
    value = JSON.parse(line);
  } catch (e) {
    return { kind: "bad_json", msg: `malformed frame: ${(e as Error).message}` };
  }
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    return { kind: "bad_json", msg: "frame is not a JSON object" };
  }
  return { kind: "ok", value };
}
