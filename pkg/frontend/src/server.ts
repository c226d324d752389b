/**
 * TCP server speaking the score-oracle protocol on behalf of a denoiser.
 *
 * One request in flight per connection (responses go out in request
 * order); multiple connections are allowed and their model calls are
 * serialized through a single queue. Malformed input of any kind is
 * answered with an error frame, never a crash or a dropped connection.
 */

import net from "node:net";

import type { Denoiser } from "./denoiser.js";
import { UnknownPromptError } from "./denoiser.js";
import {
  LineDecoder,
  ScoreRequest,
  encodeFrame,
  errorFrame,
  helloFrame,
  scoreRequestSchema,
} from "./framing.js";

export interface Address {
  host: string;
  port: number;
}

export class AdapterServer {
  private readonly server: net.Server;
  private modelQueue: Promise<unknown> = Promise.resolve();

  constructor(private readonly denoiser: Denoiser) {
    this.server = net.createServer((socket) => this.handleConnection(socket));
  }

  listen(port = 0, host = "127.0.0.1"): Promise<Address> {
    return new Promise((resolve, reject) => {
      this.server.once("error", reject);
      this.server.listen(port, host, () => {
        const addr = this.server.address() as net.AddressInfo;
        resolve({ host: addr.address, port: addr.port });
      });
    });
  }

  close(): Promise<void> {
    return new Promise((resolve) => this.server.close(() => resolve()));
  }

  /** All model calls, across every connection, run one at a time. */
  private withModel<T>(fn: () => T | Promise<T>): Promise<T> {
    const run = this.modelQueue.then(fn);
    this.modelQueue = run.catch(() => undefined);
    return run;
  }

  private handleConnection(socket: net.Socket): void {
    socket.setNoDelay(true);
    socket.on("error", () => socket.destroy());
    socket.write(helloFrame(this.denoiser.m, this.denoiser.T));
    const decoder = new LineDecoder();
    // per-connection chain keeps one request in flight and preserves order
    let pending: Promise<void> = Promise.resolve();
    socket.on("data", (chunk) => {
      for (const parsed of decoder.push(chunk.toString("utf-8"))) {
        pending = pending.then(async () => {
          const reply =
            parsed.kind === "bad_json"
              ? errorFrame(null, "bad_json", parsed.msg)
              : await this.respond(parsed.value);
          if (!socket.destroyed) socket.write(reply);
        });
      }
    });
  }

  private async respond(frame: unknown): Promise<string> {
    const obj = frame as Record<string, unknown>;
    const id = obj.id;
    if (obj.op !== "score") {
      return errorFrame(id, "unknown_op", `op ${JSON.stringify(obj.op ?? null)}`);
    }
    const parsed = scoreRequestSchema.safeParse(obj);
    if (!parsed.success) {
      const issues = parsed.error.issues
        .map((i) => `${i.path.join(".") || "(root)"}: ${i.message}`)
        .join("; ");
      return errorFrame(id, "bad_request", issues);
    }
    const req: ScoreRequest = parsed.data;
    if (req.y.length !== this.denoiser.m) {
      return errorFrame(id, "bad_dimension", `y has ${req.y.length} coords, need ${this.denoiser.m}`);
    }
    if (req.t < 0 || req.t > this.denoiser.T) {
      return errorFrame(id, "bad_request", `t=${req.t} outside 0..${this.denoiser.T}`);
    }
    try {
      const eps = await this.withModel(() => this.denoiser.epsilon(req.prompt, req.t, req.y));
      if (!Array.isArray(eps) || eps.length !== this.denoiser.m || eps.some((v) => !Number.isFinite(v))) {
        return errorFrame(id, "internal", "backend returned a malformed epsilon");
      }
      return encodeFrame({ id: req.id, eps });
    } catch (e) {
      if (e instanceof UnknownPromptError) {
        return errorFrame(id, "unknown_prompt", e.message);
      }
      return errorFrame(id, "internal", (e as Error).message);
    }
  }
}
