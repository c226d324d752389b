#!/usr/bin/env node
/** `conceptlab-adapter serve --config backend.json [--port N]` */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { loadConfig } from "./config.js";
import { makeDenoiser } from "./denoiser.js";
import { AdapterServer } from "./server.js";

async function serve(configPath: string, port: number, host: string): Promise<void> {
  let server: AdapterServer;
  try {
    const config = loadConfig(configPath);
    server = new AdapterServer(makeDenoiser(config));
  } catch (e) {
    // model/config failure: refuse to listen, leave a diagnostic
    process.stderr.write(`conceptlab-adapter: ${(e as Error).message}\n`);
    process.exitCode = 1;
    return;
  }
  const addr = await server.listen(port, host);
  // machine-readable address on stdout so callers can connect to port 0
  process.stdout.write(`${JSON.stringify(addr)}\n`);
  process.stderr.write(`conceptlab-adapter: serving on ${addr.host}:${addr.port}\n`);
}

void yargs(hideBin(process.argv))
  .command(
    "serve",
    "serve a denoiser behind the score-oracle protocol",
    (y) =>
      y
        .option("config", { type: "string", demandOption: true, describe: "backend config JSON" })
        .option("port", { type: "number", default: 0 })
        .option("host", { type: "string", default: "127.0.0.1" }),
    (argv) => serve(argv.config, argv.port, argv.host)
  )
  .demandCommand(1)
  .strict()
  .help()
  .parse();
