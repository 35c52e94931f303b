#!/usr/bin/env node
/**
 * rowe-peer <scenario.json> <host> <port>
 *
 * Runs a scripted conformance scenario against a rowe endpoint.
 * Exit codes: 0 all steps passed, 1 an `expect` step mismatched,
 * 2 transport error / unusable scenario file / bad usage.
 */

import { loadScenario, ScenarioError } from "./scenario.js";
import { MismatchError, runScenario, TransportError } from "./peer.js";

function usage(): never {
  process.stderr.write("usage: rowe-peer <scenario.json> <host> <port>\n");
  process.exit(2);
}

const args = process.argv.slice(2);
if (args.length !== 3) {
  usage();
}
const [file, host, portText] = args;
const port = Number(portText);
if (!Number.isInteger(port) || port < 1 || port > 65535) {
  usage();
}

const sink = { line: (entry: Record<string, unknown>) => console.log(JSON.stringify(entry)) };

try {
  const scenario = loadScenario(file);
  await runScenario(scenario, host, port, sink);
  process.exitCode = 0;
} catch (err) {
  if (err instanceof MismatchError) {
    process.stderr.write(`mismatch: ${err.message}\n`);
    process.exitCode = 1;
  } else if (err instanceof TransportError || err instanceof ScenarioError) {
    process.stderr.write(`error: ${err.message}\n`);
    process.exitCode = 2;
  } else {
    process.stderr.write(`error: ${(err as Error).stack ?? err}\n`);
    process.exitCode = 2;
  }
}
