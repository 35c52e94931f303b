/**
 * Scenario files: a role plus an ordered list of steps the peer executes
 * verbatim against a rowe endpoint.
 *
 * Step kinds:
 *   {"send": {...}, "ttl": ms?}   transmit a JSON object, optionally with a
 *                                 rowe_ttl entry injected
 *   {"send_raw": "..."}           transmit an arbitrary string as one text
 *                                 frame (for malformed-input scenarios)
 *   {"expect": {...}}             the next inbound frame must contain every
 *                                 listed entry (subset match; the value
 *                                 "__any__" asserts presence only)
 *   {"reply_to_last": {...}}      send the body plus in_reply_to set to the
 *                                 message_id of the last expected frame
 *   {"delay": ms}                 sleep
 *   {"close": true}               close the connection
 */

import { readFileSync } from "node:fs";

export type Message = Record<string, unknown>;

export type Step =
  | { kind: "send"; message: Message; ttl?: number }
  | { kind: "send_raw"; text: string }
  | { kind: "expect"; expected: Message }
  | { kind: "reply_to_last"; body: Message }
  | { kind: "delay"; ms: number }
  | { kind: "close" };

export interface Scenario {
  role: "client" | "server";
  steps: Step[];
}

/** The wildcard expect value: the key must exist, the value is ignored. */
export const ANY = "__any__";

export class ScenarioError extends Error {}

function isPlainObject(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function parseStep(raw: unknown, index: number): Step {
  if (!isPlainObject(raw)) {
    throw new ScenarioError(`step ${index}: not an object`);
  }
  const keys = Object.keys(raw).filter((k) => k !== "ttl");
  if (keys.length !== 1) {
    throw new ScenarioError(`step ${index}: expected exactly one step key, got ${JSON.stringify(keys)}`);
  }
  const key = keys[0];
  const value = raw[key];
  switch (key) {
    case "send": {
      if (!isPlainObject(value)) {
        throw new ScenarioError(`step ${index}: "send" takes a JSON object`);
      }
      if ("ttl" in raw) {
        const ttl = raw["ttl"];
        if (typeof ttl !== "number" || !Number.isInteger(ttl) || ttl < 0) {
          throw new ScenarioError(`step ${index}: "ttl" must be a non-negative integer`);
        }
        return { kind: "send", message: value, ttl };
      }
      return { kind: "send", message: value };
    }
    case "send_raw":
      if (typeof value !== "string") {
        throw new ScenarioError(`step ${index}: "send_raw" takes a string`);
      }
      return { kind: "send_raw", text: value };
    case "expect":
      if (!isPlainObject(value)) {
        throw new ScenarioError(`step ${index}: "expect" takes a JSON object`);
      }
      return { kind: "expect", expected: value };
    case "reply_to_last":
      if (!isPlainObject(value)) {
        throw new ScenarioError(`step ${index}: "reply_to_last" takes a JSON object`);
      }
      return { kind: "reply_to_last", body: value };
    case "delay":
      if (typeof value !== "number" || !Number.isFinite(value) || value < 0) {
        throw new ScenarioError(`step ${index}: "delay" takes a non-negative number of ms`);
      }
      return { kind: "delay", ms: value };
    case "close":
      if (value !== true) {
        throw new ScenarioError(`step ${index}: "close" takes the value true`);
      }
      return { kind: "close" };
    default:
      throw new ScenarioError(`step ${index}: unknown step kind "${key}"`);
  }
}

export function parseScenario(data: unknown): Scenario {
  if (!isPlainObject(data)) {
    throw new ScenarioError("scenario file must contain a JSON object");
  }
  const role = data["role"];
  if (role !== "client" && role !== "server") {
    throw new ScenarioError(`"role" must be "client" or "server", got ${JSON.stringify(role)}`);
  }
  const rawSteps = data["steps"];
  if (!Array.isArray(rawSteps)) {
    throw new ScenarioError('"steps" must be an array');
  }
  return { role, steps: rawSteps.map(parseStep) };
}

export function loadScenario(path: string): Scenario {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (err) {
    throw new ScenarioError(`cannot read ${path}: ${(err as Error).message}`);
  }
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch (err) {
    throw new ScenarioError(`${path} is not valid JSON: ${(err as Error).message}`);
  }
  return parseScenario(data);
}

export function deepEqual(a: unknown, b: unknown): boolean {
  if (a === b) {
    return true;
  }
  if (Array.isArray(a) && Array.isArray(b)) {
    return a.length === b.length && a.every((item, i) => deepEqual(item, b[i]));
  }
  if (isPlainObject(a) && isPlainObject(b)) {
    const aKeys = Object.keys(a);
    const bKeys = Object.keys(b);
    return (
      aKeys.length === bKeys.length &&
      aKeys.every((k) => Object.prototype.hasOwnProperty.call(b, k) && deepEqual(a[k], b[k]))
    );
  }
  return false;
}

/**
 * Subset match: every entry of `expected` must be present in `got`.
 * Top-level values compare deep-equal, except the wildcard ANY which only
 * asserts the key exists (used for generated message ids and wire TTLs).
 */
export function matchesSubset(got: Message, expected: Message): boolean {
  return Object.entries(expected).every(([key, value]) => {
    if (!Object.prototype.hasOwnProperty.call(got, key)) {
      return false;
    }
    return value === ANY || deepEqual(got[key], value);
  });
}
