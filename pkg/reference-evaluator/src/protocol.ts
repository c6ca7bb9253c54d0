/**
 * Line-delimited JSON protocol over stdin/stdout.
 *
 * Requests:  {"id", "type": "meta"|"evaluate"|"distribution", "config"?,
 *             "proxy_steps"?, "calib_index"?, "layer"?, "bit"?}
 * Responses: {"id", "ok", "performance"?, "dist"?, "meta"?, "error"?}
 *
 * Requests are handled strictly one at a time; the host runs several
 * processes when it wants parallelism.
 */

import * as readline from "node:readline";
import { Config, ToyModel } from "./model.js";

type Json = Record<string, unknown>;

export function handleRequest(model: ToyModel, request: Json): Json {
  const id = typeof request.id === "number" ? request.id : 0;
  try {
    switch (request.type) {
      case "meta":
        return {
          id,
          ok: true,
          meta: {
            layers: model.layers,
            calib_size: model.calibSize,
            geometry: model.geometry(),
          },
        };
      case "evaluate": {
        const config = request.config as Config | undefined;
        if (!config || !Array.isArray(config.bits) || !Array.isArray(config.ranks)) {
          return { id, ok: false, error: "evaluate needs a config with bits and ranks" };
        }
        const steps = typeof request.proxy_steps === "number" ? request.proxy_steps : 0;
        if (steps < 0) {
          return { id, ok: false, error: "proxy_steps must be >= 0" };
        }
        return { id, ok: true, performance: model.evaluate(config, steps) };
      }
      case "distribution": {
        const calibIndex = request.calib_index;
        if (typeof calibIndex !== "number") {
          return { id, ok: false, error: "distribution needs calib_index" };
        }
        const layer = typeof request.layer === "number" ? request.layer : undefined;
        const bit = typeof request.bit === "number" ? request.bit : undefined;
        return { id, ok: true, dist: model.distribution(calibIndex, layer, bit) };
      }
      default:
        return { id, ok: false, error: `unknown request type ${JSON.stringify(request.type)}` };
    }
  } catch (err) {
    return { id, ok: false, error: err instanceof Error ? err.message : String(err) };
  }
}

export function serve(model: ToyModel, input: NodeJS.ReadableStream, output: NodeJS.WritableStream): Promise<void> {
  const rl = readline.createInterface({ input, crlfDelay: Infinity });
  return new Promise((resolve) => {
    rl.on("line", (line) => {
      const trimmed = line.trim();
      if (!trimmed) return;
      let request: Json;
      try {
        request = JSON.parse(trimmed) as Json;
      } catch (err) {
        output.write(
          JSON.stringify({ id: 0, ok: false, error: `malformed JSON: ${err}` }) + "\n",
        );
        return;
      }
      output.write(JSON.stringify(handleRequest(model, request)) + "\n");
    });
    rl.on("close", resolve);
  });
}
