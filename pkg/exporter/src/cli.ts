#!/usr/bin/env node
/**
 * export --model <id> --prompt <text> --image <path> --out <trace> --max-new-tokens N
 *
 * Writes the trace file and prints one JSON line per step with the
 * exporter-side visual attention score, so the decoding engine's
 * recomputation can be diffed against it:
 *
 *   {"step": 0, "chosen": 17, "vas": [0.31, ...]}
 *
 * Exit codes: 0 success, 1 runtime error, 2 usage error.
 */

import { HookUnsupported, ModelLoadError } from "./errors.js";
import { runExport } from "./export.js";
import { availableModels } from "./registry.js";

interface Args {
  model: string;
  prompt: string;
  image: string;
  out: string;
  maxNewTokens: number;
}

function usage(): string {
  return (
    "usage: daid-export export --model <id> --prompt <text> --image <path> " +
    "--out <trace> [--max-new-tokens N]\n" +
    `models: ${availableModels().join(", ")}`
  );
}

function parseArgs(argv: string[]): Args {
  if (argv[0] !== "export") {
    throw new UsageError(`unknown subcommand '${argv[0] ?? ""}'`);
  }
  const values: Record<string, string> = {};
  for (let i = 1; i < argv.length; i += 2) {
    const flag = argv[i];
    if (!flag.startsWith("--")) throw new UsageError(`unexpected argument '${flag}'`);
    const value = argv[i + 1];
    if (value === undefined) throw new UsageError(`flag ${flag} needs a value`);
    values[flag.slice(2)] = value;
  }
  for (const required of ["model", "prompt", "image", "out"]) {
    if (!(required in values)) throw new UsageError(`missing --${required}`);
  }
  const known = new Set(["model", "prompt", "image", "out", "max-new-tokens"]);
  for (const key of Object.keys(values)) {
    if (!known.has(key)) throw new UsageError(`unknown flag --${key}`);
  }
  const maxNewTokens = values["max-new-tokens"] ? Number(values["max-new-tokens"]) : 8;
  if (!Number.isInteger(maxNewTokens) || maxNewTokens < 1) {
    throw new UsageError("--max-new-tokens must be a positive integer");
  }
  return {
    model: values.model,
    prompt: values.prompt,
    image: values.image,
    out: values.out,
    maxNewTokens,
  };
}

class UsageError extends Error {}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    console.error(usage());
    return 2;
  }
  try {
    const result = runExport({
      model: args.model,
      prompt: args.prompt,
      imagePath: args.image,
      outPath: args.out,
      maxNewTokens: args.maxNewTokens,
    });
    result.vas.forEach((profile, step) => {
      console.log(JSON.stringify({ step, chosen: result.tokens[step], vas: profile }));
    });
    console.error(
      `wrote ${result.header.stepCount} steps ` +
        `(${result.header.layers} layers, ${result.header.heads} heads, ` +
        `${result.header.vocab} vocab) to ${args.out}`
    );
    return 0;
  } catch (err) {
    if (err instanceof ModelLoadError || err instanceof HookUnsupported) {
      console.error(`error: ${err.name}: ${err.message}`);
    } else {
      console.error(`error: ${(err as Error).message}`);
    }
    return 1;
  }
}

import { pathToFileURL } from "node:url";

if (process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)));
}
