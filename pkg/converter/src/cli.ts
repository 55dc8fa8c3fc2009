#!/usr/bin/env node
/**
 * convert-queries    upstream query/answer pickles -> per-shape engine JSON
 * convert-embeddings torch/.npz checkpoint         -> binary embedding container
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { extractEmbeddings, loadTensors, validateCounts, writeContainer } from "./embeddings";
import { loads } from "./pickle";
import { convertQueries } from "./queries";

interface Args {
  positional: string[];
  flags: Map<string, string | boolean>;
}

function parseArgs(argv: string[]): Args {
  const positional: string[] = [];
  const flags = new Map<string, string | boolean>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg.startsWith("--")) {
      const key = arg.slice(2);
      const next = argv[i + 1];
      if (next !== undefined && !next.startsWith("--")) {
        flags.set(key, next);
        i++;
      } else {
        flags.set(key, true);
      }
    } else {
      positional.push(arg);
    }
  }
  return { positional, flags };
}

function requireFlag(args: Args, name: string): string {
  const value = args.flags.get(name);
  if (typeof value !== "string") throw new Error(`--${name} FILE is required`);
  return value;
}

function intFlag(args: Args, name: string): number | undefined {
  const value = args.flags.get(name);
  if (value === undefined) return undefined;
  const n = parseInt(String(value), 10);
  if (Number.isNaN(n)) throw new Error(`--${name} expects an integer`);
  return n;
}

function readPickle(file: string) {
  return loads(fs.readFileSync(file));
}

function cmdConvertQueries(args: Args): object {
  const queriesPath = requireFlag(args, "queries");
  const outDir = requireFlag(args, "out");
  const easyPath = args.flags.get("easy");
  const hardPath = args.flags.get("hard");
  const queries = readPickle(queriesPath);
  const easy = typeof easyPath === "string" ? readPickle(easyPath) : undefined;
  const hard = typeof hardPath === "string" ? readPickle(hardPath) : undefined;
  const result = convertQueries(queries, easy, hard, {
    entities: intFlag(args, "entities"),
    relations: intFlag(args, "relations"),
  });
  fs.mkdirSync(outDir, { recursive: true });
  const counts: Record<string, number> = {};
  for (const [shape, records] of result.byShape) {
    counts[shape] = records.length;
    fs.writeFileSync(path.join(outDir, `${shape}.json`), JSON.stringify(records));
  }
  for (const message of result.errors.slice(0, 20)) {
    process.stderr.write(`error: ${message}\n`);
  }
  const summary = {
    counts,
    skipped_structures: result.skippedStructures,
    errors: result.errors.length,
  };
  if (result.errors.length > 0) {
    process.stdout.write(JSON.stringify(summary) + "\n");
    process.exit(1);
  }
  return summary;
}

function cmdConvertEmbeddings(args: Args): object {
  const checkpoint = requireFlag(args, "checkpoint");
  const outFile = requireFlag(args, "out");
  const tensors = loadTensors(fs.readFileSync(checkpoint));
  const entityKey = args.flags.get("entity-key");
  const relationKey = args.flags.get("relation-key");
  const set = extractEmbeddings(tensors, {
    entityKey: typeof entityKey === "string" ? entityKey : undefined,
    relationKey: typeof relationKey === "string" ? relationKey : undefined,
  });
  validateCounts(set, intFlag(args, "entities"), intFlag(args, "relations"));
  fs.mkdirSync(path.dirname(path.resolve(outFile)), { recursive: true });
  fs.writeFileSync(outFile, writeContainer(set));
  return {
    entities: set.entRe.rows,
    relations: set.relRe.rows,
    dim: set.entRe.cols,
    source_dtype: set.entRe.sourceDtype,
    out: outFile,
  };
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  const args = parseArgs(rest);
  try {
    let summary: object;
    if (command === "convert-queries") {
      summary = cmdConvertQueries(args);
    } else if (command === "convert-embeddings") {
      summary = cmdConvertEmbeddings(args);
    } else {
      throw new Error(
        `usage: atomshap-convert {convert-queries|convert-embeddings} [--flags]`
      );
    }
    process.stdout.write(JSON.stringify(summary) + "\n");
    return 0;
  } catch (err) {
    process.stderr.write(
      JSON.stringify({ error: (err as Error).constructor.name, message: (err as Error).message }) + "\n"
    );
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
