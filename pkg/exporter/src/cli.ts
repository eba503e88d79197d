#!/usr/bin/env node
/** ltd-export: convert an array-bundle directory into an LTD dataset. */

import { resolve } from "node:path";
import { existsSync, realpathSync } from "node:fs";
import { fileURLToPath } from "node:url";

import { ExporterError, loadBundleSet } from "./bundle.js";
import { exportLtd } from "./ltd.js";

function usage(): never {
  console.error(
    "usage: ltd-export --in <bundle-dir|index.json> --out <file.ltd> [--source TAG]",
  );
  process.exit(2);
}

function parseArgs(argv: string[]): { input: string; out: string; source: string } {
  let input = "";
  let out = "";
  let source = "exporter";
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case "--in":
        input = argv[++i] ?? "";
        break;
      case "--out":
        out = argv[++i] ?? "";
        break;
      case "--source":
        source = argv[++i] ?? "";
        break;
      case "-h":
      case "--help":
        usage();
      default:
        console.error(`ltd-export: unknown argument ${argv[i]}`);
        usage();
    }
  }
  if (!input || !out) {
    usage();
  }
  return { input, out, source };
}

export function main(argv: string[]): number {
  const { input, out, source } = parseArgs(argv);
  let indexPath = resolve(input);
  if (!indexPath.endsWith(".json")) {
    indexPath = resolve(indexPath, "index.json");
  }
  if (!existsSync(indexPath)) {
    console.error(`ltd-export: error: no index at ${indexPath}`);
    return 3;
  }
  try {
    const set = loadBundleSet(indexPath);
    const { transitions, trajectories } = exportLtd(set, out, source);
    console.error(
      `ltd-export: wrote ${trajectories} trajectories (${transitions} transitions, d=${set.d}) to ${out}`,
    );
    return 0;
  } catch (e) {
    if (e instanceof ExporterError) {
      console.error(`ltd-export: error: ${e.message}`);
      return 3;
    }
    throw e;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  realpathSync(fileURLToPath(import.meta.url)) === realpathSync(process.argv[1]);
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
