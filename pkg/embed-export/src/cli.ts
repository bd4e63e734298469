#!/usr/bin/env node
/**
 * embed-export: write image-patch and text embeddings as EMB1 files.
 *
 *   embed-export export-patches --manifest m.jsonl --out patches.emb1 \
 *       [--kernel 224] [--stride 64] [--dim 64] [--no-normalize]
 *   embed-export export-texts --manifest m.jsonl --out texts.emb1 \
 *       [--dim 64] [--no-normalize]
 *
 * Flags override the manifest's config line. Kernel and stride must match
 * the consuming pipeline's configuration.
 */

import { DEFAULT_OPTIONS, exportPatches, exportTexts } from "./export";
import { parseManifest } from "./manifest";

interface Args {
  command: string;
  manifest?: string;
  out?: string;
  kernel?: number;
  stride?: number;
  dim?: number;
  normalize: boolean;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { command: argv[0] ?? "", normalize: true };
  for (let i = 1; i < argv.length; i += 1) {
    const flag = argv[i];
    switch (flag) {
      case "--manifest":
        args.manifest = argv[++i];
        break;
      case "--out":
        args.out = argv[++i];
        break;
      case "--kernel":
        args.kernel = Number(argv[++i]);
        break;
      case "--stride":
        args.stride = Number(argv[++i]);
        break;
      case "--dim":
        args.dim = Number(argv[++i]);
        break;
      case "--no-normalize":
        args.normalize = false;
        break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  return args;
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
    if (!["export-patches", "export-texts"].includes(args.command)) {
      throw new Error("expected subcommand export-patches or export-texts");
    }
    if (!args.manifest || !args.out) {
      throw new Error("--manifest and --out are required");
    }
    const manifest = parseManifest(args.manifest);
    const options = {
      kernel: args.kernel,
      stride: args.stride,
      dim: args.dim,
      normalize: args.normalize,
    };
    const effectiveDim = args.dim ?? manifest.dim ?? DEFAULT_OPTIONS.dim;
    if (args.command === "export-patches") {
      const count = exportPatches(manifest, args.out, options);
      const kernel = args.kernel ?? manifest.kernel ?? DEFAULT_OPTIONS.kernel;
      const stride = args.stride ?? manifest.stride ?? DEFAULT_OPTIONS.stride;
      console.log(
        `export-patches: wrote ${count} patch embeddings ` +
          `(kernel ${kernel}, stride ${stride}, dim ${effectiveDim}) -> ${args.out}`,
      );
    } else {
      const count = exportTexts(manifest, args.out, options);
      console.log(`export-texts: wrote ${count} text embeddings (dim ${effectiveDim}) -> ${args.out}`);
    }
  } catch (error) {
    console.error(`embed-export: error: ${error instanceof Error ? error.message : error}`);
    return 1;
  }
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
