#!/usr/bin/env node
/**
 * CLI: extract --model <id> --data <root> --splits <spec.json>
 *              --out <dir> [--adapt] [--batch-size N]
 */

import { parseArgs } from "node:util";

import { loadBackbone } from "./backbone.js";
import { loadSplitSpec } from "./dataset.js";
import { extract } from "./extract.js";

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      model: { type: "string" },
      data: { type: "string" },
      splits: { type: "string" },
      out: { type: "string" },
      adapt: { type: "boolean", default: false },
      "batch-size": { type: "string", default: "64" },
    },
  });
  for (const key of ["model", "data", "splits", "out"] as const) {
    if (!values[key]) {
      console.error(
        "usage: fccd-extract --model <toy:D|tfjs:ref> --data <root> " +
          "--splits <spec.json> --out <dir> [--adapt] [--batch-size N]"
      );
      return 2;
    }
  }
  const result = await extract({
    backbone: loadBackbone(values.model as string),
    datasetRoot: values.data as string,
    split: loadSplitSpec(values.splits as string),
    outDir: values.out as string,
    adapt: values.adapt as boolean,
    batchSize: Number(values["batch-size"]),
  });
  result.sessionCounts.forEach(({ train, test }, t) => {
    console.log(`session ${t}: train ${train}  test ${test}`);
  });
  if (result.adaptHeadAccuracy !== null) {
    console.log(`adaptation head accuracy ${(100 * result.adaptHeadAccuracy).toFixed(1)}%`);
  }
  console.log(`manifest ${result.manifestPath}`);
  return 0;
}

main()
  .then((code) => process.exit(code))
  .catch((err) => {
    console.error(`error: ${err.message}`);
    process.exit(2);
  });
