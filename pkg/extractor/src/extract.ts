/**
 * Orchestration: image folders in, per-session embedding containers and
 * a manifest out.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { AdaptConfig, DEFAULT_ADAPT, identityAdapter, trainAdapter } from "./adapt.js";
import { Backbone } from "./backbone.js";
import { EmbeddingContainer, writeContainer } from "./container.js";
import { ClassFiles, SplitSpec, decodeAll, planSplits } from "./dataset.js";

export interface ExtractorConfig {
  backbone: Backbone;
  datasetRoot: string;
  split: SplitSpec;
  outDir: string;
  adapt: boolean;
  adaptConfig?: AdaptConfig;
  batchSize?: number;
}

export interface ExtractResult {
  manifestPath: string;
  sessionCounts: { train: number; test: number }[];
  dim: number;
  adaptHeadAccuracy: number | null;
}

interface EmbeddedClass extends ClassFiles {
  trainFeatures: Float64Array[];
  testFeatures: Float64Array[];
}

async function embedFiles(
  backbone: Backbone,
  paths: string[],
  batchSize: number
): Promise<Float64Array[]> {
  const out: Float64Array[] = [];
  for (let start = 0; start < paths.length; start += batchSize) {
    const images = decodeAll(paths.slice(start, start + batchSize));
    out.push(...(await backbone.embed(images)));
  }
  return out;
}

function toContainer(rows: Float64Array[], labels: number[]): EmbeddingContainer {
  const dim = rows[0].length;
  const data = new Float32Array(rows.length * dim);
  rows.forEach((row, i) => data.set(Float32Array.from(row), i * dim));
  return { count: rows.length, dim, data, labels: Int32Array.from(labels) };
}

export async function extract(cfg: ExtractorConfig): Promise<ExtractResult> {
  const batchSize = cfg.batchSize ?? 64;
  const plan = planSplits(cfg.datasetRoot, cfg.split);
  mkdirSync(cfg.outDir, { recursive: true });

  const embedded: EmbeddedClass[] = [];
  for (const cls of plan) {
    embedded.push({
      ...cls,
      trainFeatures: await embedFiles(cfg.backbone, cls.train, batchSize),
      testFeatures: await embedFiles(cfg.backbone, cls.test, batchSize),
    });
  }

  // Optional supervised adaptation on the labeled session, applied to
  // every session's embeddings before export.
  let adapter = identityAdapter();
  let adaptAccuracy: number | null = null;
  if (cfg.adapt) {
    const base = embedded.filter((cls) => cls.session === 0);
    const baseIds = base.map((cls) => cls.classId);
    const compact = new Map(baseIds.map((id, i) => [id, i]));
    const features = base.flatMap((cls) => cls.trainFeatures);
    const labels = base.flatMap((cls) =>
      cls.trainFeatures.map(() => compact.get(cls.classId) as number)
    );
    adapter = trainAdapter(features, labels, baseIds.length, {
      ...DEFAULT_ADAPT,
      ...cfg.adaptConfig,
      seed: cfg.adaptConfig?.seed ?? cfg.split.seed,
    });
    adaptAccuracy = adapter.headAccuracy;
    for (const cls of embedded) {
      cls.trainFeatures = cls.trainFeatures.map(adapter.apply);
      cls.testFeatures = cls.testFeatures.map(adapter.apply);
    }
  }

  const sessionCount = cfg.split.sessions.length;
  const sessionCounts: { train: number; test: number }[] = [];
  const manifestSessions: object[] = [];
  const jointRows: Float64Array[] = [];
  const jointLabels: number[] = [];
  for (let t = 0; t < sessionCount; t++) {
    const classes = embedded.filter((cls) => cls.session === t);
    const trainRows = classes.flatMap((cls) => cls.trainFeatures);
    const trainLabels = classes.flatMap((cls) =>
      cls.trainFeatures.map(() => cls.classId)
    );
    const testRows = classes.flatMap((cls) => cls.testFeatures);
    const testLabels = classes.flatMap((cls) => cls.testFeatures.map(() => cls.classId));
    if (trainRows.length === 0) {
      throw new Error(`session ${t} has no training embeddings`);
    }
    writeContainer(join(cfg.outDir, `train_${t}.fccd`), toContainer(trainRows, trainLabels));
    if (testRows.length > 0) {
      writeContainer(join(cfg.outDir, `test_${t}.fccd`), toContainer(testRows, testLabels));
    }
    jointRows.push(...testRows);
    jointLabels.push(...testLabels);
    sessionCounts.push({ train: trainRows.length, test: testRows.length });
    manifestSessions.push({
      path: `train_${t}.fccd`,
      labeled: t === 0,
      class_count: classes.length,
    });
  }
  if (jointRows.length === 0) {
    throw new Error("no test embeddings; increase test_fraction or add images");
  }
  writeContainer(join(cfg.outDir, "test_joint.fccd"), toContainer(jointRows, jointLabels));

  const manifest = {
    seed: cfg.split.seed,
    test: "test_joint.fccd",
    sessions: manifestSessions,
    options: {},
  };
  const manifestPath = join(cfg.outDir, "manifest.json");
  writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + "\n");

  return {
    manifestPath,
    sessionCounts,
    dim: cfg.backbone.dim,
    adaptHeadAccuracy: adaptAccuracy,
  };
}
