/**
 * Image-folder datasets and session split specs.
 *
 * A dataset is a directory with one subdirectory per class. A split
 * spec is a JSON file listing which classes belong to which session:
 *
 *   {
 *     "sessions": [["albatross", "auklet"], ["bunting", "cardinal"]],
 *     "test_fraction": 0.25,
 *     "seed": 0
 *   }
 *
 * Session 0 is the labeled one. Class IDs are assigned globally in
 * session order, so they stay consistent across a dataset's sessions.
 */

import { readFileSync, readdirSync, statSync } from "node:fs";
import { extname, join } from "node:path";

import jpeg from "jpeg-js";
import { PNG } from "pngjs";

import { Rng, hashSeed } from "./rng.js";

export interface SplitSpec {
  sessions: string[][];
  testFraction: number;
  seed: number;
}

export interface DecodedImage {
  width: number;
  height: number;
  /** RGBA, 4 bytes per pixel. */
  pixels: Uint8Array;
  path: string;
}

export interface ClassFiles {
  classId: number;
  className: string;
  session: number;
  train: string[];
  test: string[];
}

export class DatasetError extends Error {}

export function loadSplitSpec(path: string): SplitSpec {
  const raw = JSON.parse(readFileSync(path, "utf-8"));
  if (!Array.isArray(raw.sessions) || raw.sessions.length === 0) {
    throw new DatasetError("split spec needs a non-empty 'sessions' list");
  }
  const seen = new Set<string>();
  for (const session of raw.sessions) {
    if (!Array.isArray(session) || session.length === 0) {
      throw new DatasetError("each session must be a non-empty class list");
    }
    for (const name of session) {
      if (seen.has(name)) {
        throw new DatasetError(`class ${name} appears in two sessions`);
      }
      seen.add(name);
    }
  }
  return {
    sessions: raw.sessions,
    testFraction: raw.test_fraction ?? 0.25,
    seed: raw.seed ?? 0,
  };
}

const IMAGE_EXTENSIONS = new Set([".png", ".jpg", ".jpeg"]);

function listImages(dir: string): string[] {
  return readdirSync(dir)
    .filter((name) => IMAGE_EXTENSIONS.has(extname(name).toLowerCase()))
    .sort()
    .map((name) => join(dir, name));
}

/**
 * Resolve the split spec against the dataset directory and divide each
 * class's images into train/test with a per-class seeded shuffle.
 */
export function planSplits(root: string, spec: SplitSpec): ClassFiles[] {
  const missing: string[] = [];
  const plan: ClassFiles[] = [];
  let classId = 0;
  spec.sessions.forEach((classNames, session) => {
    for (const className of classNames) {
      const dir = join(root, className);
      let files: string[] = [];
      try {
        if (statSync(dir).isDirectory()) files = listImages(dir);
      } catch {
        // handled below as missing
      }
      if (files.length === 0) {
        missing.push(className);
        classId += 1;
        continue;
      }
      const rng = new Rng(hashSeed(spec.seed, className));
      const shuffled = rng.shuffle([...files]);
      let testCount = Math.floor(shuffled.length * spec.testFraction);
      testCount = Math.min(testCount, shuffled.length - 1); // at least 1 train image
      plan.push({
        classId,
        className,
        session,
        train: shuffled.slice(testCount).sort(),
        test: shuffled.slice(0, testCount).sort(),
      });
      classId += 1;
    }
  });
  if (missing.length > 0) {
    throw new DatasetError(
      `classes with no images under ${root}: ${missing.join(", ")}`
    );
  }
  return plan;
}

export function decodeImage(path: string): DecodedImage {
  const bytes = readFileSync(path);
  const ext = extname(path).toLowerCase();
  try {
    if (ext === ".png") {
      const png = PNG.sync.read(bytes);
      return { width: png.width, height: png.height, pixels: png.data, path };
    }
    const img = jpeg.decode(bytes, { useTArray: true, maxMemoryUsageInMB: 512 });
    return { width: img.width, height: img.height, pixels: img.data, path };
  } catch (err) {
    throw new DatasetError(`corrupt image ${path}: ${(err as Error).message}`);
  }
}

/** Decode a list of files, collecting per-file failures. */
export function decodeAll(paths: string[]): DecodedImage[] {
  const images: DecodedImage[] = [];
  const failures: string[] = [];
  for (const path of paths) {
    try {
      images.push(decodeImage(path));
    } catch (err) {
      failures.push((err as Error).message);
    }
  }
  if (failures.length > 0) {
    throw new DatasetError(failures.join("\n"));
  }
  return images;
}
