import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { PNG } from "pngjs";

import { Rng, hashSeed } from "../src/rng.js";

/** Write a small PNG with pixels drawn around a base brightness. */
export function writeToyImage(
  path: string,
  brightness: number,
  seed: number,
  size = 24
): void {
  const png = new PNG({ width: size, height: size });
  const rng = new Rng(seed >>> 0);
  for (let i = 0; i < size * size; i++) {
    const value = Math.max(
      0,
      Math.min(255, Math.round(brightness + 40 * (rng.next() - 0.5)))
    );
    png.data[i * 4] = value;
    png.data[i * 4 + 1] = value;
    png.data[i * 4 + 2] = Math.min(255, Math.round(value * 0.7));
    png.data[i * 4 + 3] = 255;
  }
  writeFileSync(path, PNG.sync.write(png));
}

/** A toy image-folder dataset: classes differ in mean brightness. */
export function writeToyDataset(
  root: string,
  classes: { name: string; brightness: number; images: number }[]
): void {
  for (const cls of classes) {
    const dir = join(root, cls.name);
    mkdirSync(dir, { recursive: true });
    for (let i = 0; i < cls.images; i++) {
      writeToyImage(
        join(dir, `img_${String(i).padStart(2, "0")}.png`),
        cls.brightness,
        hashSeed(cls.name, i)
      );
    }
  }
}
