/**
 * Pluggable embedding backbones.
 *
 * `toy:<dim>` is a deterministic, dependency-free backbone for tests
 * and plumbing work: images are downsampled to a 16x16 grayscale patch
 * and pushed through a fixed seeded random projection with a tanh
 * nonlinearity. It is content-sensitive but obviously not semantic.
 *
 * `tfjs:<model-url-or-path>` loads a TensorFlow.js graph model and uses
 * its pooled output; it requires `@tensorflow/tfjs` to be installed and
 * model weights to be reachable, so it is an opt-in path.
 */

import type { DecodedImage } from "./dataset.js";
import { Rng, hashSeed } from "./rng.js";

export interface Backbone {
  readonly id: string;
  readonly dim: number;
  embed(images: DecodedImage[]): Promise<Float64Array[]>;
}

const PATCH = 16;

/** Average-pool an RGBA image to a PATCH x PATCH grayscale grid in [0, 1]. */
export function grayscalePatch(image: DecodedImage): Float64Array {
  const out = new Float64Array(PATCH * PATCH);
  const counts = new Float64Array(PATCH * PATCH);
  for (let y = 0; y < image.height; y++) {
    const py = Math.min(PATCH - 1, Math.floor((y * PATCH) / image.height));
    for (let x = 0; x < image.width; x++) {
      const px = Math.min(PATCH - 1, Math.floor((x * PATCH) / image.width));
      const offset = (y * image.width + x) * 4;
      const gray =
        (0.299 * image.pixels[offset] +
          0.587 * image.pixels[offset + 1] +
          0.114 * image.pixels[offset + 2]) /
        255.0;
      out[py * PATCH + px] += gray;
      counts[py * PATCH + px] += 1;
    }
  }
  for (let i = 0; i < out.length; i++) {
    if (counts[i] > 0) out[i] /= counts[i];
  }
  return out;
}

class ToyBackbone implements Backbone {
  readonly id: string;
  readonly dim: number;
  private readonly weights: Float64Array; // dim x PATCH^2
  private readonly bias: Float64Array;

  constructor(dim: number) {
    this.id = `toy:${dim}`;
    this.dim = dim;
    const rng = new Rng(hashSeed("toy-backbone", dim));
    this.weights = new Float64Array(dim * PATCH * PATCH);
    for (let i = 0; i < this.weights.length; i++) {
      this.weights[i] = rng.gaussian() / Math.sqrt(PATCH);
    }
    this.bias = new Float64Array(dim);
    for (let i = 0; i < dim; i++) this.bias[i] = 0.1 * rng.gaussian();
  }

  async embed(images: DecodedImage[]): Promise<Float64Array[]> {
    return images.map((image) => {
      const patch = grayscalePatch(image);
      const feature = new Float64Array(this.dim);
      for (let d = 0; d < this.dim; d++) {
        let acc = this.bias[d];
        const row = d * patch.length;
        for (let i = 0; i < patch.length; i++) {
          acc += this.weights[row + i] * patch[i];
        }
        feature[d] = Math.tanh(acc);
      }
      return feature;
    });
  }
}

class TfjsBackbone implements Backbone {
  readonly id: string;
  dim = 0;
  private model: unknown = null;

  constructor(private readonly modelRef: string) {
    this.id = `tfjs:${modelRef}`;
  }

  async embed(images: DecodedImage[]): Promise<Float64Array[]> {
    // Optional dependency: resolved at runtime only.
    const moduleName = "@tensorflow/tfjs";
    let tf;
    try {
      tf = await import(moduleName);
    } catch {
      throw new Error(
        "the tfjs backbone needs '@tensorflow/tfjs' installed; " +
          "run `npm install @tensorflow/tfjs` or use a toy:<dim> backbone"
      );
    }
    if (this.model === null) {
      this.model = await tf.loadGraphModel(this.modelRef);
    }
    const model = this.model as { predict(input: unknown): unknown };
    const out: Float64Array[] = [];
    for (const image of images) {
      const input = tf
        .browser!.fromPixels(
          { data: image.pixels, width: image.width, height: image.height },
          3
        )
        .resizeBilinear([224, 224])
        .toFloat()
        .div(255.0)
        .expandDims(0);
      const result = model.predict(input) as {
        dataSync(): Float32Array;
        dispose(): void;
      };
      const values = result.dataSync();
      out.push(Float64Array.from(values));
      this.dim = values.length;
      result.dispose();
      (input as { dispose(): void }).dispose();
    }
    return out;
  }
}

export function loadBackbone(modelId: string): Backbone {
  const [kind, ...rest] = modelId.split(":");
  const ref = rest.join(":");
  if (kind === "toy") {
    const dim = Number(ref || "64");
    if (!Number.isInteger(dim) || dim < 1) {
      throw new Error(`bad toy backbone dim ${ref}`);
    }
    return new ToyBackbone(dim);
  }
  if (kind === "tfjs") {
    if (!ref) throw new Error("tfjs backbone needs a model URL or path");
    return new TfjsBackbone(ref);
  }
  throw new Error(`unknown backbone ${modelId}; expected toy:<dim> or tfjs:<ref>`);
}
