/**
 * Pretrained checkpoint loading and frozen feature extraction.
 *
 * A checkpoint is a JSON manifest plus one raw little-endian f32 weights
 * file. The feature extractor is a per-patch MLP: the image is cut into
 * stride x stride cells, each cell's RGB block (normalized to [0, 1])
 * is flattened and pushed through the layer stack with ReLU between
 * layers and a linear final layer. The classifier matrix maps the last
 * layer's features to 1 + base-class logits and stays frozen; it is
 * exported alongside the features.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

import { Benchmark } from './folds'

export interface CheckpointManifest {
  format: string
  version: number
  benchmark: Benchmark
  fold: number
  stride: number
  layers: { inDim: number; outDim: number }[]
  baseClassIds: number[]
  weightsFile: string
}

export interface Layer {
  w: Float32Array // outDim x inDim, row-major
  b: Float32Array // outDim
  inDim: number
  outDim: number
}

export interface Checkpoint {
  manifest: CheckpointManifest
  layers: Layer[]
  classifier: Float32Array // (1 + baseClassIds.length) * lastDim
}

export function loadCheckpoint(manifestPath: string): Checkpoint {
  const manifest = JSON.parse(fs.readFileSync(manifestPath, 'utf-8')) as CheckpointManifest
  if (manifest.format !== 'gfss-checkpoint' || manifest.version !== 1) {
    throw new Error(`${manifestPath}: not a version-1 checkpoint manifest`)
  }
  if (manifest.layers.length < 1) throw new Error('checkpoint has no layers')
  if (manifest.layers[0].inDim !== 3 * manifest.stride * manifest.stride) {
    throw new Error('first layer input must match 3 * stride^2')
  }
  const raw = fs.readFileSync(path.join(path.dirname(manifestPath), manifest.weightsFile))
  const floats = new Float32Array(raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength))

  let cursor = 0
  const consume = (count: number, what: string): Float32Array => {
    if (cursor + count > floats.length) throw new Error(`weights file truncated inside ${what}`)
    const out = floats.slice(cursor, cursor + count)
    cursor += count
    return out
  }
  const layers: Layer[] = manifest.layers.map((spec, i) => ({
    w: consume(spec.outDim * spec.inDim, `layer ${i} weights`),
    b: consume(spec.outDim, `layer ${i} bias`),
    inDim: spec.inDim,
    outDim: spec.outDim,
  }))
  const lastDim = manifest.layers[manifest.layers.length - 1].outDim
  const classifier = consume((1 + manifest.baseClassIds.length) * lastDim, 'classifier')
  if (cursor !== floats.length) {
    throw new Error(`weights file has ${floats.length - cursor} unexpected trailing floats`)
  }
  return { manifest, layers, classifier }
}

function applyLayer(layer: Layer, x: Float32Array, relu: boolean): Float32Array {
  const out = new Float32Array(layer.outDim)
  for (let o = 0; o < layer.outDim; o++) {
    let acc = layer.b[o]
    const row = o * layer.inDim
    for (let i = 0; i < layer.inDim; i++) acc += layer.w[row + i] * x[i]
    out[o] = relu && acc < 0 ? 0 : acc
  }
  return out
}

export interface FeatureGrid {
  height: number
  width: number
  d: number
  /** height*width*d, pixel-major */
  values: Float32Array
}

/**
 * Extract per-cell features. `layer` selects how deep to read (1-based,
 * default: the full stack); the classifier only applies to full-depth
 * features, which callers must enforce.
 */
export function extractFeatures(
  ckpt: Checkpoint,
  rgb: Uint8Array,
  height: number,
  width: number,
  layer?: number,
): FeatureGrid {
  const stride = ckpt.manifest.stride
  if (rgb.length !== height * width * 3) throw new Error('rgb buffer does not match image size')
  if (height % stride !== 0 || width % stride !== 0) {
    throw new Error(`image ${height}x${width} not divisible by stride ${stride}`)
  }
  const depth = layer ?? ckpt.layers.length
  if (depth < 1 || depth > ckpt.layers.length) {
    throw new Error(`layer must lie in 1..${ckpt.layers.length}, got ${depth}`)
  }
  const fh = height / stride
  const fw = width / stride
  const d = ckpt.layers[depth - 1].outDim
  const values = new Float32Array(fh * fw * d)
  const patch = new Float32Array(3 * stride * stride)

  for (let cy = 0; cy < fh; cy++) {
    for (let cx = 0; cx < fw; cx++) {
      let p = 0
      for (let dy = 0; dy < stride; dy++) {
        const row = ((cy * stride + dy) * width + cx * stride) * 3
        for (let dx = 0; dx < 3 * stride; dx++) patch[p++] = rgb[row + dx] / 255
      }
      let x: Float32Array = patch
      for (let li = 0; li < depth; li++) {
        x = applyLayer(ckpt.layers[li], x, li < depth - 1)
      }
      values.set(x, (cy * fw + cx) * d)
    }
  }
  return { height: fh, width: fw, d, values }
}

/** Nearest-neighbor resample of a label map onto the feature grid. */
export function resampleLabels(
  labels: Uint8Array,
  height: number,
  width: number,
  fh: number,
  fw: number,
): Uint8Array {
  if (labels.length !== height * width) throw new Error('label buffer does not match image size')
  const out = new Uint8Array(fh * fw)
  for (let i = 0; i < fh; i++) {
    const sy = Math.min(height - 1, Math.floor(((i + 0.5) * height) / fh))
    for (let j = 0; j < fw; j++) {
      const sx = Math.min(width - 1, Math.floor(((j + 0.5) * width) / fw))
      out[i * fw + j] = labels[sy * width + sx]
    }
  }
  return out
}
