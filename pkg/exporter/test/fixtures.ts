/** Synthetic checkpoint + dataset builders for the exporter tests. */

import * as fs from 'node:fs'
import * as path from 'node:path'

import { CheckpointManifest } from '../src/checkpoint'
import { DatasetIndex } from '../src/dataset'
import { foldSplit } from '../src/folds'
import { Prng } from '../src/prng'

export const STRIDE = 4
export const IMG = 16 // images are IMG x IMG
export const D = 8

export function writeCheckpoint(dir: string, benchmark: 'pascal5i', fold: number): string {
  const split = foldSplit(benchmark, fold)
  const layers = [
    { inDim: 3 * STRIDE * STRIDE, outDim: 10 },
    { inDim: 10, outDim: D },
  ]
  const manifest: CheckpointManifest = {
    format: 'gfss-checkpoint',
    version: 1,
    benchmark,
    fold,
    stride: STRIDE,
    layers,
    baseClassIds: split.base,
    weightsFile: 'weights.bin',
  }
  const prng = new Prng(99)
  const floats: number[] = []
  for (const layer of layers) {
    for (let i = 0; i < layer.outDim * layer.inDim; i++) floats.push((prng.next() - 0.5) * 0.4)
    for (let i = 0; i < layer.outDim; i++) floats.push((prng.next() - 0.5) * 0.1)
  }
  const rows = 1 + split.base.length
  for (let i = 0; i < rows * D; i++) floats.push((prng.next() - 0.5) * 0.4)

  fs.mkdirSync(dir, { recursive: true })
  const manifestPath = path.join(dir, 'model.json')
  fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 2))
  fs.writeFileSync(path.join(dir, 'weights.bin'), Buffer.from(new Float32Array(floats).buffer))
  return manifestPath
}

/**
 * Small labeled dataset: every image is background plus a few planted
 * class rectangles; RGB pixels encode the class id so features carry
 * class signal. Ensures each of the given novel ids appears in at least
 * `minImagesPerNovel` images.
 */
export function writeDataset(
  dir: string,
  novelIds: number[],
  baseIds: number[],
  nImages: number,
  minImagesPerNovel = 2,
): void {
  fs.mkdirSync(path.join(dir, 'images'), { recursive: true })
  fs.mkdirSync(path.join(dir, 'labels'), { recursive: true })
  const prng = new Prng(7)
  const index: DatasetIndex = { format: 'gfss-dataset', version: 1, images: [] }

  for (let n = 0; n < nImages; n++) {
    const labels = new Uint8Array(IMG * IMG) // background
    const classes: number[] = []
    // rotate novel ids so each appears in >= minImagesPerNovel images
    for (let k = 0; k < minImagesPerNovel; k++) {
      classes.push(novelIds[(n + k) % novelIds.length])
    }
    classes.push(baseIds[n % baseIds.length])
    classes.forEach((cls, slot) => {
      const r0 = (slot * 5) % (IMG - 4)
      const c0 = Math.floor(prng.next() * (IMG - 4))
      for (let r = r0; r < r0 + 4; r++) {
        for (let c = c0; c < c0 + 4; c++) labels[r * IMG + c] = cls
      }
    })
    labels[0] = 255 // an ignored pixel

    const rgb = new Uint8Array(IMG * IMG * 3)
    for (let i = 0; i < IMG * IMG; i++) {
      const cls = labels[i] === 255 ? 0 : labels[i]
      rgb[3 * i] = (cls * 11) % 256
      rgb[3 * i + 1] = (cls * 53) % 256
      rgb[3 * i + 2] = Math.floor(prng.next() * 40)
    }
    const id = `img${String(n).padStart(3, '0')}`
    fs.writeFileSync(path.join(dir, 'images', `${id}.bin`), rgb)
    fs.writeFileSync(path.join(dir, 'labels', `${id}.bin`), labels)
    index.images.push({
      id,
      height: IMG,
      width: IMG,
      image: `images/${id}.bin`,
      labels: `labels/${id}.bin`,
    })
  }
  fs.writeFileSync(path.join(dir, 'index.json'), JSON.stringify(index, null, 2))
}
