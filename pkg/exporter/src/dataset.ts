/**
 * Dataset directory access. The root holds an ``index.json`` listing the
 * images; pixel data is stored raw: ``image`` files are u8 RGB
 * (height*width*3, row-major) and ``labels`` files are u8 class ids with
 * 255 for ignored pixels.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

export const IGNORE = 255

export interface DatasetImage {
  id: string
  height: number
  width: number
  image: string
  labels: string
}

export interface DatasetIndex {
  format: string
  version: number
  images: DatasetImage[]
}

export class Dataset {
  readonly root: string
  readonly images: DatasetImage[]

  constructor(root: string) {
    this.root = root
    const index = JSON.parse(
      fs.readFileSync(path.join(root, 'index.json'), 'utf-8'),
    ) as DatasetIndex
    if (index.format !== 'gfss-dataset' || index.version !== 1) {
      throw new Error(`${root}: not a version-1 dataset index`)
    }
    if (!index.images.length) throw new Error(`${root}: dataset lists no images`)
    this.images = index.images
  }

  loadRgb(entry: DatasetImage): Uint8Array {
    const data = fs.readFileSync(path.join(this.root, entry.image))
    if (data.length !== entry.height * entry.width * 3) {
      throw new Error(`${entry.id}: image bytes do not match ${entry.height}x${entry.width}x3`)
    }
    return new Uint8Array(data)
  }

  loadLabels(entry: DatasetImage): Uint8Array {
    const data = fs.readFileSync(path.join(this.root, entry.labels))
    if (data.length !== entry.height * entry.width) {
      throw new Error(`${entry.id}: label bytes do not match ${entry.height}x${entry.width}`)
    }
    return new Uint8Array(data)
  }

  /** Distinct non-background, non-ignore class ids present in an image. */
  classesPresent(entry: DatasetImage): Set<number> {
    const labels = this.loadLabels(entry)
    const present = new Set<number>()
    for (const v of labels) {
      if (v !== 0 && v !== IGNORE) present.add(v)
    }
    return present
  }
}
