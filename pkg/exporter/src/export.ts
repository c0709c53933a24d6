/**
 * The export pipeline: select support images for the fold's novel
 * classes, extract frozen features, resample labels to the feature grid,
 * remap class ids into the episode layout, and emit one task file per
 * query image.
 *
 * Episode class layout: 0 is background, base classes take slots
 * 1..nBase in ascending global-id order (matching the checkpoint's
 * classifier rows), novel classes take the following slots in ascending
 * global-id order. Support masks keep novel labels only; everything
 * else, base objects included, becomes background. Query labels keep
 * the full episode resolution; ignored pixels stay 255 in both.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

import { Checkpoint, extractFeatures, loadCheckpoint, resampleLabels } from './checkpoint'
import { Dataset, DatasetImage, IGNORE } from './dataset'
import { Benchmark, foldSplit } from './folds'
import { Prng } from './prng'
import { encodeTaskFile } from './taskfile'

export interface ExportManifest {
  checkpoint: string
  datasetRoot: string
  benchmark: Benchmark
  fold: number
  shots: number
  outDir: string
  seed: number
  /** 1-based feature depth; defaults to the full stack */
  layer?: number
  /** cap on the number of query task files */
  queryLimit?: number
}

export interface ExportResult {
  supportIds: string[]
  taskFiles: string[]
  warnings: string[]
}

function buildClassMap(base: number[], novel: number[]): Map<number, number> {
  const map = new Map<number, number>()
  map.set(0, 0)
  const sortedBase = [...base].sort((a, b) => a - b)
  const sortedNovel = [...novel].sort((a, b) => a - b)
  sortedBase.forEach((id, i) => map.set(id, 1 + i))
  sortedNovel.forEach((id, i) => map.set(id, 1 + sortedBase.length + i))
  return map
}

function selectSupport(
  dataset: Dataset,
  novel: number[],
  shots: number,
  seed: number,
  warnings: string[],
): DatasetImage[] {
  const presence = new Map<string, Set<number>>()
  for (const entry of dataset.images) presence.set(entry.id, dataset.classesPresent(entry))

  const prng = new Prng(seed)
  const chosen = new Map<string, DatasetImage>()
  for (const cls of [...novel].sort((a, b) => a - b)) {
    const already = [...chosen.keys()].filter(id => presence.get(id)!.has(cls)).length
    let needed = shots - already
    if (needed <= 0) continue
    const candidates = dataset.images.filter(
      e => presence.get(e.id)!.has(cls) && !chosen.has(e.id),
    )
    prng.shuffle(candidates)
    if (candidates.length < needed) {
      if (already + candidates.length === 0) {
        throw new Error(`novel class ${cls} appears in no dataset image`)
      }
      warnings.push(
        `novel class ${cls}: only ${already + candidates.length} support ` +
          `candidates for ${shots} shots`,
      )
      needed = candidates.length
    }
    for (const entry of candidates.slice(0, needed)) chosen.set(entry.id, entry)
  }
  return [...chosen.values()]
}

function episodeFeatures(ckpt: Checkpoint, dataset: Dataset, entry: DatasetImage, layer?: number) {
  const rgb = dataset.loadRgb(entry)
  return extractFeatures(ckpt, rgb, entry.height, entry.width, layer)
}

export function exportTasks(manifest: ExportManifest): ExportResult {
  const warnings: string[] = []
  const ckpt = loadCheckpoint(manifest.checkpoint)
  if (ckpt.manifest.benchmark !== manifest.benchmark || ckpt.manifest.fold !== manifest.fold) {
    throw new Error(
      `checkpoint was trained for ${ckpt.manifest.benchmark} fold ${ckpt.manifest.fold}, ` +
        `manifest asks for ${manifest.benchmark} fold ${manifest.fold}`,
    )
  }
  const split = foldSplit(manifest.benchmark, manifest.fold)
  const trainedOn = [...ckpt.manifest.baseClassIds].sort((a, b) => a - b)
  if (JSON.stringify(trainedOn) !== JSON.stringify(split.base)) {
    throw new Error('checkpoint base classes do not match the fold definition')
  }
  if (manifest.layer !== undefined && manifest.layer !== ckpt.layers.length) {
    throw new Error(
      `classifier rows only apply to full-depth features ` +
        `(layer ${ckpt.layers.length}); layer ${manifest.layer} cannot be exported with them`,
    )
  }
  const dataset = new Dataset(manifest.datasetRoot)
  const classMap = buildClassMap(split.base, split.novel)
  const novelEpisodeIds = new Set(split.novel.map(id => classMap.get(id)!))

  const supportEntries = selectSupport(dataset, split.novel, manifest.shots, manifest.seed, warnings)
  const supportIdSet = new Set(supportEntries.map(e => e.id))

  const shape = { height: -1, width: -1, d: -1 }
  const supportFeatures: Float32Array[] = []
  const supportMasks: Uint8Array[] = []
  for (const entry of supportEntries) {
    const grid = episodeFeatures(ckpt, dataset, entry, manifest.layer)
    if (shape.d === -1) Object.assign(shape, { height: grid.height, width: grid.width, d: grid.d })
    if (grid.height !== shape.height || grid.width !== shape.width) {
      throw new Error(`support image ${entry.id}: feature grid differs from the episode grid`)
    }
    const coarse = resampleLabels(
      dataset.loadLabels(entry), entry.height, entry.width, grid.height, grid.width,
    )
    const mask = new Uint8Array(coarse.length)
    for (let i = 0; i < coarse.length; i++) {
      const v = coarse[i]
      if (v === IGNORE) mask[i] = IGNORE
      else {
        const episodeId = classMap.get(v) ?? 0
        mask[i] = novelEpisodeIds.has(episodeId) ? episodeId : 0
      }
    }
    supportFeatures.push(grid.values)
    supportMasks.push(mask)
  }

  fs.mkdirSync(manifest.outDir, { recursive: true })
  const taskFiles: string[] = []
  const queries = dataset.images.filter(e => !supportIdSet.has(e.id))
  const limit = manifest.queryLimit ?? queries.length
  for (const entry of queries.slice(0, limit)) {
    const grid = episodeFeatures(ckpt, dataset, entry, manifest.layer)
    if (grid.height !== shape.height || grid.width !== shape.width) {
      warnings.push(`query ${entry.id}: grid mismatch, skipped`)
      continue
    }
    const coarse = resampleLabels(
      dataset.loadLabels(entry), entry.height, entry.width, grid.height, grid.width,
    )
    const queryLabels = new Uint8Array(coarse.length)
    for (let i = 0; i < coarse.length; i++) {
      const v = coarse[i]
      queryLabels[i] = v === IGNORE ? IGNORE : classMap.get(v) ?? 0
    }
    const blob = encodeTaskFile({
      d: shape.d,
      nBase: split.base.length,
      nNovel: split.novel.length,
      height: shape.height,
      width: shape.width,
      supportFeatures,
      supportMasks,
      classifier: ckpt.classifier,
      queryFeatures: grid.values,
      queryLabels,
    })
    const file = path.join(manifest.outDir, `task_${entry.id}.task`)
    fs.writeFileSync(file, blob)
    taskFiles.push(file)
  }
  if (!taskFiles.length) throw new Error('no query images left after support selection')
  return { supportIds: supportEntries.map(e => e.id), taskFiles, warnings }
}
