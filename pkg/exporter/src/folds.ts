/**
 * Benchmark fold definitions: which semantic classes count as novel in
 * each cross-validation fold. Class ids are the dataset's global label
 * values (0 is background everywhere); base classes are the complement
 * of the novel set.
 */

export const VOC_CLASSES = [
  'aeroplane', 'bicycle', 'bird', 'boat', 'bottle',
  'bus', 'car', 'cat', 'chair', 'cow',
  'diningtable', 'dog', 'horse', 'motorbike', 'person',
  'pottedplant', 'sheep', 'sofa', 'train', 'tvmonitor',
] as const

export type Benchmark = 'pascal5i' | 'pascal10i' | 'coco20i'

export interface FoldSplit {
  benchmark: Benchmark
  fold: number
  novel: number[]
  base: number[]
}

function range(start: number, count: number): number[] {
  return Array.from({ length: count }, (_, i) => start + i)
}

export function foldSplit(benchmark: Benchmark, fold: number): FoldSplit {
  let novel: number[]
  let total: number
  switch (benchmark) {
    case 'pascal5i':
      if (fold < 0 || fold > 3) throw new Error(`pascal5i has folds 0..3, got ${fold}`)
      novel = range(5 * fold + 1, 5)
      total = 20
      break
    case 'pascal10i':
      // balanced split: two folds of ten classes, fold i takes ids 10i+1..10i+10
      if (fold < 0 || fold > 1) throw new Error(`pascal10i has folds 0..1, got ${fold}`)
      novel = range(10 * fold + 1, 10)
      total = 20
      break
    case 'coco20i':
      // interleaved convention: fold i takes every fourth class id
      if (fold < 0 || fold > 3) throw new Error(`coco20i has folds 0..3, got ${fold}`)
      novel = Array.from({ length: 20 }, (_, k) => 4 * k + fold + 1)
      total = 80
      break
    default:
      throw new Error(`unknown benchmark ${benchmark as string}`)
  }
  const novelSet = new Set(novel)
  const base = range(1, total).filter(id => !novelSet.has(id))
  return { benchmark, fold, novel, base }
}

/** VOC class names for a list of ids (1-based ids, background excluded). */
export function vocNames(ids: number[]): string[] {
  return ids.map(id => {
    const name = VOC_CLASSES[id - 1]
    if (!name) throw new Error(`no VOC class with id ${id}`)
    return name
  })
}
