/**
 * Binary task file writer (and a validating reader used by the tests).
 *
 * Layout, little-endian: magic "DIAM", version u16 (= 1), header of
 * seven u32 fields (d, nBase, nNovel, height, width, shots, flags),
 * then length-prefixed (u64) sections in fixed order: base classifier
 * f32, support features f32, support masks u8, query features f32,
 * query labels u8 (flag 1), foreground maps f32 (flag 2). Trailing
 * bytes beyond the declared sections are reserved for future use.
 */

export const MAGIC = 'DIAM'
export const VERSION = 1
export const FLAG_QUERY_LABELS = 1
export const FLAG_FOREGROUND_MAPS = 2

export interface TaskPayload {
  d: number
  nBase: number
  nNovel: number
  height: number
  width: number
  /** one Float32Array of length height*width*d per support shot */
  supportFeatures: Float32Array[]
  /** one Uint8Array of length height*width per support shot */
  supportMasks: Uint8Array[]
  classifier: Float32Array // (1 + nBase) * d
  queryFeatures: Float32Array // height*width*d
  queryLabels?: Uint8Array // height*width
  foregroundMaps?: Float32Array // nNovel * height*width
}

function section(payload: Buffer): Buffer {
  const len = Buffer.alloc(8)
  len.writeBigUInt64LE(BigInt(payload.length))
  return Buffer.concat([len, payload])
}

function f32Bytes(arr: Float32Array, expected: number, what: string): Buffer {
  if (arr.length !== expected) {
    throw new Error(`${what}: expected ${expected} floats, got ${arr.length}`)
  }
  return Buffer.from(arr.buffer, arr.byteOffset, arr.byteLength)
}

export function encodeTaskFile(task: TaskPayload): Buffer {
  const { d, nBase, nNovel, height, width } = task
  const n = height * width
  const shots = task.supportFeatures.length
  if (shots < 1 || task.supportMasks.length !== shots) {
    throw new Error('support features/masks must be non-empty and aligned')
  }
  if (1 + nBase + nNovel > 255) throw new Error('too many classes for u8 masks')

  let flags = 0
  if (task.queryLabels) flags |= FLAG_QUERY_LABELS
  if (task.foregroundMaps) flags |= FLAG_FOREGROUND_MAPS

  const header = Buffer.alloc(4 + 2 + 7 * 4)
  header.write(MAGIC, 0, 'ascii')
  header.writeUInt16LE(VERSION, 4)
  const fields = [d, nBase, nNovel, height, width, shots, flags]
  fields.forEach((v, i) => header.writeUInt32LE(v, 6 + 4 * i))

  const parts: Buffer[] = [header]
  parts.push(section(f32Bytes(task.classifier, (1 + nBase) * d, 'classifier')))

  const supportAll = new Float32Array(shots * n * d)
  task.supportFeatures.forEach((feat, i) => {
    if (feat.length !== n * d) throw new Error(`support features shot ${i}: bad length`)
    supportAll.set(feat, i * n * d)
  })
  parts.push(section(Buffer.from(supportAll.buffer)))

  const maskAll = Buffer.concat(
    task.supportMasks.map((m, i) => {
      if (m.length !== n) throw new Error(`support mask shot ${i}: bad length`)
      return Buffer.from(m)
    }),
  )
  parts.push(section(maskAll))
  parts.push(section(f32Bytes(task.queryFeatures, n * d, 'query features')))
  if (task.queryLabels) {
    if (task.queryLabels.length !== n) throw new Error('query labels: bad length')
    parts.push(section(Buffer.from(task.queryLabels)))
  }
  if (task.foregroundMaps) {
    parts.push(section(f32Bytes(task.foregroundMaps, nNovel * n, 'foreground maps')))
  }
  return Buffer.concat(parts)
}

/** Structural validation mirror of the engine-side reader. */
export function decodeTaskFile(blob: Buffer): TaskPayload {
  let pos = 0
  const take = (count: number, what: string): Buffer => {
    if (pos + count > blob.length) throw new Error(`file truncated inside ${what}`)
    const out = blob.subarray(pos, pos + count)
    pos += count
    return out
  }
  if (take(4, 'magic').toString('ascii') !== MAGIC) throw new Error('bad magic')
  const version = take(2, 'version').readUInt16LE(0)
  if (version !== VERSION) throw new Error(`unsupported version ${version}`)
  const header = take(28, 'header')
  const [d, nBase, nNovel, height, width, shots, flags] = Array.from({ length: 7 }, (_, i) =>
    header.readUInt32LE(4 * i),
  )
  const n = height * width
  const sect = (expectedBytes: number, what: string): Buffer => {
    const len = Number(take(8, `${what} length`).readBigUInt64LE(0))
    if (len !== expectedBytes) {
      throw new Error(`section ${what}: declared ${len} bytes, expected ${expectedBytes}`)
    }
    return take(len, what)
  }
  const toF32 = (b: Buffer) =>
    new Float32Array(b.buffer.slice(b.byteOffset, b.byteOffset + b.byteLength))

  const classifier = toF32(sect((1 + nBase) * d * 4, 'base classifier'))
  const supportRaw = toF32(sect(shots * n * d * 4, 'support features'))
  const maskRaw = sect(shots * n, 'support masks')
  const queryFeatures = toF32(sect(n * d * 4, 'query features'))
  const queryLabels =
    flags & FLAG_QUERY_LABELS ? new Uint8Array(sect(n, 'query labels')) : undefined
  const foregroundMaps =
    flags & FLAG_FOREGROUND_MAPS ? toF32(sect(nNovel * n * 4, 'foreground maps')) : undefined

  const supportFeatures: Float32Array[] = []
  const supportMasks: Uint8Array[] = []
  for (let i = 0; i < shots; i++) {
    supportFeatures.push(supportRaw.slice(i * n * d, (i + 1) * n * d))
    supportMasks.push(new Uint8Array(maskRaw.subarray(i * n, (i + 1) * n)))
  }
  return {
    d, nBase, nNovel, height, width,
    supportFeatures, supportMasks, classifier, queryFeatures, queryLabels, foregroundMaps,
  }
}
