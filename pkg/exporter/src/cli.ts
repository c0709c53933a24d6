#!/usr/bin/env node
/**
 * gfss-export: turn a pretrained checkpoint plus a labeled dataset into
 * engine task files.
 *
 * Usage:
 *   gfss-export <manifest.json>
 *
 * The manifest carries: checkpoint, datasetRoot, benchmark
 * (pascal5i | pascal10i | coco20i), fold, shots, outDir, seed, and
 * optionally layer and queryLimit.
 */

import * as fs from 'node:fs'

import { ExportManifest, exportTasks } from './export'

function main(argv: string[]): number {
  if (argv.length !== 1 || argv[0] === '--help' || argv[0] === '-h') {
    console.error('usage: gfss-export <manifest.json>')
    return argv.length === 1 ? 0 : 2
  }
  let manifest: ExportManifest
  try {
    manifest = JSON.parse(fs.readFileSync(argv[0], 'utf-8')) as ExportManifest
  } catch (err) {
    console.error(`error reading manifest: ${(err as Error).message}`)
    return 2
  }
  try {
    const result = exportTasks(manifest)
    for (const warning of result.warnings) console.warn(`warning: ${warning}`)
    console.log(
      `exported ${result.taskFiles.length} task files to ${manifest.outDir} ` +
        `(support: ${result.supportIds.join(', ')})`,
    )
    return 0
  } catch (err) {
    console.error(`error: ${(err as Error).message}`)
    return 1
  }
}

process.exit(main(process.argv.slice(2)))
