/**
 * Extracts complex embedding matrices from a checkpoint (torch zip or numpy
 * npz) and writes the engine's binary container: one-line JSON header +
 * four row-major float32-LE blocks (ent_re, ent_im, rel_re, rel_im).
 */

import { Matrix, parseNpy } from "./npy";
import { readTorchCheckpoint } from "./torch";
import { ZipReader } from "./zip";

export class EmbeddingError extends Error {}

const FOUR_MATRIX_KEYS = ["entity_re", "entity_im", "relation_re", "relation_im"] as const;
const ENTITY_CANDIDATES = ["entity_embedding", "entity", "embeddings.0.weight"];
const RELATION_CANDIDATES = ["relation_embedding", "relation", "embeddings.1.weight"];

export interface EmbeddingSet {
  entRe: Matrix;
  entIm: Matrix;
  relRe: Matrix;
  relIm: Matrix;
}

export function loadTensors(data: Buffer): Map<string, Matrix> {
  if (data.length >= 4 && data.readUInt32LE(0) === 0x04034b50) {
    // a zip archive: npz if it holds .npy entries, torch checkpoint otherwise
    const zip = new ZipReader(data);
    const npyNames = zip.names().filter((n) => n.endsWith(".npy"));
    if (npyNames.length > 0) {
      const out = new Map<string, Matrix>();
      for (const name of npyNames) {
        out.set(name.slice(0, -4), parseNpy(zip.read(name)));
      }
      return out;
    }
    return readTorchCheckpoint(data);
  }
  throw new EmbeddingError("unrecognized checkpoint container (expected torch zip or .npz)");
}

function findKey(tensors: Map<string, Matrix>, explicit: string | undefined, candidates: string[]): string {
  if (explicit) {
    if (!tensors.has(explicit)) {
      const suffix = [...tensors.keys()].find((k) => k.endsWith(explicit));
      if (suffix) return suffix;
      throw new EmbeddingError(`checkpoint has no tensor named ${explicit}`);
    }
    return explicit;
  }
  for (const cand of candidates) {
    if (tensors.has(cand)) return cand;
    const suffix = [...tensors.keys()].find((k) => k.endsWith(cand));
    if (suffix) return suffix;
  }
  throw new EmbeddingError(
    `cannot locate a matrix among ${JSON.stringify([...tensors.keys()])}; pass an explicit key`
  );
}

function splitComplex(m: Matrix, what: string): { re: Matrix; im: Matrix } {
  if (m.cols % 2 !== 0) {
    throw new EmbeddingError(`${what} has odd width ${m.cols}; cannot split into re/im halves`);
  }
  const dim = m.cols / 2;
  const re = new Float64Array(m.rows * dim);
  const im = new Float64Array(m.rows * dim);
  for (let r = 0; r < m.rows; r++) {
    for (let c = 0; c < dim; c++) {
      re[r * dim + c] = m.data[r * m.cols + c];
      im[r * dim + c] = m.data[r * m.cols + dim + c];
    }
  }
  return {
    re: { rows: m.rows, cols: dim, data: re, sourceDtype: m.sourceDtype },
    im: { rows: m.rows, cols: dim, data: im, sourceDtype: m.sourceDtype },
  };
}

export function extractEmbeddings(
  tensors: Map<string, Matrix>,
  options: { entityKey?: string; relationKey?: string } = {}
): EmbeddingSet {
  const fourMatrix = FOUR_MATRIX_KEYS.every((k) => tensors.has(k));
  let set: EmbeddingSet;
  if (fourMatrix && !options.entityKey && !options.relationKey) {
    set = {
      entRe: tensors.get("entity_re")!,
      entIm: tensors.get("entity_im")!,
      relRe: tensors.get("relation_re")!,
      relIm: tensors.get("relation_im")!,
    };
  } else {
    const entity = tensors.get(findKey(tensors, options.entityKey, ENTITY_CANDIDATES))!;
    const relation = tensors.get(findKey(tensors, options.relationKey, RELATION_CANDIDATES))!;
    const ent = splitComplex(entity, "entity matrix");
    const rel = splitComplex(relation, "relation matrix");
    set = { entRe: ent.re, entIm: ent.im, relRe: rel.re, relIm: rel.im };
  }
  const dim = set.entRe.cols;
  for (const [name, m] of Object.entries(set)) {
    if (m.cols !== dim) throw new EmbeddingError(`${name} width ${m.cols} != dim ${dim}`);
  }
  if (set.entRe.rows !== set.entIm.rows || set.relRe.rows !== set.relIm.rows) {
    throw new EmbeddingError("re/im row counts differ");
  }
  return set;
}

export function validateCounts(
  set: EmbeddingSet,
  entities?: number,
  relations?: number
): void {
  if (entities !== undefined && set.entRe.rows !== entities) {
    throw new EmbeddingError(`checkpoint has ${set.entRe.rows} entities, dictionary has ${entities}`);
  }
  if (relations !== undefined && set.relRe.rows !== relations) {
    throw new EmbeddingError(`checkpoint has ${set.relRe.rows} relations, dictionary has ${relations}`);
  }
}

export function writeContainer(set: EmbeddingSet): Buffer {
  const header = {
    entities: set.entRe.rows,
    relations: set.relRe.rows,
    dim: set.entRe.cols,
    dtype: "f32le",
    layout: ["ent_re", "ent_im", "rel_re", "rel_im"],
  };
  const blocks: Buffer[] = [Buffer.from(JSON.stringify(header) + "\n", "utf-8")];
  for (const m of [set.entRe, set.entIm, set.relRe, set.relIm]) {
    const block = Buffer.alloc(m.data.length * 4);
    for (let i = 0; i < m.data.length; i++) {
      block.writeFloatLE(Math.fround(m.data[i]), i * 4);
    }
    blocks.push(block);
  }
  return Buffer.concat(blocks);
}
