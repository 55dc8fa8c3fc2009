/**
 * Decodes the upstream serialized query archives into the engine's JSON query
 * schema.
 *
 * Upstream encoding: a pickled dict mapping a query-structure tuple (built
 * from 'e'/'r'/'u' markers) to a set of instance tuples with identical
 * nesting, ids as ints and -1 in 'u' slots. Easy/hard answers ship as two
 * pickled dicts keyed by those instance tuples, each mapping to a set of
 * entity ids.
 */

import { PickleValue, PyDict, PySet, PyTuple, stableKey } from "./pickle";

export class DecodeError extends Error {}

export interface EngineAtom {
  s: string;
  p: number;
  o: string;
}

export interface EngineQuery {
  shape: string;
  atoms: EngineAtom[];
  dnf: number[][];
  easy: number[];
  hard: number[];
}

type Marker = "e" | "r" | "u";
type Struct = Marker | Struct[];

// tuple-shaped structure keys, written with arrays standing in for tuples
const STRUCTURES: Array<[string, Struct]> = [
  ["1p", ["e", ["r"]]],
  ["2p", ["e", ["r", "r"]]],
  ["3p", ["e", ["r", "r", "r"]]],
  ["2i", [["e", ["r"]], ["e", ["r"]]]],
  ["3i", [["e", ["r"]], ["e", ["r"]], ["e", ["r"]]]],
  ["1p2i", [["e", ["r", "r"]], ["e", ["r"]]]],
  ["2i1p", [[["e", ["r"]], ["e", ["r"]]], ["r"]]],
  ["2u", [["e", ["r"]], ["e", ["r"]], ["u"]]],
  ["2u1p", [[["e", ["r"]], ["e", ["r"]], ["u"]], ["r"]]],
];

function structToTuple(s: Struct): PickleValue {
  if (typeof s === "string") return s;
  return new PyTuple(s.map(structToTuple));
}

const STRUCTURE_BY_KEY = new Map<string, string>(
  STRUCTURES.map(([shape, struct]) => [stableKey(structToTuple(struct)), shape])
);

export function structureShape(structure: PickleValue): string | undefined {
  return STRUCTURE_BY_KEY.get(stableKey(structure));
}

function anchor(id: number): string {
  return `e:${id}`;
}

function leaf(t: PickleValue, what: string): number {
  if (typeof t !== "number" || !Number.isInteger(t)) {
    throw new DecodeError(`expected an integer ${what}`);
  }
  return t;
}

function tup(t: PickleValue, arity: number, what: string): PickleValue[] {
  if (!(t instanceof PyTuple) || t.items.length !== arity) {
    throw new DecodeError(`expected a ${arity}-tuple for ${what}`);
  }
  return t.items;
}

function branch(t: PickleValue, hops: number): { e: number; r: number[] } {
  const [e, rels] = tup(t, 2, "projection branch");
  const rItems = tup(rels, hops, "relation chain");
  return { e: leaf(e, "anchor"), r: rItems.map((r) => leaf(r, "relation")) };
}

/** Decode one instance tuple of the given shape into engine atoms + dnf. */
export function decodeInstance(shape: string, instance: PickleValue): Omit<EngineQuery, "easy" | "hard"> {
  switch (shape) {
    case "1p": {
      const b = branch(instance, 1);
      return {
        shape,
        atoms: [{ s: anchor(b.e), p: b.r[0], o: "v:VA" }],
        dnf: [[0]],
      };
    }
    case "2p": {
      const b = branch(instance, 2);
      return {
        shape,
        atoms: [
          { s: anchor(b.e), p: b.r[0], o: "v:V1" },
          { s: "v:V1", p: b.r[1], o: "v:VA" },
        ],
        dnf: [[0, 1]],
      };
    }
    case "3p": {
      const b = branch(instance, 3);
      return {
        shape,
        atoms: [
          { s: anchor(b.e), p: b.r[0], o: "v:V1" },
          { s: "v:V1", p: b.r[1], o: "v:V2" },
          { s: "v:V2", p: b.r[2], o: "v:VA" },
        ],
        dnf: [[0, 1, 2]],
      };
    }
    case "2i":
    case "3i": {
      const n = shape === "2i" ? 2 : 3;
      const branches = tup(instance, n, shape).map((t) => branch(t, 1));
      return {
        shape,
        atoms: branches.map((b, i) => ({ s: anchor(b.e), p: b.r[0], o: "v:VA" })),
        dnf: [branches.map((_, i) => i)],
      };
    }
    case "2u": {
      const items = tup(instance, 3, "2u");
      assertUnionMarker(items[2]);
      const branches = items.slice(0, 2).map((t) => branch(t, 1));
      return {
        shape,
        atoms: branches.map((b) => ({ s: anchor(b.e), p: b.r[0], o: "v:VA" })),
        dnf: [[0], [1]],
      };
    }
    case "1p2i": {
      const [chainT, sideT] = tup(instance, 2, "1p2i");
      const chain = branch(chainT, 2);
      const side = branch(sideT, 1);
      return {
        shape,
        atoms: [
          { s: anchor(chain.e), p: chain.r[0], o: "v:V1" },
          { s: "v:V1", p: chain.r[1], o: "v:VA" },
          { s: anchor(side.e), p: side.r[0], o: "v:VA" },
        ],
        dnf: [[0, 1, 2]],
      };
    }
    case "2i1p": {
      const [headT, relT] = tup(instance, 2, "2i1p");
      const branches = tup(headT, 2, "2i1p head").map((t) => branch(t, 1));
      const rel = tup(relT, 1, "projection relation");
      return {
        shape,
        atoms: [
          { s: anchor(branches[0].e), p: branches[0].r[0], o: "v:V1" },
          { s: anchor(branches[1].e), p: branches[1].r[0], o: "v:V1" },
          { s: "v:V1", p: leaf(rel[0], "relation"), o: "v:VA" },
        ],
        dnf: [[0, 1, 2]],
      };
    }
    case "2u1p": {
      const [headT, relT] = tup(instance, 2, "2u1p");
      const headItems = tup(headT, 3, "2u1p head");
      assertUnionMarker(headItems[2]);
      const branches = headItems.slice(0, 2).map((t) => branch(t, 1));
      const rel = tup(relT, 1, "projection relation");
      return {
        shape,
        atoms: [
          { s: anchor(branches[0].e), p: branches[0].r[0], o: "v:V1" },
          { s: anchor(branches[1].e), p: branches[1].r[0], o: "v:V1" },
          { s: "v:V1", p: leaf(rel[0], "relation"), o: "v:VA" },
        ],
        dnf: [[0, 2], [1, 2]],
      };
    }
    default:
      throw new DecodeError(`unknown shape ${shape}`);
  }
}

function assertUnionMarker(t: PickleValue): void {
  const items = tup(t, 1, "union marker");
  if (items[0] !== -1 && items[0] !== "u") {
    throw new DecodeError("expected the union marker (-1,)");
  }
}

export interface ConversionResult {
  byShape: Map<string, EngineQuery[]>;
  skippedStructures: number;
  errors: string[];
}

function answersFor(dict: PyDict | undefined, instance: PickleValue): number[] {
  if (!dict) return [];
  const found = dict.get(instance);
  if (found === undefined) return [];
  if (!(found instanceof PySet)) throw new DecodeError("answer entry is not a set");
  const out: number[] = [];
  for (const v of found.values()) out.push(leaf(v, "answer id"));
  return out.sort((a, b) => a - b);
}

export function convertQueries(
  queries: PickleValue,
  easy: PickleValue | undefined,
  hard: PickleValue | undefined,
  bounds?: { entities?: number; relations?: number }
): ConversionResult {
  if (!(queries instanceof PyDict)) {
    throw new DecodeError("query archive does not decode to a dict");
  }
  if (easy !== undefined && !(easy instanceof PyDict)) {
    throw new DecodeError("easy-answer archive does not decode to a dict");
  }
  if (hard !== undefined && !(hard instanceof PyDict)) {
    throw new DecodeError("hard-answer archive does not decode to a dict");
  }
  const result: ConversionResult = { byShape: new Map(), skippedStructures: 0, errors: [] };
  for (const [structure, instances] of queries.items()) {
    const shape = structureShape(structure);
    if (!shape) {
      result.skippedStructures += 1;
      continue;
    }
    if (!(instances instanceof PySet) && !Array.isArray(instances)) {
      result.errors.push(`${shape}: instance collection is not a set/list`);
      continue;
    }
    const bucket = result.byShape.get(shape) ?? [];
    result.byShape.set(shape, bucket);
    const iter = instances instanceof PySet ? instances.values() : instances;
    for (const instance of iter) {
      try {
        const record = decodeInstance(shape, instance);
        const easyIds = answersFor(easy as PyDict | undefined, instance);
        const hardIds = answersFor(hard as PyDict | undefined, instance);
        validate(record, easyIds, hardIds, bounds);
        bucket.push({ ...record, easy: easyIds, hard: hardIds });
      } catch (err) {
        result.errors.push(`${shape}: ${(err as Error).message}`);
      }
    }
  }
  return result;
}

function validate(
  record: Omit<EngineQuery, "easy" | "hard">,
  easy: number[],
  hard: number[],
  bounds?: { entities?: number; relations?: number }
): void {
  const easySet = new Set(easy);
  for (const id of hard) {
    if (easySet.has(id)) throw new DecodeError(`answer ${id} is labeled both easy and hard`);
  }
  if (bounds?.entities !== undefined) {
    const ids = [
      ...record.atoms.filter((a) => a.s.startsWith("e:")).map((a) => parseInt(a.s.slice(2), 10)),
      ...easy,
      ...hard,
    ];
    for (const id of ids) {
      if (id < 0 || id >= bounds.entities) throw new DecodeError(`entity id ${id} out of range`);
    }
  }
  if (bounds?.relations !== undefined) {
    for (const atom of record.atoms) {
      if (atom.p < 0 || atom.p >= bounds.relations) {
        throw new DecodeError(`relation id ${atom.p} out of range`);
      }
    }
  }
}
