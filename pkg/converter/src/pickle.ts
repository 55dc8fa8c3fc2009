/**
 * Minimal Python pickle reader (and a small writer for test fixtures).
 *
 * Covers the opcode subset CPython emits for the query archives and torch
 * checkpoints this tool consumes: containers (dict/list/tuple/set/frozenset),
 * ints/floats/strings/bytes/bools/None, the memo, GLOBAL/STACK_GLOBAL plus
 * REDUCE/NEWOBJ/BUILD for a small registry of known callables, and persistent
 * ids (BINPERSID) for torch storage references.
 */

export class PyTuple {
  constructor(public readonly items: PickleValue[]) {}
}

export class GlobalRef {
  constructor(public readonly module: string, public readonly name: string) {}
  get qualified(): string {
    return `${this.module}.${this.name}`;
  }
}

/** dict with structural (deep-equality) keys */
export class PyDict {
  private entries_ = new Map<string, { key: PickleValue; value: PickleValue }>();

  set(key: PickleValue, value: PickleValue): void {
    this.entries_.set(stableKey(key), { key, value });
  }

  get(key: PickleValue): PickleValue | undefined {
    return this.entries_.get(stableKey(key))?.value;
  }

  has(key: PickleValue): boolean {
    return this.entries_.has(stableKey(key));
  }

  get size(): number {
    return this.entries_.size;
  }

  *items(): IterableIterator<[PickleValue, PickleValue]> {
    for (const { key, value } of this.entries_.values()) {
      yield [key, value];
    }
  }
}

export class PySet {
  private entries_ = new Map<string, PickleValue>();
  public frozen = false;

  add(value: PickleValue): void {
    this.entries_.set(stableKey(value), value);
  }

  has(value: PickleValue): boolean {
    return this.entries_.has(stableKey(value));
  }

  get size(): number {
    return this.entries_.size;
  }

  *values(): IterableIterator<PickleValue> {
    yield* this.entries_.values();
  }
}

export type PickleValue =
  | null
  | boolean
  | number
  | string
  | Uint8Array
  | PickleValue[]
  | PyTuple
  | PyDict
  | PySet
  | GlobalRef
  | object;

/** Canonical string for structural dict/set keys (tuples, strings, ints). */
export function stableKey(value: PickleValue): string {
  if (value === null) return "N";
  switch (typeof value) {
    case "number":
      return `i${value}`;
    case "boolean":
      return value ? "T" : "F";
    case "string":
      return `s${JSON.stringify(value)}`;
  }
  if (value instanceof PyTuple) {
    return `(${value.items.map(stableKey).join(",")})`;
  }
  throw new PickleError(`value of type ${value.constructor?.name} cannot be a dict/set key`);
}

export class PickleError extends Error {}

export type ReduceFn = (args: PickleValue[]) => PickleValue;
export type PersistentLoad = (pid: PickleValue) => PickleValue;

const MARK = Symbol("mark");

export interface UnpicklerOptions {
  /** callable registry for REDUCE/NEWOBJ, keyed by "module.name" */
  reducers?: Record<string, ReduceFn>;
  persistentLoad?: PersistentLoad;
}

const DEFAULT_REDUCERS: Record<string, ReduceFn> = {
  "collections.defaultdict": () => new PyDict(),
  "collections.OrderedDict": (args) => {
    const dict = new PyDict();
    const pairs = args[0];
    if (Array.isArray(pairs)) {
      for (const pair of pairs) {
        const t = pair as PyTuple;
        dict.set(t.items[0], t.items[1]);
      }
    }
    return dict;
  },
  "builtins.set": (args) => {
    const set = new PySet();
    for (const item of iterate(args[0] ?? [])) set.add(item);
    return set;
  },
  "builtins.frozenset": (args) => {
    const set = new PySet();
    set.frozen = true;
    for (const item of iterate(args[0] ?? [])) set.add(item);
    return set;
  },
  "builtins.list": (args) => [...iterate(args[0] ?? [])],
  "builtins.tuple": (args) => new PyTuple([...iterate(args[0] ?? [])]),
};

function* iterate(value: PickleValue): IterableIterator<PickleValue> {
  if (Array.isArray(value)) yield* value;
  else if (value instanceof PyTuple) yield* value.items;
  else if (value instanceof PySet) yield* value.values();
  else throw new PickleError("expected an iterable pickle value");
}

export function loads(data: Uint8Array, options: UnpicklerOptions = {}): PickleValue {
  return new Unpickler(data, options).load();
}

class Unpickler {
  private pos = 0;
  private stack: (PickleValue | typeof MARK)[] = [];
  private memo = new Map<number, PickleValue>();
  private view: DataView;
  private reducers: Record<string, ReduceFn>;

  constructor(private data: Uint8Array, private options: UnpicklerOptions) {
    this.view = new DataView(data.buffer, data.byteOffset, data.byteLength);
    this.reducers = { ...DEFAULT_REDUCERS, ...(options.reducers ?? {}) };
  }

  load(): PickleValue {
    for (;;) {
      const op = this.u8();
      const result = this.dispatch(op);
      if (result !== undefined) return result.value;
    }
  }

  private dispatch(op: number): { value: PickleValue } | undefined {
    switch (op) {
      case 0x80: // PROTO
        this.u8();
        return;
      case 0x95: // FRAME
        this.pos += 8;
        return;
      case 0x2e: // STOP
        return { value: this.pop() };
      case 0x28: // MARK
        this.stack.push(MARK);
        return;
      case 0x4e: // NONE
        this.stack.push(null);
        return;
      case 0x88: // NEWTRUE
        this.stack.push(true);
        return;
      case 0x89: // NEWFALSE
        this.stack.push(false);
        return;
      case 0x4b: // BININT1
        this.stack.push(this.u8());
        return;
      case 0x4d: // BININT2
        this.stack.push(this.u16());
        return;
      case 0x4a: // BININT
        this.stack.push(this.i32());
        return;
      case 0x8a: { // LONG1
        const n = this.u8();
        this.stack.push(this.longLE(n));
        return;
      }
      case 0x8b: { // LONG4
        const n = this.u32();
        this.stack.push(this.longLE(n));
        return;
      }
      case 0x47: { // BINFLOAT (big-endian double)
        const v = this.view.getFloat64(this.pos, false);
        this.pos += 8;
        this.stack.push(v);
        return;
      }
      case 0x8c: // SHORT_BINUNICODE
        this.stack.push(this.utf8(this.u8()));
        return;
      case 0x58: // BINUNICODE
        this.stack.push(this.utf8(this.u32()));
        return;
      case 0x8d: // BINUNICODE8
        this.stack.push(this.utf8(this.u64()));
        return;
      case 0xc4: // SHORT_BINBYTES
        this.stack.push(this.bytes(this.u8()));
        return;
      case 0x42: // BINBYTES
        this.stack.push(this.bytes(this.u32()));
        return;
      case 0x8e: // BINBYTES8
        this.stack.push(this.bytes(this.u64()));
        return;
      case 0x29: // EMPTY_TUPLE
        this.stack.push(new PyTuple([]));
        return;
      case 0x85: // TUPLE1
        this.stack.push(new PyTuple(this.popN(1)));
        return;
      case 0x86: // TUPLE2
        this.stack.push(new PyTuple(this.popN(2)));
        return;
      case 0x87: // TUPLE3
        this.stack.push(new PyTuple(this.popN(3)));
        return;
      case 0x74: // TUPLE (to mark)
        this.stack.push(new PyTuple(this.popToMark()));
        return;
      case 0x5d: // EMPTY_LIST
        this.stack.push([]);
        return;
      case 0x61: { // APPEND
        const item = this.pop();
        (this.top() as PickleValue[]).push(item);
        return;
      }
      case 0x65: { // APPENDS
        const items = this.popToMark();
        (this.top() as PickleValue[]).push(...items);
        return;
      }
      case 0x7d: // EMPTY_DICT
        this.stack.push(new PyDict());
        return;
      case 0x73: { // SETITEM
        const value = this.pop();
        const key = this.pop();
        (this.top() as PyDict).set(key, value);
        return;
      }
      case 0x75: { // SETITEMS
        const items = this.popToMark();
        const dict = this.top() as PyDict;
        for (let i = 0; i < items.length; i += 2) dict.set(items[i], items[i + 1]);
        return;
      }
      case 0x8f: // EMPTY_SET
        this.stack.push(new PySet());
        return;
      case 0x90: { // ADDITEMS
        const items = this.popToMark();
        const set = this.top() as PySet;
        for (const item of items) set.add(item);
        return;
      }
      case 0x91: { // FROZENSET
        const items = this.popToMark();
        const set = new PySet();
        set.frozen = true;
        for (const item of items) set.add(item);
        this.stack.push(set);
        return;
      }
      case 0x94: // MEMOIZE
        this.memo.set(this.memo.size, this.top());
        return;
      case 0x71: // BINPUT
        this.memo.set(this.u8(), this.top());
        return;
      case 0x72: // LONG_BINPUT
        this.memo.set(this.u32(), this.top());
        return;
      case 0x68: // BINGET
        this.stack.push(this.memoGet(this.u8()));
        return;
      case 0x6a: // LONG_BINGET
        this.stack.push(this.memoGet(this.u32()));
        return;
      case 0x63: { // GLOBAL (newline-terminated module, name)
        const module = this.line();
        const name = this.line();
        this.stack.push(new GlobalRef(module, name));
        return;
      }
      case 0x93: { // STACK_GLOBAL
        const name = this.pop();
        const module = this.pop();
        this.stack.push(new GlobalRef(module as string, name as string));
        return;
      }
      case 0x52: { // REDUCE
        const args = this.pop();
        const fn = this.pop();
        this.stack.push(this.applyCallable(fn, args));
        return;
      }
      case 0x81: { // NEWOBJ
        const args = this.pop();
        const cls = this.pop();
        this.stack.push(this.applyCallable(cls, args));
        return;
      }
      case 0x62: { // BUILD
        const state = this.pop();
        const target = this.top();
        if (target instanceof PyDict && state instanceof PyDict) {
          for (const [k, v] of state.items()) target.set(k, v);
        }
        // other states are ignored: consumers read container structure only
        return;
      }
      case 0x51: { // BINPERSID
        const pid = this.pop();
        if (!this.options.persistentLoad) {
          throw new PickleError("pickle contains persistent ids but no persistentLoad was given");
        }
        this.stack.push(this.options.persistentLoad(pid));
        return;
      }
      default:
        throw new PickleError(
          `unsupported pickle opcode 0x${op.toString(16)} at offset ${this.pos - 1}`
        );
    }
  }

  private applyCallable(fn: PickleValue, args: PickleValue): PickleValue {
    if (!(fn instanceof GlobalRef)) {
      throw new PickleError("REDUCE/NEWOBJ callable is not a global reference");
    }
    const reducer = this.reducers[fn.qualified];
    if (!reducer) {
      throw new PickleError(`no reducer registered for ${fn.qualified}`);
    }
    const argList = args instanceof PyTuple ? args.items : [args];
    return reducer(argList);
  }

  // --- stack/memo helpers ---

  private pop(): PickleValue {
    const v = this.stack.pop();
    if (v === undefined || v === MARK) throw new PickleError("pickle stack underflow");
    return v;
  }

  private popN(n: number): PickleValue[] {
    const out = this.stack.splice(this.stack.length - n, n);
    if (out.length !== n || out.includes(MARK)) throw new PickleError("pickle stack underflow");
    return out as PickleValue[];
  }

  private popToMark(): PickleValue[] {
    const idx = this.stack.lastIndexOf(MARK);
    if (idx < 0) throw new PickleError("no MARK on pickle stack");
    const items = this.stack.splice(idx + 1) as PickleValue[];
    this.stack.pop(); // the mark
    return items;
  }

  private top(): PickleValue {
    const v = this.stack[this.stack.length - 1];
    if (v === undefined || v === MARK) throw new PickleError("pickle stack underflow");
    return v;
  }

  private memoGet(i: number): PickleValue {
    const v = this.memo.get(i);
    if (v === undefined) throw new PickleError(`memo index ${i} unset`);
    return v;
  }

  // --- byte readers ---

  private u8(): number {
    if (this.pos >= this.data.length) throw new PickleError("truncated pickle");
    return this.data[this.pos++];
  }

  private u16(): number {
    const v = this.view.getUint16(this.pos, true);
    this.pos += 2;
    return v;
  }

  private u32(): number {
    const v = this.view.getUint32(this.pos, true);
    this.pos += 4;
    return v;
  }

  private u64(): number {
    const v = this.view.getBigUint64(this.pos, true);
    this.pos += 8;
    if (v > BigInt(Number.MAX_SAFE_INTEGER)) throw new PickleError("64-bit length too large");
    return Number(v);
  }

  private i32(): number {
    const v = this.view.getInt32(this.pos, true);
    this.pos += 4;
    return v;
  }

  private longLE(n: number): number {
    // little-endian two's-complement integer of n bytes
    if (n === 0) return 0;
    let value = BigInt(0);
    for (let i = 0; i < n; i++) {
      value |= BigInt(this.u8()) << BigInt(8 * i);
    }
    const signBit = BigInt(1) << BigInt(8 * n - 1);
    if (value & signBit) value -= BigInt(1) << BigInt(8 * n);
    if (value > BigInt(Number.MAX_SAFE_INTEGER) || value < -BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new PickleError("integer exceeds the safe double range");
    }
    return Number(value);
  }

  private utf8(n: number): string {
    const s = Buffer.from(this.data.buffer, this.data.byteOffset + this.pos, n).toString("utf-8");
    this.pos += n;
    return s;
  }

  private bytes(n: number): Uint8Array {
    const b = this.data.subarray(this.pos, this.pos + n);
    this.pos += n;
    return b;
  }

  private line(): string {
    let end = this.pos;
    while (end < this.data.length && this.data[end] !== 0x0a) end++;
    const s = Buffer.from(this.data.buffer, this.data.byteOffset + this.pos, end - this.pos)
      .toString("ascii");
    this.pos = end + 1;
    return s;
  }
}

// --- writer (protocol 4 subset, used by tests to build synthetic archives) ---

export function dumps(value: PickleValue): Uint8Array {
  const chunks: number[] = [0x80, 4]; // PROTO 4
  writeValue(value, chunks);
  chunks.push(0x2e); // STOP
  return Uint8Array.from(chunks);
}

function writeValue(value: PickleValue, out: number[]): void {
  if (value === null) {
    out.push(0x4e);
  } else if (typeof value === "boolean") {
    out.push(value ? 0x88 : 0x89);
  } else if (typeof value === "number") {
    writeInt(value, out);
  } else if (typeof value === "string") {
    const bytes = Buffer.from(value, "utf-8");
    if (bytes.length < 256) {
      out.push(0x8c, bytes.length);
    } else {
      out.push(0x58);
      pushU32(bytes.length, out);
    }
    out.push(...bytes);
  } else if (value instanceof PyTuple) {
    if (value.items.length >= 1 && value.items.length <= 3) {
      for (const item of value.items) writeValue(item, out);
      out.push(0x84 + value.items.length); // TUPLE1/2/3
    } else if (value.items.length === 0) {
      out.push(0x29);
    } else {
      out.push(0x28);
      for (const item of value.items) writeValue(item, out);
      out.push(0x74);
    }
  } else if (Array.isArray(value)) {
    out.push(0x5d, 0x28);
    for (const item of value) writeValue(item, out);
    out.push(0x65);
  } else if (value instanceof PySet) {
    if (value.frozen) {
      out.push(0x28);
      for (const item of value.values()) writeValue(item, out);
      out.push(0x91);
    } else {
      out.push(0x8f, 0x28);
      for (const item of value.values()) writeValue(item, out);
      out.push(0x90);
    }
  } else if (value instanceof PyDict) {
    out.push(0x7d, 0x28);
    for (const [k, v] of value.items()) {
      writeValue(k, out);
      writeValue(v, out);
    }
    out.push(0x75);
  } else if (value instanceof GlobalRef) {
    writeValue(value.module, out);
    writeValue(value.name, out);
    out.push(0x93);
  } else {
    throw new PickleError(`cannot pickle value of type ${typeof value}`);
  }
}

function writeInt(value: number, out: number[]): void {
  if (!Number.isInteger(value)) {
    out.push(0x47);
    const buf = Buffer.alloc(8);
    buf.writeDoubleBE(value);
    out.push(...buf);
    return;
  }
  if (value >= 0 && value < 256) {
    out.push(0x4b, value);
  } else if (value >= 0 && value < 65536) {
    out.push(0x4d, value & 0xff, (value >> 8) & 0xff);
  } else if (value >= -0x80000000 && value <= 0x7fffffff) {
    out.push(0x4a);
    const buf = Buffer.alloc(4);
    buf.writeInt32LE(value);
    out.push(...buf);
  } else {
    const buf = Buffer.alloc(8);
    buf.writeBigInt64LE(BigInt(value));
    out.push(0x8a, 8, ...buf);
  }
}

function pushU32(value: number, out: number[]): void {
  const buf = Buffer.alloc(4);
  buf.writeUInt32LE(value);
  out.push(...buf);
}
