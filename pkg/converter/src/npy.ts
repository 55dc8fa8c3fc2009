/** Parser for the .npy array format (versions 1.0/2.0, C-order, <f4/<f8). */

export class NpyError extends Error {}

export interface Matrix {
  rows: number;
  cols: number;
  /** row-major values */
  data: Float64Array;
  sourceDtype: "f32" | "f64";
}

const MAGIC = Buffer.from("\x93NUMPY", "latin1");

export function parseNpy(buf: Buffer): Matrix {
  if (!buf.subarray(0, 6).equals(MAGIC)) throw new NpyError("not an .npy file");
  const major = buf[6];
  let headerLen: number;
  let headerStart: number;
  if (major === 1) {
    headerLen = buf.readUInt16LE(8);
    headerStart = 10;
  } else if (major === 2 || major === 3) {
    headerLen = buf.readUInt32LE(8);
    headerStart = 12;
  } else {
    throw new NpyError(`unsupported .npy version ${major}`);
  }
  const header = buf.subarray(headerStart, headerStart + headerLen).toString("latin1");
  const descr = /['"]descr['"]\s*:\s*['"]([^'"]+)['"]/.exec(header)?.[1];
  const fortran = /['"]fortran_order['"]\s*:\s*(True|False)/.exec(header)?.[1];
  const shapeText = /['"]shape['"]\s*:\s*\(([^)]*)\)/.exec(header)?.[1];
  if (!descr || !fortran || shapeText === undefined) {
    throw new NpyError(`unparsable .npy header: ${header.trim()}`);
  }
  if (fortran === "True") throw new NpyError("fortran-order arrays are not supported");
  const dims = shapeText.split(",").map((s) => s.trim()).filter((s) => s.length > 0)
    .map((s) => parseInt(s, 10));
  if (dims.length !== 2) throw new NpyError(`expected a 2-d array, got shape (${shapeText})`);
  const [rows, cols] = dims;
  const payload = buf.subarray(headerStart + headerLen);
  const count = rows * cols;
  let data: Float64Array;
  let sourceDtype: "f32" | "f64";
  if (descr === "<f4") {
    if (payload.length < count * 4) throw new NpyError("truncated .npy payload");
    const f32 = new Float32Array(count);
    for (let i = 0; i < count; i++) f32[i] = payload.readFloatLE(i * 4);
    data = Float64Array.from(f32);
    sourceDtype = "f32";
  } else if (descr === "<f8") {
    if (payload.length < count * 8) throw new NpyError("truncated .npy payload");
    data = new Float64Array(count);
    for (let i = 0; i < count; i++) data[i] = payload.readDoubleLE(i * 8);
    sourceDtype = "f64";
  } else {
    throw new NpyError(`unsupported dtype ${descr} (need <f4 or <f8)`);
  }
  return { rows, cols, data, sourceDtype };
}

/** Serialize a row-major matrix as .npy v1.0, <f4 or <f8 (test helper). */
export function writeNpy(matrix: Matrix, as: "f32" | "f64" = "f32"): Buffer {
  const descr = as === "f32" ? "<f4" : "<f8";
  let header = `{'descr': '${descr}', 'fortran_order': False, 'shape': (${matrix.rows}, ${matrix.cols}), }`;
  const baseLen = 10 + header.length + 1;
  header += " ".repeat((64 - (baseLen % 64)) % 64) + "\n";
  const head = Buffer.alloc(10 + header.length);
  MAGIC.copy(head, 0);
  head[6] = 1;
  head[7] = 0;
  head.writeUInt16LE(header.length, 8);
  head.write(header, 10, "latin1");
  const itemSize = as === "f32" ? 4 : 8;
  const payload = Buffer.alloc(matrix.rows * matrix.cols * itemSize);
  for (let i = 0; i < matrix.data.length; i++) {
    if (as === "f32") payload.writeFloatLE(Math.fround(matrix.data[i]), i * 4);
    else payload.writeDoubleLE(matrix.data[i], i * 8);
  }
  return Buffer.concat([head, payload]);
}
