/** Reader for torch zip checkpoints: extracts named 2-d float tensors. */

import { Matrix } from "./npy";
import {
  GlobalRef,
  PickleValue,
  PyDict,
  PyTuple,
  loads,
} from "./pickle";
import { ZipReader } from "./zip";

export class CheckpointError extends Error {}

interface StorageRef {
  kind: "storage";
  key: string;
  numel: number;
  dtype: "f32" | "f64";
}

interface TensorStub {
  kind: "tensor";
  storage: StorageRef;
  offset: number;
  shape: number[];
  stride: number[];
}

const STORAGE_DTYPES: Record<string, "f32" | "f64"> = {
  "torch.FloatStorage": "f32",
  "torch.DoubleStorage": "f64",
};

function persistentLoad(pid: PickleValue): PickleValue {
  if (!(pid instanceof PyTuple) || pid.items[0] !== "storage") {
    throw new CheckpointError("unsupported persistent id in checkpoint");
  }
  const [, storageType, key, , numel] = pid.items;
  if (!(storageType instanceof GlobalRef)) {
    throw new CheckpointError("persistent id lacks a storage type");
  }
  const dtype = STORAGE_DTYPES[storageType.qualified];
  if (!dtype) {
    throw new CheckpointError(`unsupported storage type ${storageType.qualified}`);
  }
  const ref: StorageRef = { kind: "storage", key: String(key), numel: Number(numel), dtype };
  return ref as unknown as PickleValue;
}

function rebuildTensor(args: PickleValue[]): PickleValue {
  const [storage, offset, size, stride] = args;
  const ref = storage as unknown as StorageRef;
  if (!ref || ref.kind !== "storage") {
    throw new CheckpointError("_rebuild_tensor_v2 got a non-storage argument");
  }
  const stub: TensorStub = {
    kind: "tensor",
    storage: ref,
    offset: Number(offset),
    shape: (size as PyTuple).items.map(Number),
    stride: (stride as PyTuple).items.map(Number),
  };
  return stub as unknown as PickleValue;
}

const TORCH_REDUCERS = {
  "torch._utils._rebuild_tensor_v2": rebuildTensor,
  "torch._utils._rebuild_parameter": (args: PickleValue[]) => args[0],
};

/** Load every 2-d float tensor from the checkpoint, keyed by dotted path. */
export function readTorchCheckpoint(data: Buffer): Map<string, Matrix> {
  const zip = new ZipReader(data);
  const pklName = zip.names().find((n) => n.endsWith("/data.pkl") || n === "data.pkl");
  if (!pklName) throw new CheckpointError("checkpoint has no data.pkl (not a torch zip file?)");
  const prefix = pklName.slice(0, pklName.length - "data.pkl".length);
  const byteorderName = `${prefix}byteorder`;
  if (zip.entries.has(byteorderName)) {
    const order = zip.read(byteorderName).toString("ascii").trim();
    if (order !== "little") throw new CheckpointError(`unsupported byte order ${order}`);
  }
  const root = loads(zip.read(pklName), {
    persistentLoad,
    reducers: TORCH_REDUCERS,
  });

  const out = new Map<string, Matrix>();
  collectTensors(root, "", (path, stub) => {
    if (stub.shape.length !== 2) return;
    const [rows, cols] = stub.shape;
    if (stub.stride[0] !== cols || stub.stride[1] !== 1) {
      throw new CheckpointError(`tensor ${path} is not contiguous row-major`);
    }
    const raw = zip.read(`${prefix}data/${stub.storage.key}`);
    const itemSize = stub.storage.dtype === "f32" ? 4 : 8;
    const count = rows * cols;
    const start = stub.offset * itemSize;
    if (raw.length < start + count * itemSize) {
      throw new CheckpointError(`storage ${stub.storage.key} is too small for ${path}`);
    }
    const values = new Float64Array(count);
    for (let i = 0; i < count; i++) {
      values[i] =
        stub.storage.dtype === "f32"
          ? raw.readFloatLE(start + i * 4)
          : raw.readDoubleLE(start + i * 8);
    }
    out.set(path, { rows, cols, data: values, sourceDtype: stub.storage.dtype });
  });
  return out;
}

function collectTensors(
  value: PickleValue,
  path: string,
  emit: (path: string, stub: TensorStub) => void
): void {
  const maybe = value as unknown as TensorStub;
  if (maybe && typeof maybe === "object" && maybe.kind === "tensor") {
    emit(path, maybe);
    return;
  }
  if (value instanceof PyDict) {
    for (const [k, v] of value.items()) {
      const key = typeof k === "string" ? k : String(k);
      collectTensors(v, path ? `${path}.${key}` : key, emit);
    }
  } else if (Array.isArray(value)) {
    value.forEach((v, i) => collectTensors(v, `${path}[${i}]`, emit));
  } else if (value instanceof PyTuple) {
    value.items.forEach((v, i) => collectTensors(v, `${path}[${i}]`, emit));
  }
}
