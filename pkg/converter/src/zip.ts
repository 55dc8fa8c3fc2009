/**
 * Minimal zip reader: enough for numpy .npz archives and torch checkpoints
 * (stored or deflated entries, optional zip64 sizes, local extra-field
 * padding as used by torch's 64-byte storage alignment).
 */

import * as zlib from "node:zlib";

export class ZipError extends Error {}

export interface ZipEntry {
  name: string;
  method: number;
  compressedSize: number;
  uncompressedSize: number;
  localHeaderOffset: number;
}

const EOCD_SIG = 0x06054b50;
const EOCD64_LOCATOR_SIG = 0x07064b50;
const EOCD64_SIG = 0x06064b50;
const CENTRAL_SIG = 0x02014b50;
const LOCAL_SIG = 0x04034b50;
const U32_MAX = 0xffffffff;

export class ZipReader {
  readonly entries = new Map<string, ZipEntry>();

  constructor(private data: Buffer) {
    this.parseCentralDirectory();
  }

  names(): string[] {
    return [...this.entries.keys()];
  }

  read(name: string): Buffer {
    const entry = this.entries.get(name);
    if (!entry) throw new ZipError(`no zip entry named ${name}`);
    const off = entry.localHeaderOffset;
    if (this.data.readUInt32LE(off) !== LOCAL_SIG) {
      throw new ZipError(`bad local header for ${name}`);
    }
    const nameLen = this.data.readUInt16LE(off + 26);
    const extraLen = this.data.readUInt16LE(off + 28);
    const start = off + 30 + nameLen + extraLen;
    const raw = this.data.subarray(start, start + entry.compressedSize);
    if (entry.method === 0) return Buffer.from(raw);
    if (entry.method === 8) return zlib.inflateRawSync(raw);
    throw new ZipError(`unsupported compression method ${entry.method} for ${name}`);
  }

  private parseCentralDirectory(): void {
    const eocd = this.findEocd();
    let count = this.data.readUInt16LE(eocd + 10);
    let cdOffset = this.data.readUInt32LE(eocd + 16);
    if (count === 0xffff || cdOffset === U32_MAX) {
      const locator = eocd - 20;
      if (locator < 0 || this.data.readUInt32LE(locator) !== EOCD64_LOCATOR_SIG) {
        throw new ZipError("zip64 archive without a zip64 locator");
      }
      const eocd64 = Number(this.data.readBigUInt64LE(locator + 8));
      if (this.data.readUInt32LE(eocd64) !== EOCD64_SIG) {
        throw new ZipError("bad zip64 end-of-central-directory record");
      }
      count = Number(this.data.readBigUInt64LE(eocd64 + 32));
      cdOffset = Number(this.data.readBigUInt64LE(eocd64 + 48));
    }
    let pos = cdOffset;
    for (let i = 0; i < count; i++) {
      if (this.data.readUInt32LE(pos) !== CENTRAL_SIG) {
        throw new ZipError(`bad central-directory signature at ${pos}`);
      }
      const method = this.data.readUInt16LE(pos + 10);
      let compressedSize: number = this.data.readUInt32LE(pos + 20);
      let uncompressedSize: number = this.data.readUInt32LE(pos + 24);
      const nameLen = this.data.readUInt16LE(pos + 28);
      const extraLen = this.data.readUInt16LE(pos + 30);
      const commentLen = this.data.readUInt16LE(pos + 32);
      let localHeaderOffset: number = this.data.readUInt32LE(pos + 42);
      const name = this.data.subarray(pos + 46, pos + 46 + nameLen).toString("utf-8");

      // zip64 extra field overrides saturated 32-bit values
      let extraPos = pos + 46 + nameLen;
      const extraEnd = extraPos + extraLen;
      while (extraPos + 4 <= extraEnd) {
        const tag = this.data.readUInt16LE(extraPos);
        const size = this.data.readUInt16LE(extraPos + 2);
        if (tag === 0x0001) {
          let fieldPos = extraPos + 4;
          if (uncompressedSize === U32_MAX) {
            uncompressedSize = Number(this.data.readBigUInt64LE(fieldPos));
            fieldPos += 8;
          }
          if (compressedSize === U32_MAX) {
            compressedSize = Number(this.data.readBigUInt64LE(fieldPos));
            fieldPos += 8;
          }
          if (localHeaderOffset === U32_MAX) {
            localHeaderOffset = Number(this.data.readBigUInt64LE(fieldPos));
          }
        }
        extraPos += 4 + size;
      }

      this.entries.set(name, {
        name,
        method,
        compressedSize,
        uncompressedSize,
        localHeaderOffset,
      });
      pos += 46 + nameLen + extraLen + commentLen;
    }
  }

  private findEocd(): number {
    const maxScan = Math.min(this.data.length, 65557);
    for (let i = this.data.length - 22; i >= this.data.length - maxScan; i--) {
      if (i >= 0 && this.data.readUInt32LE(i) === EOCD_SIG) return i;
    }
    throw new ZipError("not a zip archive (no end-of-central-directory record)");
  }
}

/** Minimal STORED-only zip writer, used by tests to fabricate npz archives. */
export function writeZip(entries: Map<string, Buffer>): Buffer {
  const chunks: Buffer[] = [];
  const central: Buffer[] = [];
  let offset = 0;
  for (const [name, data] of entries) {
    const nameBuf = Buffer.from(name, "utf-8");
    const crc = zlib.crc32(data);
    const local = Buffer.alloc(30);
    local.writeUInt32LE(LOCAL_SIG, 0);
    local.writeUInt16LE(20, 4); // version needed
    local.writeUInt16LE(0, 8); // method: stored
    local.writeUInt32LE(crc, 14);
    local.writeUInt32LE(data.length, 18);
    local.writeUInt32LE(data.length, 22);
    local.writeUInt16LE(nameBuf.length, 26);
    chunks.push(local, nameBuf, data);

    const cd = Buffer.alloc(46);
    cd.writeUInt32LE(CENTRAL_SIG, 0);
    cd.writeUInt16LE(20, 6); // version needed
    cd.writeUInt32LE(crc, 16);
    cd.writeUInt32LE(data.length, 20);
    cd.writeUInt32LE(data.length, 24);
    cd.writeUInt16LE(nameBuf.length, 28);
    cd.writeUInt32LE(offset, 42);
    central.push(cd, nameBuf);
    offset += 30 + nameBuf.length + data.length;
  }
  const cdStart = offset;
  const cdBuf = Buffer.concat(central);
  const eocd = Buffer.alloc(22);
  eocd.writeUInt32LE(EOCD_SIG, 0);
  eocd.writeUInt16LE(entries.size, 8);
  eocd.writeUInt16LE(entries.size, 10);
  eocd.writeUInt32LE(cdBuf.length, 12);
  eocd.writeUInt32LE(cdStart, 16);
  return Buffer.concat([...chunks, cdBuf, eocd]);
}
