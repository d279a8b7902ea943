// Binary frame codec for the NFC1 bridge protocol.
//
// Wire format (all integers little-endian u32, all floats float32 LE):
//   handshake  server -> client   "NFC1-HELLO\n", once on connect
//   config     client -> server   "NFCC" | T | T floats (cumulative alpha products)
//   request    client -> server   "NFC1" | t | H | W | C | H*W*C floats
//   response   server -> client   "NFC1" | status | payload (status 0 only)

export const MAGIC_REQUEST = Buffer.from("NFC1", "ascii");
export const MAGIC_CONFIG = Buffer.from("NFCC", "ascii");
export const HELLO = Buffer.from("NFC1-HELLO\n", "ascii");

export const STATUS_OK = 0;
export const STATUS_ERROR = 1;

// Guards against nonsense headers; a malformed length field must not make
// the parser wait forever for petabytes that will never arrive.
export const MAX_PIXELS = 1 << 24;
export const MAX_SCHEDULE = 1 << 20;

const REQUEST_HEADER_BYTES = 20; // magic + t + H + W + C
const CONFIG_HEADER_BYTES = 8; // magic + T

export interface RequestFrame {
  kind: "request";
  t: number;
  height: number;
  width: number;
  channels: number;
  /** Raw float32 LE payload, exactly height*width*channels values. */
  payload: Buffer;
}

export interface ConfigFrame {
  kind: "config";
  alphaBar: Float64Array;
}

export interface MalformedFrame {
  kind: "malformed";
  reason: string;
}

export type Frame = RequestFrame | ConfigFrame | MalformedFrame;

export function decodePayload(payload: Buffer): Float64Array {
  const count = payload.length / 4;
  const view = new DataView(payload.buffer, payload.byteOffset, payload.length);
  const values = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    values[i] = view.getFloat32(4 * i, true);
  }
  return values;
}

export function encodePayload(values: Float64Array): Buffer {
  const out = Buffer.allocUnsafe(4 * values.length);
  const view = new DataView(out.buffer, out.byteOffset, out.length);
  for (let i = 0; i < values.length; i++) {
    view.setFloat32(4 * i, values[i], true);
  }
  return out;
}

export function encodeResponse(status: number, payload?: Buffer): Buffer {
  const header = Buffer.allocUnsafe(8);
  MAGIC_REQUEST.copy(header, 0);
  header.writeUInt32LE(status >>> 0, 4);
  if (status === STATUS_OK && payload !== undefined) {
    return Buffer.concat([header, payload]);
  }
  return header;
}

export function encodeRequest(
  t: number,
  height: number,
  width: number,
  channels: number,
  payload: Buffer,
): Buffer {
  const header = Buffer.allocUnsafe(REQUEST_HEADER_BYTES);
  MAGIC_REQUEST.copy(header, 0);
  header.writeUInt32LE(t >>> 0, 4);
  header.writeUInt32LE(height >>> 0, 8);
  header.writeUInt32LE(width >>> 0, 12);
  header.writeUInt32LE(channels >>> 0, 16);
  return Buffer.concat([header, payload]);
}

export function encodeConfig(alphaBar: Float64Array): Buffer {
  const header = Buffer.allocUnsafe(CONFIG_HEADER_BYTES);
  MAGIC_CONFIG.copy(header, 0);
  header.writeUInt32LE(alphaBar.length >>> 0, 4);
  return Buffer.concat([header, encodePayload(alphaBar)]);
}

/**
 * Incremental frame parser over an arbitrarily chunked byte stream.
 *
 * `push` appends bytes; `next` returns one parsed frame, a malformed
 * marker, or null when more bytes are needed.  After a malformed marker
 * the parser has already discarded bytes up to the next recognizable
 * magic, so the session can keep serving.
 */
export class FrameParser {
  private buffer: Buffer = Buffer.alloc(0);

  push(chunk: Buffer): void {
    this.buffer = this.buffer.length === 0 ? Buffer.from(chunk) : Buffer.concat([this.buffer, chunk]);
  }

  next(): Frame | null {
    if (this.buffer.length < 4) {
      return null;
    }
    const magic = this.buffer.subarray(0, 4);
    if (magic.equals(MAGIC_REQUEST)) {
      return this.parseRequest();
    }
    if (magic.equals(MAGIC_CONFIG)) {
      return this.parseConfig();
    }
    return this.resync();
  }

  private consume(n: number): void {
    this.buffer = Buffer.from(this.buffer.subarray(n));
  }

  private parseRequest(): Frame | null {
    if (this.buffer.length < REQUEST_HEADER_BYTES) {
      return null;
    }
    const t = this.buffer.readUInt32LE(4);
    const height = this.buffer.readUInt32LE(8);
    const width = this.buffer.readUInt32LE(12);
    const channels = this.buffer.readUInt32LE(16);
    const count = height * width * channels;
    if (height < 1 || width < 1 || channels < 1 || count > MAX_PIXELS) {
      this.consume(REQUEST_HEADER_BYTES);
      return { kind: "malformed", reason: `bad request dims ${height}x${width}x${channels}` };
    }
    const total = REQUEST_HEADER_BYTES + 4 * count;
    if (this.buffer.length < total) {
      return null;
    }
    const payload = Buffer.from(this.buffer.subarray(REQUEST_HEADER_BYTES, total));
    this.consume(total);
    return { kind: "request", t, height, width, channels, payload };
  }

  private parseConfig(): Frame | null {
    if (this.buffer.length < CONFIG_HEADER_BYTES) {
      return null;
    }
    const length = this.buffer.readUInt32LE(4);
    if (length < 1 || length > MAX_SCHEDULE) {
      this.consume(CONFIG_HEADER_BYTES);
      return { kind: "malformed", reason: `bad schedule length ${length}` };
    }
    const total = CONFIG_HEADER_BYTES + 4 * length;
    if (this.buffer.length < total) {
      return null;
    }
    const alphaBar = decodePayload(this.buffer.subarray(CONFIG_HEADER_BYTES, total));
    this.consume(total);
    return { kind: "config", alphaBar };
  }

  private resync(): MalformedFrame {
    const atRequest = this.buffer.indexOf(MAGIC_REQUEST, 1);
    const atConfig = this.buffer.indexOf(MAGIC_CONFIG, 1);
    const candidates = [atRequest, atConfig].filter((i) => i >= 1);
    if (candidates.length > 0) {
      const skip = Math.min(...candidates);
      this.consume(skip);
      return { kind: "malformed", reason: `skipped ${skip} bytes of unrecognized input` };
    }
    // no magic in sight; keep a 3-byte tail in case one is split across chunks
    const skip = Math.max(this.buffer.length - 3, 1);
    this.consume(skip);
    return { kind: "malformed", reason: `skipped ${skip} bytes of unrecognized input` };
  }
}
