// Session wiring: one byte stream in, one byte stream out.
//
// The session greets with the hello line, then answers every request
// frame with exactly one response frame.  Config frames update the
// backend and get no response.  Malformed input costs one status-1
// response and the stream stays up.

import { Backend } from "./backends.js";
import { FrameParser, HELLO, RequestFrame, STATUS_ERROR, STATUS_OK, encodeResponse } from "./frames.js";

export class Session {
  private readonly parser = new FrameParser();

  constructor(
    private readonly backend: Backend,
    private readonly write: (data: Buffer) => void,
  ) {}

  start(): void {
    this.write(Buffer.from(HELLO));
  }

  feed(chunk: Buffer): void {
    this.parser.push(chunk);
    for (;;) {
      const frame = this.parser.next();
      if (frame === null) {
        return;
      }
      if (frame.kind === "config") {
        this.backend.configure(frame.alphaBar);
      } else if (frame.kind === "malformed") {
        this.write(encodeResponse(STATUS_ERROR));
      } else {
        this.answer(frame);
      }
    }
  }

  private answer(frame: RequestFrame): void {
    let payload: Buffer;
    try {
      payload = this.backend.predict(frame);
    } catch {
      this.write(encodeResponse(STATUS_ERROR));
      return;
    }
    this.write(encodeResponse(STATUS_OK, payload));
  }
}
