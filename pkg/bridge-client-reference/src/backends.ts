// Denoiser backends: what the server answers a request frame with.
//
// A backend receives the raw request frame and returns the float32 LE
// response payload (exactly as many values as the request carried).
// Throwing signals a per-request failure; the session answers status 1
// and keeps serving.

import { RequestFrame, decodePayload, encodePayload } from "./frames.js";

export interface Backend {
  configure(alphaBar: Float64Array): void;
  predict(frame: RequestFrame): Buffer;
}

/** Returns the request payload untouched, byte for byte. */
export class EchoBackend implements Backend {
  configure(_alphaBar: Float64Array): void {}

  predict(frame: RequestFrame): Buffer {
    return frame.payload;
  }
}

/** Normalized Gaussian taps out to three sigma; sigma 0 degenerates to [1]. */
export function gaussianTaps(sigma: number): Float64Array {
  if (!(Number.isFinite(sigma) && sigma >= 0)) {
    throw new Error(`sigma must be finite and >= 0, got ${sigma}`);
  }
  if (sigma === 0) {
    return Float64Array.of(1);
  }
  const radius = Math.max(1, Math.ceil(3 * sigma));
  const taps = new Float64Array(2 * radius + 1);
  let sum = 0;
  for (let k = -radius; k <= radius; k++) {
    const w = Math.exp(-0.5 * (k / sigma) ** 2);
    taps[k + radius] = w;
    sum += w;
  }
  for (let i = 0; i < taps.length; i++) {
    taps[i] /= sum;
  }
  return taps;
}

/** Separable wrap-around Gaussian smoothing of an H x W x C field. */
export function smoothCircular(
  values: Float64Array,
  height: number,
  width: number,
  channels: number,
  sigma: number,
): Float64Array {
  const taps = gaussianTaps(sigma);
  const radius = (taps.length - 1) / 2;
  if (radius === 0) {
    return Float64Array.from(values);
  }
  const rows = new Float64Array(values.length);
  for (let r = 0; r < height; r++) {
    for (let c = 0; c < width; c++) {
      for (let ch = 0; ch < channels; ch++) {
        let acc = 0;
        for (let k = -radius; k <= radius; k++) {
          const cc = (((c + k) % width) + width) % width;
          acc += taps[k + radius] * values[(r * width + cc) * channels + ch];
        }
        rows[(r * width + c) * channels + ch] = acc;
      }
    }
  }
  const out = new Float64Array(values.length);
  for (let r = 0; r < height; r++) {
    for (let c = 0; c < width; c++) {
      for (let ch = 0; ch < channels; ch++) {
        let acc = 0;
        for (let k = -radius; k <= radius; k++) {
          const rr = (((r + k) % height) + height) % height;
          acc += taps[k + radius] * rows[(rr * width + c) * channels + ch];
        }
        out[(r * width + c) * channels + ch] = acc;
      }
    }
  }
  return out;
}

/**
 * Toy schedule-aware denoiser: treats the smoothed field as the clean
 * estimate and reports the noise that explains the rest of the input,
 * eps = (x_t - sqrt(ab_t) * smooth(x_t)) / sqrt(1 - ab_t).
 *
 * Needs the schedule from a config frame before the first request.
 */
export class GaussianSmoothBackend implements Backend {
  private alphaBar: Float64Array | null = null;

  constructor(private readonly sigma: number) {
    if (!(Number.isFinite(sigma) && sigma >= 0)) {
      throw new Error(`sigma must be finite and >= 0, got ${sigma}`);
    }
  }

  configure(alphaBar: Float64Array): void {
    this.alphaBar = alphaBar;
  }

  predict(frame: RequestFrame): Buffer {
    if (this.alphaBar === null) {
      throw new Error("no schedule configured; send a config frame first");
    }
    if (frame.t >= this.alphaBar.length) {
      throw new Error(`timestep ${frame.t} outside schedule of length ${this.alphaBar.length}`);
    }
    const ab = this.alphaBar[frame.t];
    if (!(ab > 0 && ab < 1)) {
      throw new Error(`alpha_bar[${frame.t}] = ${ab} outside (0, 1)`);
    }
    const x = decodePayload(frame.payload);
    const smoothed = smoothCircular(x, frame.height, frame.width, frame.channels, this.sigma);
    const sqrtAb = Math.sqrt(ab);
    const denom = Math.sqrt(1 - ab);
    const eps = new Float64Array(x.length);
    for (let i = 0; i < x.length; i++) {
      eps[i] = (x[i] - sqrtAb * smoothed[i]) / denom;
    }
    return encodePayload(eps);
  }
}
