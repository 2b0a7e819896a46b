// Mask-conditioned DDIM inpainting with a manifold-consistency correction.
//
// The sampler is model-agnostic: an EpsilonModel predicts the noise
// content of a latent at a given diffusion time, and an optional codec
// maps pixels to/from latent space (identity when absent, i.e. pixel-space
// diffusion). Conditioning on the known region uses (a) forward-diffused
// replacement of known pixels at every step and (b) a correction that
// pulls the running clean estimate toward the known data before the DDIM
// update, which suppresses error accumulation over long trajectories.

export interface Tensor {
  data: Float32Array;
  shape: number[]; // [h, w, c]
}

export interface EpsilonModel {
  channels: number;
  // predicted noise for latent z at diffusion time index t (0..steps-1,
  // ascending noise)
  epsilon(z: Tensor, alphaBar: number): Promise<Tensor> | Tensor;
}

export interface LatentCodec {
  encode(pixels: Tensor): Promise<Tensor> | Tensor;
  decode(latent: Tensor): Promise<Tensor> | Tensor;
  scale: number; // spatial downsampling factor of the latent grid
}

export interface DdimOptions {
  steps: number;
  mcgWeight: number; // 0 disables the consistency correction
  seed: number;
}

export function zeros(shape: number[]): Tensor {
  return { data: new Float32Array(shape.reduce((a, b) => a * b, 1)), shape };
}

// xorshift128+ keeps sampling reproducible without a native RNG
export function makeRng(seed: number): () => number {
  let s0 = BigInt(seed) ^ 0x9e3779b97f4a7c15n;
  let s1 = (BigInt(seed) * 0xbf58476d1ce4e5b9n + 1n) & 0xffffffffffffffffn;
  return () => {
    let x = s0;
    const y = s1;
    s0 = y;
    x ^= (x << 23n) & 0xffffffffffffffffn;
    s1 = x ^ y ^ (x >> 17n) ^ (y >> 26n);
    const out = (s1 + y) & 0xffffffffffffffffn;
    return Number(out >> 11n) / 9007199254740992;
  };
}

export function gaussianNoise(shape: number[], rng: () => number): Tensor {
  const t = zeros(shape);
  for (let i = 0; i < t.data.length; i += 2) {
    const u1 = Math.max(rng(), 1e-12);
    const u2 = rng();
    const r = Math.sqrt(-2 * Math.log(u1));
    t.data[i] = r * Math.cos(2 * Math.PI * u2);
    if (i + 1 < t.data.length) t.data[i + 1] = r * Math.sin(2 * Math.PI * u2);
  }
  return t;
}

// cosine alpha-bar schedule (squared-cosine, clipped away from 0/1)
export function alphaBarSchedule(steps: number): number[] {
  const out: number[] = [];
  for (let t = 0; t < steps; t++) {
    const f = Math.cos((((t + 1) / steps + 0.008) / 1.008) * (Math.PI / 2));
    out.push(Math.min(0.9999, Math.max(1e-5, f * f)));
  }
  return out; // descending in t: out[0] nearly clean, out[steps-1] nearly pure noise
}

/**
 * Reverse-sample the masked region of `known`, keeping unmasked entries
 * anchored to the data. `maskInside` is 1 where content must be created.
 */
export async function ddimInpaintLatent(
  model: EpsilonModel,
  known: Tensor,
  maskInside: Uint8Array,
  opts: DdimOptions,
): Promise<Tensor> {
  const schedule = alphaBarSchedule(opts.steps);
  const rng = makeRng(opts.seed);
  const n = known.data.length;
  const c = known.shape[2];
  const px = n / c;
  if (maskInside.length !== px) {
    throw new Error(`mask length ${maskInside.length} does not match latent grid ${px}`);
  }

  let z = gaussianNoise(known.shape, rng);
  for (let ti = opts.steps - 1; ti >= 0; ti--) {
    const aBar = schedule[ti];
    const aPrev = ti > 0 ? schedule[ti - 1] : 1.0;
    const sq = Math.sqrt(aBar);
    const sqc = Math.sqrt(1 - aBar);

    // keep the known region on the forward-diffused data manifold
    const noise = gaussianNoise(known.shape, rng);
    for (let i = 0; i < n; i++) {
      if (!maskInside[(i / c) | 0]) {
        z.data[i] = sq * known.data[i] + sqc * noise.data[i];
      }
    }

    const eps = await model.epsilon(z, aBar);
    const x0 = zeros(known.shape);
    for (let i = 0; i < n; i++) {
      x0.data[i] = (z.data[i] - sqc * eps.data[i]) / sq;
    }

    // manifold-consistency correction: project the clean estimate toward
    // the known data before stepping, scaled by the residual weight
    if (opts.mcgWeight > 0) {
      for (let i = 0; i < n; i++) {
        if (!maskInside[(i / c) | 0]) {
          x0.data[i] -= opts.mcgWeight * (x0.data[i] - known.data[i]);
        }
      }
    }

    const sqPrev = Math.sqrt(aPrev);
    const sqcPrev = Math.sqrt(1 - aPrev);
    const next = zeros(known.shape);
    for (let i = 0; i < n; i++) {
      next.data[i] = sqPrev * x0.data[i] + sqcPrev * eps.data[i]; // eta = 0
    }
    z = next;
  }

  // exact data on the known region at the end
  for (let i = 0; i < n; i++) {
    if (!maskInside[(i / c) | 0]) z.data[i] = known.data[i];
  }
  return z;
}

export function pixelsToTensor(rgb: Uint8Array, width: number, height: number): Tensor {
  const t = zeros([height, width, 3]);
  for (let i = 0; i < rgb.length; i++) t.data[i] = rgb[i] / 127.5 - 1.0;
  return t;
}

export function tensorToPixels(t: Tensor): Uint8Array {
  const out = new Uint8Array(t.data.length);
  for (let i = 0; i < t.data.length; i++) {
    out[i] = Math.max(0, Math.min(255, Math.round((t.data[i] + 1.0) * 127.5)));
  }
  return out;
}
