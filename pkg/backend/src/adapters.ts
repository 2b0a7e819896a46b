// Pretrained-model adapters. Both load ONNX weights through a dynamic
// import of onnxruntime-node; when the runtime or the weights are absent
// the corresponding capability is omitted from the hello reply rather
// than failing the process, so a partially provisioned host still serves
// what it can.

import { existsSync } from 'node:fs';
import { BackendHandlers, mergeUnmasked } from './protocol.js';
import { RawImage, RawMask } from './png.js';
import {
  DdimOptions,
  EpsilonModel,
  Tensor,
  ddimInpaintLatent,
  pixelsToTensor,
  tensorToPixels,
  zeros,
} from './ddim.js';

export interface AdapterConfig {
  segmentModelPath?: string;
  inpaintModelPath?: string;
  steps: number; // sampling steps, 500 unless the request overrides
  mcgEnabled: boolean;
  device: string;
  seed: number;
}

type OrtModule = typeof import('onnxruntime-node');

async function loadOrt(): Promise<OrtModule | null> {
  try {
    return await import('onnxruntime-node');
  } catch {
    return null;
  }
}

async function loadSession(ort: OrtModule, path: string) {
  return ort.InferenceSession.create(path, { executionProviders: ['cpu'] });
}

/**
 * Point-prompt segmentation over a single ONNX graph taking a normalized
 * CHW image tensor plus a (x, y) prompt and yielding per-pixel mask
 * logits at image resolution.
 */
async function makeSegmenter(ort: OrtModule, path: string) {
  const session = await loadSession(ort, path);
  return async (img: RawImage, point: [number, number]): Promise<RawMask> => {
    const chw = new Float32Array(3 * img.height * img.width);
    const px = img.height * img.width;
    for (let i = 0; i < px; i++) {
      chw[i] = img.rgb[i * 3] / 255;
      chw[px + i] = img.rgb[i * 3 + 1] / 255;
      chw[2 * px + i] = img.rgb[i * 3 + 2] / 255;
    }
    const feeds: Record<string, unknown> = {
      image: new ort.Tensor('float32', chw, [1, 3, img.height, img.width]),
      point: new ort.Tensor('float32', Float32Array.from(point), [1, 2]),
    };
    const results = await session.run(feeds as never);
    const first = results[session.outputNames[0]];
    const logits = first.data as Float32Array;
    if (logits.length !== px) {
      throw new Error(`segment model produced ${logits.length} logits for ${px} pixels`);
    }
    const inside = new Uint8Array(px);
    for (let i = 0; i < px; i++) inside[i] = logits[i] > 0 ? 1 : 0;
    // guarantee a nonempty, prompt-containing mask per the wire contract
    inside[Math.round(point[1]) * img.width + Math.round(point[0])] = 1;
    return { width: img.width, height: img.height, inside };
  };
}

/** Epsilon predictor over an ONNX graph (latent, alpha_bar) -> noise. */
async function makeEpsilonModel(ort: OrtModule, path: string): Promise<EpsilonModel> {
  const session = await loadSession(ort, path);
  return {
    channels: 3,
    async epsilon(z: Tensor, alphaBar: number): Promise<Tensor> {
      const [h, w, c] = z.shape;
      const chw = new Float32Array(z.data.length);
      const px = h * w;
      for (let i = 0; i < px; i++) {
        for (let ch = 0; ch < c; ch++) chw[ch * px + i] = z.data[i * c + ch];
      }
      const feeds: Record<string, unknown> = {
        latent: new ort.Tensor('float32', chw, [1, c, h, w]),
        alpha_bar: new ort.Tensor('float32', Float32Array.from([alphaBar]), [1]),
      };
      const results = await session.run(feeds as never);
      const data = results[session.outputNames[0]].data as Float32Array;
      const out = zeros(z.shape);
      for (let i = 0; i < px; i++) {
        for (let ch = 0; ch < c; ch++) out.data[i * c + ch] = data[ch * px + i];
      }
      return out;
    },
  };
}

export function diffusionInpaint(
  model: EpsilonModel,
  img: RawImage,
  mask: RawMask,
  opts: DdimOptions,
): Promise<RawImage> {
  const known = pixelsToTensor(img.rgb, img.width, img.height);
  return Promise.resolve(ddimInpaintLatent(model, known, mask.inside, opts)).then((latent) => {
    const produced: RawImage = {
      width: img.width,
      height: img.height,
      rgb: tensorToPixels(latent),
    };
    return mergeUnmasked(img, produced, mask);
  });
}

export async function adapterBackend(cfg: AdapterConfig): Promise<BackendHandlers> {
  const handlers: BackendHandlers = { name: 'model-adapter', capabilities: [] };
  const ort = await loadOrt();
  if (ort && cfg.segmentModelPath && existsSync(cfg.segmentModelPath)) {
    const segment = await makeSegmenter(ort, cfg.segmentModelPath);
    handlers.segment = segment;
    handlers.capabilities.push('segment');
  }
  if (ort && cfg.inpaintModelPath && existsSync(cfg.inpaintModelPath)) {
    const model = await makeEpsilonModel(ort, cfg.inpaintModelPath);
    handlers.inpaint = (img, mask, steps) =>
      diffusionInpaint(model, img, mask, {
        steps: steps || cfg.steps,
        mcgWeight: cfg.mcgEnabled ? 1.0 : 0.0,
        seed: cfg.seed,
      });
    handlers.capabilities.push('inpaint');
  }
  return handlers;
}
