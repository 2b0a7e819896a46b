// Newline-delimited JSON server over stdio. One reply line per request
// line, in order; malformed requests get an {"error": ...} reply and the
// loop keeps running. A "shutdown" request ends the process.

import * as readline from 'node:readline';
import { RawImage, RawMask } from './png.js';

export interface BackendHandlers {
  name: string;
  capabilities: string[];
  segment?: (img: RawImage, point: [number, number]) => Promise<RawMask> | RawMask;
  inpaint?: (img: RawImage, mask: RawMask, steps: number) => Promise<RawImage> | RawImage;
}

type Reply = Record<string, unknown>;

function writeReply(reply: Reply): void {
  process.stdout.write(JSON.stringify(reply) + '\n');
}

export async function serve(handlers: BackendHandlers): Promise<void> {
  const { decodeImageB64, decodeMaskB64, encodeImageB64, encodeMaskB64 } = await import('./png.js');
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  for await (const line of rl) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    let req: Record<string, unknown>;
    try {
      req = JSON.parse(trimmed);
    } catch {
      writeReply({ error: 'malformed request: not valid JSON' });
      continue;
    }
    const op = req['op'];
    try {
      if (op === 'hello') {
        writeReply({ name: handlers.name, capabilities: handlers.capabilities });
      } else if (op === 'shutdown') {
        rl.close();
        return;
      } else if (op === 'segment') {
        if (!handlers.segment) throw new Error('segment not supported');
        const img = decodeImageB64(String(req['image_png_b64']));
        const point = req['point'] as [number, number];
        if (!Array.isArray(point) || point.length !== 2) {
          throw new Error('segment request needs point: [x, y]');
        }
        const mask = await handlers.segment(img, [Number(point[0]), Number(point[1])]);
        writeReply({ mask_png_b64: encodeMaskB64(mask) });
      } else if (op === 'inpaint') {
        if (!handlers.inpaint) throw new Error('inpaint not supported');
        const img = decodeImageB64(String(req['image_png_b64']));
        const mask = decodeMaskB64(String(req['mask_png_b64']));
        if (mask.width !== img.width || mask.height !== img.height) {
          throw new Error('mask dimensions do not match image');
        }
        const steps = req['steps'] === undefined ? 500 : Number(req['steps']);
        const out = await handlers.inpaint(img, mask, steps);
        writeReply({ image_png_b64: encodeImageB64(out) });
      } else {
        writeReply({ error: `unknown op: ${String(op)}` });
      }
    } catch (err) {
      writeReply({ error: err instanceof Error ? err.message : String(err) });
    }
  }
}

// Unmasked pixels must return unchanged regardless of what a model
// produced; every inpaint path merges through this.
export function mergeUnmasked(original: RawImage, produced: RawImage, mask: RawMask): RawImage {
  const out = new Uint8Array(produced.rgb);
  for (let i = 0; i < mask.inside.length; i++) {
    if (!mask.inside[i]) {
      out[i * 3] = original.rgb[i * 3];
      out[i * 3 + 1] = original.rgb[i * 3 + 1];
      out[i * 3 + 2] = original.rgb[i * 3 + 2];
    }
  }
  return { width: original.width, height: original.height, rgb: out };
}
