// PNG <-> raw buffer helpers over pngjs. Images travel on the wire as
// base64 PNG; in memory we keep packed RGB (3 bytes/px) and boolean masks.

import { PNG } from 'pngjs';

export interface RawImage {
  width: number;
  height: number;
  rgb: Uint8Array; // row-major, 3 bytes per pixel
}

export interface RawMask {
  width: number;
  height: number;
  inside: Uint8Array; // row-major, 1 = inside
}

export function decodeImageB64(b64: string): RawImage {
  const png = PNG.sync.read(Buffer.from(b64, 'base64'));
  const rgb = new Uint8Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    rgb[i * 3] = png.data[i * 4];
    rgb[i * 3 + 1] = png.data[i * 4 + 1];
    rgb[i * 3 + 2] = png.data[i * 4 + 2];
  }
  return { width: png.width, height: png.height, rgb };
}

export function decodeMaskB64(b64: string): RawMask {
  const png = PNG.sync.read(Buffer.from(b64, 'base64'));
  const inside = new Uint8Array(png.width * png.height);
  for (let i = 0; i < png.width * png.height; i++) {
    inside[i] = png.data[i * 4] >= 128 ? 1 : 0;
  }
  return { width: png.width, height: png.height, inside };
}

export function encodeImageB64(img: RawImage): string {
  const png = new PNG({ width: img.width, height: img.height });
  for (let i = 0; i < img.width * img.height; i++) {
    png.data[i * 4] = img.rgb[i * 3];
    png.data[i * 4 + 1] = img.rgb[i * 3 + 1];
    png.data[i * 4 + 2] = img.rgb[i * 3 + 2];
    png.data[i * 4 + 3] = 255;
  }
  return PNG.sync.write(png).toString('base64');
}

export function encodeMaskB64(mask: RawMask): string {
  const png = new PNG({ width: mask.width, height: mask.height });
  for (let i = 0; i < mask.width * mask.height; i++) {
    const v = mask.inside[i] ? 255 : 0;
    png.data[i * 4] = v;
    png.data[i * 4 + 1] = v;
    png.data[i * 4 + 2] = v;
    png.data[i * 4 + 3] = 255;
  }
  return PNG.sync.write(png).toString('base64');
}

export function fullMask(width: number, height: number): RawMask {
  return { width, height, inside: new Uint8Array(width * height).fill(1) };
}
