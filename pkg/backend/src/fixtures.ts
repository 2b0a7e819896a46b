// Fixture backends: protocol-complete implementations with trivial models.

import { BackendHandlers, mergeUnmasked } from './protocol.js';
import { RawImage, RawMask, fullMask } from './png.js';

export function echoBackend(): BackendHandlers {
  return {
    name: 'echo',
    capabilities: ['segment', 'inpaint'],
    segment: (img: RawImage) => fullMask(img.width, img.height),
    inpaint: (img: RawImage) => img,
  };
}

export function meanFillBackend(): BackendHandlers {
  return {
    name: 'meanfill',
    capabilities: ['segment', 'inpaint'],
    segment: (img: RawImage) => fullMask(img.width, img.height),
    inpaint: (img: RawImage, mask: RawMask) => {
      const sums = [0, 0, 0];
      let count = 0;
      for (let i = 0; i < mask.inside.length; i++) {
        if (!mask.inside[i]) {
          sums[0] += img.rgb[i * 3];
          sums[1] += img.rgb[i * 3 + 1];
          sums[2] += img.rgb[i * 3 + 2];
          count++;
        }
      }
      const mean = count
        ? ([0, 1, 2].map((ch) => Math.round(sums[ch] / count)) as [number, number, number])
        : ([0, 0, 0] as [number, number, number]);
      const rgb = new Uint8Array(img.rgb);
      for (let i = 0; i < mask.inside.length; i++) {
        if (mask.inside[i]) {
          rgb[i * 3] = mean[0];
          rgb[i * 3 + 1] = mean[1];
          rgb[i * 3 + 2] = mean[2];
        }
      }
      return mergeUnmasked(img, { width: img.width, height: img.height, rgb }, mask);
    },
  };
}
