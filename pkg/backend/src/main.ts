#!/usr/bin/env node
// Entry point. Serve one backend flavor over stdio:
//
//   main.js echo
//   main.js meanfill
//   main.js adapter [--segment-model p.onnx] [--inpaint-model p.onnx]
//                   [--steps 500] [--no-mcg] [--seed 0]

import { serve } from './protocol.js';
import { echoBackend, meanFillBackend } from './fixtures.js';
import { AdapterConfig, adapterBackend } from './adapters.js';

function parseAdapterArgs(argv: string[]): AdapterConfig {
  const cfg: AdapterConfig = {
    steps: 500,
    mcgEnabled: true,
    device: 'cpu',
    seed: 0,
  };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === '--segment-model') cfg.segmentModelPath = argv[++i];
    else if (a === '--inpaint-model') cfg.inpaintModelPath = argv[++i];
    else if (a === '--steps') cfg.steps = Number(argv[++i]);
    else if (a === '--no-mcg') cfg.mcgEnabled = false;
    else if (a === '--seed') cfg.seed = Number(argv[++i]);
    else if (a === '--device') cfg.device = argv[++i];
    else throw new Error(`unknown flag: ${a}`);
  }
  if (cfg.steps < 1) throw new Error('--steps must be >= 1');
  return cfg;
}

async function main(): Promise<void> {
  const [mode, ...rest] = process.argv.slice(2);
  if (mode === 'echo') {
    await serve(echoBackend());
  } else if (mode === 'meanfill') {
    await serve(meanFillBackend());
  } else if (mode === 'adapter') {
    await serve(await adapterBackend(parseAdapterArgs(rest)));
  } else {
    process.stderr.write('usage: main.js echo|meanfill|adapter [flags]\n');
    process.exit(2);
  }
}

main().catch((err) => {
  process.stderr.write(String(err) + '\n');
  process.exit(1);
});
