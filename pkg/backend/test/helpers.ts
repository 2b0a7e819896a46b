import { ChildProcessByStdio, spawn } from 'node:child_process';
import * as path from 'node:path';
import * as readline from 'node:readline';
import type { Readable, Writable } from 'node:stream';
import { fileURLToPath } from 'node:url';

const here = path.dirname(fileURLToPath(import.meta.url));
export const MAIN = path.resolve(here, '..', 'src', 'main.js');

export class Client {
  private proc: ChildProcessByStdio<Writable, Readable, null>;
  private lines: AsyncIterator<string>;

  constructor(mode: string, extra: string[] = []) {
    this.proc = spawn(process.execPath, [MAIN, mode, ...extra], {
      stdio: ['pipe', 'pipe', 'inherit'],
    });
    const rl = readline.createInterface({ input: this.proc.stdout, terminal: false });
    this.lines = rl[Symbol.asyncIterator]();
  }

  async request(message: Record<string, unknown>): Promise<Record<string, unknown>> {
    this.proc.stdin.write(JSON.stringify(message) + '\n');
    return this.readReply();
  }

  async requestRaw(line: string): Promise<Record<string, unknown>> {
    this.proc.stdin.write(line + '\n');
    return this.readReply();
  }

  private async readReply(): Promise<Record<string, unknown>> {
    const next = await this.lines.next();
    if (next.done) throw new Error('backend closed stdout');
    return JSON.parse(next.value);
  }

  async shutdown(): Promise<number | null> {
    this.proc.stdin.write(JSON.stringify({ op: 'shutdown' }) + '\n');
    return new Promise((resolve) => this.proc.once('exit', (code) => resolve(code)));
  }

  kill(): void {
    this.proc.kill();
  }

  get alive(): boolean {
    return this.proc.exitCode === null;
  }
}

export function solidImage(width: number, height: number, color: [number, number, number]) {
  const rgb = new Uint8Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    rgb[i * 3] = color[0];
    rgb[i * 3 + 1] = color[1];
    rgb[i * 3 + 2] = color[2];
  }
  return { width, height, rgb };
}

export function boxMask(width: number, height: number, x0: number, y0: number, x1: number, y1: number) {
  const inside = new Uint8Array(width * height);
  for (let y = y0; y < y1; y++) {
    for (let x = x0; x < x1; x++) inside[y * width + x] = 1;
  }
  return { width, height, inside };
}
