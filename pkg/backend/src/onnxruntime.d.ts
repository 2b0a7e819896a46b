// Minimal ambient typing for the optional ONNX runtime. The package is a
// heavyweight native dependency that hosts install only when they have
// model weights to serve; the adapters import it dynamically and degrade
// gracefully when it is absent.
declare module 'onnxruntime-node' {
  export class Tensor {
    constructor(type: string, data: Float32Array, dims: number[]);
    data: unknown;
  }
  export namespace InferenceSession {
    interface SessionOptions {
      executionProviders?: string[];
    }
  }
  export class InferenceSession {
    static create(
      path: string,
      options?: InferenceSession.SessionOptions,
    ): Promise<InferenceSession>;
    run(feeds: Record<string, Tensor>): Promise<Record<string, Tensor>>;
    outputNames: string[];
  }
}
