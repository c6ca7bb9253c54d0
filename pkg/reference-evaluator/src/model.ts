/**
 * Toy layered model with simulated weight quantization and trainable
 * low-rank corrections.
 *
 * Each layer is a dense dim x dim map. Quantization rounds weights to
 * 2^bit levels over the fixed range [-1, 1]. A rank-r correction A·B,
 * scaled by gamma / r, is trained with plain gradient descent to pull the
 * quantized network back toward its full-precision teacher on a fixed
 * calibration set; performance is the negated validation loss.
 */

export const GAMMA = 16;
const WEIGHT_SCALE = 0.6;
const LEARNING_RATE = 0.002;

export interface Config {
  bits: number[];
  ranks: number[];
}

export interface Geometry {
  frozen_params: number;
  adapter_in_dims: number[];
  adapter_out_dims: number[];
}

/** Deterministic 32-bit PRNG (mulberry32). */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function quantize(value: number, bit: number): number {
  const levels = Math.pow(2, bit);
  const step = 2 / (levels - 1);
  const clamped = Math.max(-1, Math.min(1, value));
  return Math.round((clamped + 1) / step) * step - 1;
}

type Matrix = number[][]; // row-major [out][in]

function randomMatrix(rows: number, cols: number, rand: () => number, scale: number): Matrix {
  const m: Matrix = [];
  for (let r = 0; r < rows; r++) {
    const row: number[] = [];
    for (let c = 0; c < cols; c++) row.push((rand() * 2 - 1) * scale);
    m.push(row);
  }
  return m;
}

function zeros(rows: number, cols: number): Matrix {
  return Array.from({ length: rows }, () => new Array<number>(cols).fill(0));
}

function matVec(m: Matrix, v: number[]): number[] {
  const out = new Array<number>(m.length).fill(0);
  for (let r = 0; r < m.length; r++) {
    const row = m[r];
    let acc = 0;
    for (let c = 0; c < row.length; c++) acc += row[c] * v[c];
    out[r] = acc;
  }
  return out;
}

function matTVec(m: Matrix, v: number[]): number[] {
  const cols = m[0].length;
  const out = new Array<number>(cols).fill(0);
  for (let r = 0; r < m.length; r++) {
    const row = m[r];
    for (let c = 0; c < cols; c++) out[c] += row[c] * v[r];
  }
  return out;
}

function softmax(v: number[]): number[] {
  const max = Math.max(...v);
  const exps = v.map((x) => Math.exp(x - max));
  const total = exps.reduce((a, b) => a + b, 0);
  return exps.map((x) => x / total);
}

interface Adapters {
  a: Matrix[]; // dim x rank
  b: Matrix[]; // rank x dim
}

export class ToyModel {
  readonly layers: number;
  readonly dim: number;
  readonly seed: number;
  readonly calibSize: number;
  readonly valSize: number;
  private weights: Matrix[];
  private quantCache = new Map<string, Matrix>();
  private calibInputs: number[][];
  private valInputs: number[][];
  private calibTargets: number[][];
  private valTargets: number[][];

  constructor(layers = 3, dim = 8, seed = 0, calibSize = 8, valSize = 8) {
    if (layers < 1 || dim < 1) throw new Error("layers and dim must be positive");
    this.layers = layers;
    this.dim = dim;
    this.seed = seed;
    this.calibSize = calibSize;
    this.valSize = valSize;
    const rand = mulberry32(seed * 2654435761 + 1);
    this.weights = [];
    for (let l = 0; l < layers; l++) {
      this.weights.push(randomMatrix(dim, dim, rand, WEIGHT_SCALE / Math.sqrt(dim)));
    }
    const sample = () => Array.from({ length: dim }, () => rand() * 2 - 1);
    this.calibInputs = Array.from({ length: calibSize }, sample);
    this.valInputs = Array.from({ length: valSize }, sample);
    this.calibTargets = this.calibInputs.map((x) => this.teacherForward(x));
    this.valTargets = this.valInputs.map((x) => this.teacherForward(x));
  }

  geometry(): Geometry[] {
    return Array.from({ length: this.layers }, () => ({
      frozen_params: this.dim * this.dim,
      adapter_in_dims: [this.dim],
      adapter_out_dims: [this.dim],
    }));
  }

  private quantized(layer: number, bit: number): Matrix {
    const key = `${layer}:${bit}`;
    let cached = this.quantCache.get(key);
    if (!cached) {
      cached = this.weights[layer].map((row) => row.map((w) => quantize(w, bit)));
      this.quantCache.set(key, cached);
    }
    return cached;
  }

  private teacherForward(x: number[]): number[] {
    let h = x;
    for (let l = 0; l < this.layers; l++) {
      const z = matVec(this.weights[l], h);
      h = l < this.layers - 1 ? z.map(Math.tanh) : z;
    }
    return h;
  }

  validateConfig(config: Config): void {
    if (config.bits.length !== this.layers || config.ranks.length !== this.layers) {
      throw new Error(
        `config must describe ${this.layers} layers, got bits=${config.bits.length} ranks=${config.ranks.length}`,
      );
    }
    for (const b of config.bits) {
      if (!Number.isInteger(b) || b < 1) throw new Error(`invalid bit-width ${b}`);
    }
    for (const r of config.ranks) {
      if (!Number.isInteger(r) || r < 1) throw new Error(`invalid rank ${r}`);
    }
  }

  private freshAdapters(config: Config): Adapters {
    const rand = mulberry32(this.seed * 69069 + 7);
    const a: Matrix[] = [];
    const b: Matrix[] = [];
    for (let l = 0; l < this.layers; l++) {
      const rank = config.ranks[l];
      a.push(randomMatrix(this.dim, rank, rand, 1 / Math.sqrt(rank)));
      b.push(zeros(rank, this.dim)); // zero init: corrections start inactive
    }
    return { a, b };
  }

  /**
   * Forward pass with per-layer quantized weights plus scaled corrections.
   * Returns activations needed for backprop.
   */
  private adaptedForward(
    x: number[],
    config: Config,
    adapters: Adapters,
  ): { output: number[]; inputs: number[][]; pre: number[][]; low: number[][] } {
    const inputs: number[][] = [];
    const pre: number[][] = [];
    const low: number[][] = [];
    let h = x;
    for (let l = 0; l < this.layers; l++) {
      inputs.push(h);
      const scale = GAMMA / config.ranks[l];
      const bh = matVec(adapters.b[l], h);
      low.push(bh);
      const z = matVec(this.quantized(l, config.bits[l]), h);
      const corr = matVec(adapters.a[l], bh);
      for (let i = 0; i < this.dim; i++) z[i] += scale * corr[i];
      pre.push(z);
      h = l < this.layers - 1 ? z.map(Math.tanh) : z;
    }
    return { output: h, inputs, pre, low };
  }

  private loss(config: Config, adapters: Adapters, inputs: number[][], targets: number[][]): number {
    let total = 0;
    for (let n = 0; n < inputs.length; n++) {
      const out = this.adaptedForward(inputs[n], config, adapters).output;
      for (let i = 0; i < this.dim; i++) {
        const d = out[i] - targets[n][i];
        total += d * d;
      }
    }
    return total / (inputs.length * this.dim);
  }

  /** One full-batch gradient step on the calibration loss. */
  private trainStep(config: Config, adapters: Adapters): void {
    const gradA = adapters.a.map((m) => zeros(m.length, m[0].length));
    const gradB = adapters.b.map((m) => zeros(m.length, m[0].length));
    const n = this.calibInputs.length;
    for (let s = 0; s < n; s++) {
      const { output, inputs, pre, low } = this.adaptedForward(
        this.calibInputs[s],
        config,
        adapters,
      );
      let dh = output.map(
        (o, i) => (2 * (o - this.calibTargets[s][i])) / (n * this.dim),
      );
      for (let l = this.layers - 1; l >= 0; l--) {
        const scale = GAMMA / config.ranks[l];
        const dz =
          l < this.layers - 1
            ? dh.map((g, i) => g * (1 - Math.tanh(pre[l][i]) ** 2))
            : dh;
        const atDz = matTVec(adapters.a[l], dz); // rank
        for (let i = 0; i < this.dim; i++) {
          for (let r = 0; r < low[l].length; r++) {
            gradA[l][i][r] += scale * dz[i] * low[l][r];
          }
        }
        for (let r = 0; r < low[l].length; r++) {
          for (let c = 0; c < this.dim; c++) {
            gradB[l][r][c] += scale * atDz[r] * inputs[l][c];
          }
        }
        if (l > 0) {
          const viaW = matTVec(this.quantized(l, config.bits[l]), dz);
          const viaAdapter = matTVec(adapters.b[l], atDz);
          dh = viaW.map((g, i) => g + scale * viaAdapter[i]);
        }
      }
    }
    for (let l = 0; l < this.layers; l++) {
      for (let i = 0; i < gradA[l].length; i++)
        for (let r = 0; r < gradA[l][i].length; r++)
          adapters.a[l][i][r] -= LEARNING_RATE * gradA[l][i][r];
      for (let r = 0; r < gradB[l].length; r++)
        for (let c = 0; c < gradB[l][r].length; c++)
          adapters.b[l][r][c] -= LEARNING_RATE * gradB[l][r][c];
    }
  }

  /** Train corrections for proxySteps steps, return negated validation loss. */
  evaluate(config: Config, proxySteps: number): number {
    this.validateConfig(config);
    const adapters = this.freshAdapters(config);
    for (let step = 0; step < proxySteps; step++) {
      this.trainStep(config, adapters);
    }
    return -this.loss(config, adapters, this.valInputs, this.valTargets);
  }

  /**
   * Softmax output distribution for one calibration input, optionally with a
   * single layer quantized (no adapters anywhere).
   */
  distribution(calibIndex: number, layer?: number, bit?: number): number[] {
    if (!Number.isInteger(calibIndex) || calibIndex < 0 || calibIndex >= this.calibSize) {
      throw new Error(`calib_index ${calibIndex} out of range [0, ${this.calibSize})`);
    }
    if (layer !== undefined && (layer < 0 || layer >= this.layers)) {
      throw new Error(`layer ${layer} out of range [0, ${this.layers})`);
    }
    let h = this.calibInputs[calibIndex];
    for (let l = 0; l < this.layers; l++) {
      const useQuant = layer !== undefined && l === layer;
      const w = useQuant ? this.quantized(l, bit ?? 2) : this.weights[l];
      const z = matVec(w, h);
      h = l < this.layers - 1 ? z.map(Math.tanh) : z;
    }
    return softmax(h);
  }
}
