/**
 * Input container: a directory holding an index JSON plus per-trajectory
 * binary array files (little-endian), keeping the exporter framework-agnostic.
 *
 * index.json:
 * {
 *   "d": 16, "A": 5, "dtype": "f32" | "f64",          // dtype default f32
 *   "trajectories": [
 *     {"z": "t0.z.bin", "actions": "t0.actions.bin",
 *      "mu": "t0.mu.bin", "sigma": "t0.sigma.bin"}, ...
 *   ]
 * }
 *
 * z/mu/sigma are (T+1, d) row-major float arrays; actions is (T,) uint32.
 */

import { readFileSync } from "node:fs";
import { dirname, resolve } from "node:path";

export class ExporterError extends Error {}

export interface ArrayBundle {
  /** (T+1) x d latent samples, row-major */
  z: Float64Array;
  /** T action ids */
  actions: Uint32Array;
  /** (T+1) x d encoder means */
  mu: Float64Array;
  /** (T+1) x d encoder standard deviations, strictly positive */
  sigma: Float64Array;
  /** number of states (T+1) */
  states: number;
}

export interface BundleSet {
  d: number;
  A: number;
  bundles: ArrayBundle[];
}

function readFloats(path: string, dtype: "f32" | "f64"): Float64Array {
  const buf = readFileSync(path);
  const itemSize = dtype === "f32" ? 4 : 8;
  if (buf.length % itemSize !== 0) {
    throw new ExporterError(
      `${path}: payload of ${buf.length} bytes is not a whole number of ${dtype} values`,
    );
  }
  const n = buf.length / itemSize;
  const view = new DataView(buf.buffer, buf.byteOffset, buf.length);
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    out[i] =
      dtype === "f32" ? view.getFloat32(i * 4, true) : view.getFloat64(i * 8, true);
  }
  return out;
}

function readActions(path: string): Uint32Array {
  const buf = readFileSync(path);
  if (buf.length % 4 !== 0) {
    throw new ExporterError(`${path}: payload is not a whole number of u32 values`);
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.length);
  const out = new Uint32Array(buf.length / 4);
  for (let i = 0; i < out.length; i++) {
    out[i] = view.getUint32(i * 4, true);
  }
  return out;
}

export function validateBundle(
  bundle: ArrayBundle,
  d: number,
  A: number,
  index: number,
): void {
  const where = `trajectory ${index}`;
  const { z, mu, sigma, actions, states } = bundle;
  if (states < 2) {
    throw new ExporterError(`${where}: empty (need at least 2 states, one transition)`);
  }
  const expect = states * d;
  if (z.length !== expect || mu.length !== expect || sigma.length !== expect) {
    throw new ExporterError(
      `${where}: shape mismatch (z ${z.length}, mu ${mu.length}, sigma ${sigma.length}, expected ${expect} values for ${states} states x d=${d})`,
    );
  }
  if (actions.length !== states - 1) {
    throw new ExporterError(
      `${where}: ${actions.length} actions for ${states} states (expected ${states - 1})`,
    );
  }
  for (let i = 0; i < sigma.length; i++) {
    if (!(sigma[i] > 0) || !Number.isFinite(sigma[i])) {
      throw new ExporterError(
        `${where}: non-positive sigma component at flat index ${i}`,
      );
    }
  }
  for (let i = 0; i < z.length; i++) {
    if (!Number.isFinite(z[i]) || !Number.isFinite(mu[i])) {
      throw new ExporterError(`${where}: non-finite latent component at flat index ${i}`);
    }
  }
  for (let i = 0; i < actions.length; i++) {
    if (actions[i] >= A) {
      throw new ExporterError(
        `${where}: action ${actions[i]} at step ${i} out of range (A=${A})`,
      );
    }
  }
}

export function loadBundleSet(indexPath: string): BundleSet {
  let parsed: any;
  try {
    parsed = JSON.parse(readFileSync(indexPath, "utf-8"));
  } catch (e) {
    throw new ExporterError(`cannot read index ${indexPath}: ${e}`);
  }
  const d = Number(parsed.d);
  const A = Number(parsed.A);
  const dtype: "f32" | "f64" = parsed.dtype === "f64" ? "f64" : "f32";
  if (!Number.isInteger(d) || d < 1) {
    throw new ExporterError(`index: latent dimension d=${parsed.d} is invalid`);
  }
  if (!Number.isInteger(A) || A < 1) {
    throw new ExporterError(`index: action count A=${parsed.A} is invalid`);
  }
  if (!Array.isArray(parsed.trajectories) || parsed.trajectories.length === 0) {
    throw new ExporterError("index: no trajectories listed");
  }
  const base = dirname(resolve(indexPath));
  const bundles: ArrayBundle[] = [];
  parsed.trajectories.forEach((entry: any, k: number) => {
    for (const key of ["z", "actions", "mu", "sigma"]) {
      if (typeof entry[key] !== "string") {
        throw new ExporterError(`trajectory ${k}: index entry missing "${key}"`);
      }
    }
    const z = readFloats(resolve(base, entry.z), dtype);
    const mu = readFloats(resolve(base, entry.mu), dtype);
    const sigma = readFloats(resolve(base, entry.sigma), dtype);
    const actions = readActions(resolve(base, entry.actions));
    if (z.length % d !== 0) {
      throw new ExporterError(
        `trajectory ${k}: z holds ${z.length} values, not a multiple of d=${d}`,
      );
    }
    const bundle: ArrayBundle = { z, mu, sigma, actions, states: z.length / d };
    validateBundle(bundle, d, A, k);
    bundles.push(bundle);
  });
  return { d, A, bundles };
}
