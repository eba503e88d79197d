/**
 * LTD binary writer (little-endian):
 *   magic "LTD1" | u32 version (=1) | u32 d | u32 A | u32 num_trajectories
 *   per trajectory: u32 length L, then L records of
 *     [z d*f32][action u32][z_next d*f32][mu d*f32][sigma d*f32]
 *     [mu_next d*f32][sigma_next d*f32]
 *
 * Transition i of a trajectory is built from states i and i+1 of the input
 * arrays; values are truncated to f32 on write. A JSON manifest sidecar
 * carries {d, A, num_trajectories, total_transitions, source}.
 */

import { writeFileSync } from "node:fs";

import { ArrayBundle, BundleSet, ExporterError, validateBundle } from "./bundle.js";

export const MAGIC = "LTD1";
export const VERSION = 1;

const HEADER_BYTES = 20;

function recordBytes(d: number): number {
  return 4 * (6 * d + 1);
}

function writeVector(
  view: DataView,
  offset: number,
  source: Float64Array,
  start: number,
  d: number,
): number {
  for (let j = 0; j < d; j++) {
    view.setFloat32(offset + 4 * j, Math.fround(source[start + j]), true);
  }
  return offset + 4 * d;
}

function encodeTrajectory(bundle: ArrayBundle, d: number): Uint8Array {
  const T = bundle.states - 1;
  const bytes = new Uint8Array(4 + T * recordBytes(d));
  const view = new DataView(bytes.buffer);
  view.setUint32(0, T, true);
  let offset = 4;
  for (let i = 0; i < T; i++) {
    offset = writeVector(view, offset, bundle.z, i * d, d);
    view.setUint32(offset, bundle.actions[i], true);
    offset += 4;
    offset = writeVector(view, offset, bundle.z, (i + 1) * d, d);
    offset = writeVector(view, offset, bundle.mu, i * d, d);
    offset = writeVector(view, offset, bundle.sigma, i * d, d);
    offset = writeVector(view, offset, bundle.mu, (i + 1) * d, d);
    offset = writeVector(view, offset, bundle.sigma, (i + 1) * d, d);
  }
  return bytes;
}

export function encodeLtd(set: BundleSet): Uint8Array {
  const { d, A, bundles } = set;
  if (bundles.length === 0) {
    throw new ExporterError("nothing to export: no trajectories");
  }
  bundles.forEach((b, k) => validateBundle(b, d, A, k));
  const chunks: Uint8Array[] = [];
  const header = new Uint8Array(HEADER_BYTES);
  const hview = new DataView(header.buffer);
  for (let i = 0; i < 4; i++) {
    header[i] = MAGIC.charCodeAt(i);
  }
  hview.setUint32(4, VERSION, true);
  hview.setUint32(8, d, true);
  hview.setUint32(12, A, true);
  hview.setUint32(16, bundles.length, true);
  chunks.push(header);
  for (const bundle of bundles) {
    chunks.push(encodeTrajectory(bundle, d));
  }
  const total = chunks.reduce((acc, c) => acc + c.length, 0);
  const out = new Uint8Array(total);
  let at = 0;
  for (const chunk of chunks) {
    out.set(chunk, at);
    at += chunk.length;
  }
  return out;
}

export function manifestPath(ltdPath: string): string {
  const base = ltdPath.endsWith(".ltd")
    ? ltdPath.slice(0, -".ltd".length)
    : ltdPath;
  return `${base}.manifest.json`;
}

export function exportLtd(
  set: BundleSet,
  outPath: string,
  source = "exporter",
): { transitions: number; trajectories: number } {
  const payload = encodeLtd(set);
  writeFileSync(outPath, payload);
  const total = set.bundles.reduce((acc, b) => acc + b.states - 1, 0);
  const manifest = {
    A: set.A,
    d: set.d,
    num_trajectories: set.bundles.length,
    source,
    total_transitions: total,
  };
  writeFileSync(manifestPath(outPath), JSON.stringify(manifest, null, 2) + "\n");
  return { transitions: total, trajectories: set.bundles.length };
}

/** Minimal reader used for self-verification in tests. */
export function decodeLtd(bytes: Uint8Array): {
  d: number;
  A: number;
  trajectories: {
    z: Float32Array;
    actions: Uint32Array;
    zNext: Float32Array;
    mu: Float32Array;
    sigma: Float32Array;
    muNext: Float32Array;
    sigmaNext: Float32Array;
    length: number;
  }[];
} {
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.length);
  const magic = String.fromCharCode(...bytes.slice(0, 4));
  if (magic !== MAGIC) {
    throw new ExporterError(`bad magic ${magic}`);
  }
  if (view.getUint32(4, true) !== VERSION) {
    throw new ExporterError("unsupported version");
  }
  const d = view.getUint32(8, true);
  const A = view.getUint32(12, true);
  const nTraj = view.getUint32(16, true);
  let offset = HEADER_BYTES;
  const trajectories = [];
  for (let t = 0; t < nTraj; t++) {
    const L = view.getUint32(offset, true);
    offset += 4;
    const fields = {
      z: new Float32Array(L * d),
      actions: new Uint32Array(L),
      zNext: new Float32Array(L * d),
      mu: new Float32Array(L * d),
      sigma: new Float32Array(L * d),
      muNext: new Float32Array(L * d),
      sigmaNext: new Float32Array(L * d),
      length: L,
    };
    for (let i = 0; i < L; i++) {
      const vec = (target: Float32Array) => {
        for (let j = 0; j < d; j++) {
          target[i * d + j] = view.getFloat32(offset, true);
          offset += 4;
        }
      };
      vec(fields.z);
      fields.actions[i] = view.getUint32(offset, true);
      offset += 4;
      vec(fields.zNext);
      vec(fields.mu);
      vec(fields.sigma);
      vec(fields.muNext);
      vec(fields.sigmaNext);
    }
    trajectories.push(fields);
  }
  if (offset !== bytes.length) {
    throw new ExporterError("trailing bytes after last trajectory");
  }
  return { d, A, trajectories };
}
