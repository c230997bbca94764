/** Reader for the solver's binary field dumps.
 *
 * Layout: 8-byte magic "SPFLD01\0", u32 LE grid size n, f64 LE box
 * half-width L, f64 reserved, then n^3 little-endian f64 values in
 * row-major (i, j, k) order over the interior nodes.
 */

import { readFileSync } from "node:fs";

export const MAGIC = "SPFLD01\0";
export const HEADER_BYTES = 28;

export interface FieldDump {
    n: number;
    L: number;
    /** spacing 2L/(n+1) */
    h: number;
    values: Float64Array;
}

export function parseFieldDump(buf: Buffer): FieldDump {
    if (buf.length < HEADER_BYTES) {
        throw new Error(`truncated header: ${buf.length} bytes < ${HEADER_BYTES}`);
    }
    const magic = buf.toString("latin1", 0, 8);
    if (magic !== MAGIC) {
        throw new Error(`bad magic ${JSON.stringify(magic)} at byte 0`);
    }
    const n = buf.readUInt32LE(8);
    const L = buf.readDoubleLE(12);
    const expected = HEADER_BYTES + 8 * n * n * n;
    if (buf.length !== expected) {
        throw new Error(`payload size mismatch at byte ${buf.length}: expected ${expected}`);
    }
    const values = new Float64Array(n * n * n);
    for (let i = 0; i < values.length; i++) {
        values[i] = buf.readDoubleLE(HEADER_BYTES + 8 * i);
    }
    return { n, L, h: (2 * L) / (n + 1), values };
}

export function readFieldDump(path: string): FieldDump {
    return parseFieldDump(readFileSync(path));
}

export function at(f: FieldDump, i: number, j: number, k: number): number {
    return f.values[(i * f.n + j) * f.n + k];
}

/** Values on the z-slice at index k, as rows over i with columns over j. */
export function zSlice(f: FieldDump, k: number): Float64Array {
    const out = new Float64Array(f.n * f.n);
    for (let i = 0; i < f.n; i++) {
        for (let j = 0; j < f.n; j++) {
            out[i * f.n + j] = at(f, i, j, k);
        }
    }
    return out;
}

export function maxAbs(f: FieldDump): number {
    let m = 0;
    for (const v of f.values) {
        const a = Math.abs(v);
        if (a > m) m = a;
    }
    return m;
}
