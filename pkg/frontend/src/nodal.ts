/** Nodal-domain structure of a dumped field: thresholded sign masks and
 * 6-connected component labeling, matching the solver's conventions
 * (threshold defaults to 1e-8 of the max amplitude). */

import { FieldDump, maxAbs } from "./fielddump";

export interface NodalStructure {
    threshold: number;
    /** component id per node: 0 none, >0 positive regions, <0 negative regions */
    labels: Int32Array;
    positiveRegions: number;
    negativeRegions: number;
}

function labelComponents(
    mask: Uint8Array,
    n: number,
    labels: Int32Array,
    sign: number,
): number {
    let count = 0;
    const stack: number[] = [];
    for (let start = 0; start < mask.length; start++) {
        if (!mask[start] || labels[start] !== 0) continue;
        count += 1;
        const id = sign * count;
        stack.push(start);
        labels[start] = id;
        while (stack.length > 0) {
            const idx = stack.pop()!;
            const k = idx % n;
            const j = ((idx - k) / n) % n;
            const i = (idx - k - j * n) / (n * n);
            const neighbors = [
                i > 0 ? idx - n * n : -1,
                i < n - 1 ? idx + n * n : -1,
                j > 0 ? idx - n : -1,
                j < n - 1 ? idx + n : -1,
                k > 0 ? idx - 1 : -1,
                k < n - 1 ? idx + 1 : -1,
            ];
            for (const nb of neighbors) {
                if (nb >= 0 && mask[nb] && labels[nb] === 0) {
                    labels[nb] = id;
                    stack.push(nb);
                }
            }
        }
    }
    return count;
}

export function nodalStructure(f: FieldDump, threshold?: number): NodalStructure {
    const thr = threshold ?? 1e-8 * maxAbs(f);
    const size = f.values.length;
    const pos = new Uint8Array(size);
    const neg = new Uint8Array(size);
    for (let i = 0; i < size; i++) {
        if (f.values[i] > thr) pos[i] = 1;
        else if (f.values[i] < -thr) neg[i] = 1;
    }
    const labels = new Int32Array(size);
    const positiveRegions = labelComponents(pos, f.n, labels, +1);
    const negativeRegions = labelComponents(neg, f.n, labels, -1);
    return { threshold: thr, labels, positiveRegions, negativeRegions };
}
