/** Shared fixture helpers for the reporter tests. */

import { HEADER_BYTES } from "../src/fielddump";

export function makeDump(n: number, L: number, values: number[]): Buffer {
    const buf = Buffer.alloc(HEADER_BYTES + 8 * n * n * n);
    buf.write("SPFLD01\0", 0, "latin1");
    buf.writeUInt32LE(n, 8);
    buf.writeDoubleLE(L, 12);
    buf.writeDoubleLE(0, 20);
    values.forEach((v, i) => buf.writeDoubleLE(v, HEADER_BYTES + 8 * i));
    return buf;
}
