import assert from "node:assert/strict";
import { test } from "node:test";

import { at, maxAbs, parseFieldDump, zSlice } from "../src/fielddump";
import { makeDump } from "./util";

test("roundtrip of a synthetic dump", () => {
    const n = 4;
    const values = Array.from({ length: n * n * n }, (_, i) => Math.sin(i));
    const dump = parseFieldDump(makeDump(n, 2.0, values));
    assert.equal(dump.n, 4);
    assert.equal(dump.L, 2.0);
    assert.ok(Math.abs(dump.h - 0.8) < 1e-15);
    assert.equal(dump.values.length, 64);
    assert.equal(at(dump, 1, 2, 3), values[(1 * 4 + 2) * 4 + 3]);
});

test("bad magic rejected", () => {
    const buf = makeDump(4, 1.0, new Array(64).fill(0));
    buf.write("XPFLD01\0", 0, "latin1");
    assert.throws(() => parseFieldDump(buf), /bad magic/);
});

test("truncated payload rejected with byte offset", () => {
    const buf = makeDump(4, 1.0, new Array(64).fill(0));
    assert.throws(() => parseFieldDump(buf.subarray(0, buf.length - 9)), /byte 531/);
});

test("z-slice extraction is row-major over (i, j)", () => {
    const n = 3;
    const values = Array.from({ length: 27 }, (_, i) => i);
    const dump = parseFieldDump(makeDump(n, 1.0, values));
    const slice = zSlice(dump, 2);
    assert.equal(slice[0 * n + 0], at(dump, 0, 0, 2));
    assert.equal(slice[2 * n + 1], at(dump, 2, 1, 2));
});

test("max amplitude", () => {
    const dump = parseFieldDump(makeDump(4, 1.0, [...new Array(63).fill(0.5), -3]));
    assert.equal(maxAbs(dump), 3);
});
