/** Static post-processor: turns a solver run's manifest plus its CSV and
 * binary artifacts into SVG figures and an index page. Every number shown
 * is read from an artifact file; nothing is recomputed from physics. */

import { existsSync, mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { basename, dirname, join, resolve } from "node:path";

import { CsvTable, numericColumn, parseCsv } from "./csv";
import { readFieldDump } from "./fielddump";
import { nodalStructure } from "./nodal";
import { heatmapSvg, lineChartSvg, nodalMapSvg } from "./svg";
import { zSlice } from "./fielddump";

export interface Manifest {
    run_id: string;
    outputs: string[];
    config?: unknown;
    rng_seed?: number;
}

export interface ReportSpec {
    manifestPath: string;
    outDir: string;
    sliceK?: number;
}

export interface RenderedReport {
    figures: string[];
    warnings: string[];
    nodalCounts?: { pos: number; neg: number };
    indexPath: string;
}

export function loadManifest(path: string): Manifest {
    const doc = JSON.parse(readFileSync(path, "utf-8"));
    if (typeof doc.run_id !== "string" || !Array.isArray(doc.outputs)) {
        throw new Error(`manifest ${path} lacks run_id/outputs`);
    }
    return doc as Manifest;
}

function findOutput(manifest: Manifest, baseDir: string, marker: string): string | null {
    for (const out of manifest.outputs) {
        if (basename(out).startsWith(marker)) {
            const direct = resolve(out);
            if (existsSync(direct)) return direct;
            const relative = join(baseDir, basename(out));
            if (existsSync(relative)) return relative;
        }
    }
    return null;
}

export function renderRun(spec: ReportSpec): RenderedReport {
    const manifest = loadManifest(spec.manifestPath);
    const baseDir = dirname(resolve(spec.manifestPath));
    mkdirSync(spec.outDir, { recursive: true });
    const figures: string[] = [];
    const warnings: string[] = [];
    let nodalCounts: { pos: number; neg: number } | undefined;

    const write = (name: string, content: string) => {
        const path = join(spec.outDir, name);
        writeFileSync(path, content);
        figures.push(name);
    };

    // field slices and the nodal map
    const solutionPath = findOutput(manifest, baseDir, "solution_");
    if (solutionPath) {
        const field = readFieldDump(solutionPath);
        const k = spec.sliceK ?? Math.floor(field.n / 2);
        write(
            `u_slice_${manifest.run_id}.svg`,
            heatmapSvg(zSlice(field, k), field.n, {
                title: `u, z-slice k=${k}, run ${manifest.run_id}`,
                diverging: true,
            }),
        );
        const nodal = nodalStructure(field);
        nodalCounts = { pos: nodal.positiveRegions, neg: nodal.negativeRegions };
        write(
            `nodal_map_${manifest.run_id}.svg`,
            nodalMapSvg(nodal.labels, field.n, k, nodal.positiveRegions, nodal.negativeRegions),
        );
    } else {
        warnings.push("solution dump missing; skipped field figures");
    }

    const phiPath = findOutput(manifest, baseDir, "phi_");
    if (phiPath) {
        const phi = readFieldDump(phiPath);
        const k = spec.sliceK ?? Math.floor(phi.n / 2);
        write(
            `phi_slice_${manifest.run_id}.svg`,
            heatmapSvg(zSlice(phi, k), phi.n, {
                title: `phi_u, z-slice k=${k}, run ${manifest.run_id}`,
                diverging: false,
            }),
        );
    } else {
        warnings.push("phi dump missing; skipped screening figure");
    }

    // flow trace: energy and cone distances
    const flowPath = findOutput(manifest, baseDir, "flow_");
    let flowTable: CsvTable | null = null;
    if (flowPath) {
        flowTable = parseCsv(readFileSync(flowPath, "utf-8"));
        const steps = numericColumn(flowTable, "step");
        const energies = numericColumn(flowTable, "energy");
        write(
            `energy_trace_${manifest.run_id}.svg`,
            lineChartSvg({ name: "energy trace", x: steps, y: energies }),
        );
        const distRows = flowTable.rows.filter(
            (r) => r["dist_Pplus"] !== "" && r["dist_Pminus"] !== "",
        );
        if (distRows.length > 0) {
            const xs = distRows.map((r) => Number(r["step"]));
            const dplus = distRows.map((r) => Number(r["dist_Pplus"]));
            write(
                `cone_distance_trace_${manifest.run_id}.svg`,
                lineChartSvg({ name: "distance to the nonnegative cone", x: xs, y: dplus }),
            );
        }
    }

    // continuation trace: energy versus perturbation weight
    const contPath = findOutput(manifest, baseDir, "continuation_");
    let contTable: CsvTable | null = null;
    if (contPath) {
        contTable = parseCsv(readFileSync(contPath, "utf-8"));
        const lams = numericColumn(contTable, "lambda");
        const energies = numericColumn(contTable, "energy");
        const positive = lams
            .map((lam, i) => ({ lam, e: energies[i] }))
            .filter((d) => d.lam > 0);
        write(
            `energy_vs_lambda_${manifest.run_id}.svg`,
            lineChartSvg({
                name: "energy vs lambda",
                x: positive.map((d) => d.lam),
                y: positive.map((d) => d.e),
                logX: true,
            }),
        );
    }

    if (figures.length === 0) {
        throw new Error("all figures failed: no artifacts were readable");
    }

    // index page with run metadata and figure links
    const diagPath = findOutput(manifest, baseDir, "diagnostics_");
    let diagHtml = "";
    if (diagPath) {
        const diag = parseCsv(readFileSync(diagPath, "utf-8"));
        const row = diag.rows[0] ?? {};
        diagHtml =
            "<h2>diagnostics</h2><table>" +
            diag.header
                .map((name) => `<tr><td>${name}</td><td>${row[name] ?? ""}</td></tr>`)
                .join("") +
            "</table>";
    }
    const index = [
        "<!DOCTYPE html>",
        `<html><head><meta charset="utf-8"><title>run ${manifest.run_id}</title></head><body>`,
        `<h1>spflow run ${manifest.run_id}</h1>`,
        `<p>rng seed: ${manifest.rng_seed ?? "?"}</p>`,
        nodalCounts
            ? `<p data-pos="${nodalCounts.pos}" data-neg="${nodalCounts.neg}">nodal regions: ${nodalCounts.pos} positive, ${nodalCounts.neg} negative</p>`
            : "",
        ...figures.map((f) => `<div><img src="${f}" alt="${f}"/></div>`),
        diagHtml,
        warnings.length ? `<h2>warnings</h2><ul>${warnings.map((w) => `<li>${w}</li>`).join("")}</ul>` : "",
        "</body></html>",
    ].join("\n");
    const indexPath = join(spec.outDir, `index_${manifest.run_id}.html`);
    writeFileSync(indexPath, index);
    return { figures, warnings, nodalCounts, indexPath };
}
