/** Deterministic SVG figure emitters: heatmaps, signed nodal maps, line
 * charts. Pure string generation so regeneration is byte-identical. */

function fmt(x: number): string {
    return Number.isInteger(x) ? String(x) : x.toFixed(3);
}

function colorDiverging(t: number): string {
    // t in [-1, 1]: blue -> white -> red
    const clamp = Math.max(-1, Math.min(1, t));
    const r = clamp > 0 ? 255 : Math.round(255 * (1 + clamp));
    const b = clamp < 0 ? 255 : Math.round(255 * (1 - clamp));
    const g = Math.round(255 * (1 - Math.abs(clamp)));
    return `rgb(${r},${g},${b})`;
}

function colorSequential(t: number): string {
    const clamp = Math.max(0, Math.min(1, t));
    const v = Math.round(255 * (1 - clamp));
    return `rgb(${v},${Math.round(255 - 155 * clamp)},255)`;
}

export function heatmapSvg(
    values: Float64Array,
    n: number,
    opts: { title: string; diverging: boolean; cell?: number },
): string {
    const cell = opts.cell ?? Math.max(2, Math.floor(480 / n));
    const w = n * cell;
    const header = 24;
    let maxAbs = 0;
    for (const v of values) maxAbs = Math.max(maxAbs, Math.abs(v));
    const scale = maxAbs > 0 ? 1 / maxAbs : 1;
    const parts: string[] = [];
    parts.push(
        `<svg xmlns="http://www.w3.org/2000/svg" width="${w}" height="${w + header}" viewBox="0 0 ${w} ${w + header}">`,
    );
    parts.push(`<title>${opts.title}</title>`);
    parts.push(`<text x="4" y="16" font-family="monospace" font-size="12">${opts.title}</text>`);
    for (let i = 0; i < n; i++) {
        for (let j = 0; j < n; j++) {
            const v = values[i * n + j] * scale;
            const color = opts.diverging ? colorDiverging(v) : colorSequential(Math.abs(v));
            parts.push(
                `<rect x="${j * cell}" y="${header + i * cell}" width="${cell}" height="${cell}" fill="${color}"/>`,
            );
        }
    }
    parts.push("</svg>");
    return parts.join("\n");
}

export function nodalMapSvg(
    labels: Int32Array,
    n: number,
    sliceK: number,
    positiveRegions: number,
    negativeRegions: number,
): string {
    const cell = Math.max(2, Math.floor(480 / n));
    const w = n * cell;
    const header = 24;
    const parts: string[] = [];
    parts.push(
        `<svg xmlns="http://www.w3.org/2000/svg" width="${w}" height="${w + header}" viewBox="0 0 ${w} ${w + header}" data-pos-regions="${positiveRegions}" data-neg-regions="${negativeRegions}">`,
    );
    parts.push(
        `<text x="4" y="16" font-family="monospace" font-size="12">nodal map (z mid): ${positiveRegions} positive / ${negativeRegions} negative regions</text>`,
    );
    for (let i = 0; i < n; i++) {
        for (let j = 0; j < n; j++) {
            const label = labels[(i * n + j) * n + sliceK];
            const color = label > 0 ? "rgb(200,40,40)" : label < 0 ? "rgb(40,60,200)" : "rgb(245,245,245)";
            parts.push(
                `<rect x="${j * cell}" y="${header + i * cell}" width="${cell}" height="${cell}" fill="${color}"/>`,
            );
        }
    }
    parts.push("</svg>");
    return parts.join("\n");
}

export interface Series {
    name: string;
    x: number[];
    y: number[];
    logY?: boolean;
    logX?: boolean;
}

export function lineChartSvg(series: Series, width = 520, height = 300): string {
    const margin = { left: 64, right: 12, top: 28, bottom: 36 };
    const innerW = width - margin.left - margin.right;
    const innerH = height - margin.top - margin.bottom;
    const tx = (v: number) => (series.logX ? Math.log10(Math.max(v, 1e-300)) : v);
    const ty = (v: number) => (series.logY ? Math.log10(Math.max(v, 1e-300)) : v);
    const xs = series.x.map(tx);
    const ys = series.y.map(ty);
    const xmin = Math.min(...xs);
    const xmax = Math.max(...xs);
    const ymin = Math.min(...ys);
    const ymax = Math.max(...ys);
    const xspan = xmax - xmin || 1;
    const yspan = ymax - ymin || 1;
    const px = (v: number) => margin.left + ((v - xmin) / xspan) * innerW;
    const py = (v: number) => margin.top + innerH - ((v - ymin) / yspan) * innerH;
    const points = xs.map((x, i) => `${fmt(px(x))},${fmt(py(ys[i]))}`).join(" ");
    const parts: string[] = [];
    parts.push(
        `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`,
    );
    parts.push(`<title>${series.name}</title>`);
    parts.push(
        `<text x="6" y="18" font-family="monospace" font-size="12">${series.name}</text>`,
    );
    parts.push(
        `<rect x="${margin.left}" y="${margin.top}" width="${innerW}" height="${innerH}" fill="none" stroke="black"/>`,
    );
    parts.push(
        `<polyline fill="none" stroke="rgb(30,90,200)" stroke-width="1.5" points="${points}"/>`,
    );
    // data points carry their source values for cross-checking
    series.x.forEach((x, i) => {
        parts.push(
            `<circle cx="${fmt(px(xs[i]))}" cy="${fmt(py(ys[i]))}" r="2.5" fill="rgb(30,90,200)" data-x="${x}" data-y="${series.y[i]}"/>`,
        );
    });
    parts.push(
        `<text x="${margin.left}" y="${height - 8}" font-family="monospace" font-size="10">x: [${fmt(Math.min(...series.x))}, ${fmt(Math.max(...series.x))}]${series.logX ? " (log)" : ""}</text>`,
    );
    parts.push("</svg>");
    return parts.join("\n");
}
