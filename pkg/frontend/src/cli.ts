/** Entry point: node dist/src/cli.js <manifest.json> <out-dir> [slice-k] */

import { renderRun } from "./report";

function main(argv: string[]): number {
    if (argv.length < 2) {
        console.error("usage: report <manifest.json> <out-dir> [slice-k]");
        return 1;
    }
    const [manifestPath, outDir, sliceArg] = argv;
    try {
        const rendered = renderRun({
            manifestPath,
            outDir,
            sliceK: sliceArg !== undefined ? Number(sliceArg) : undefined,
        });
        for (const warning of rendered.warnings) {
            console.warn(`warning: ${warning}`);
        }
        console.log(`wrote ${rendered.figures.length} figures and ${rendered.indexPath}`);
        return 0;
    } catch (err) {
        console.error(`error: ${(err as Error).message}`);
        return 1;
    }
}

process.exitCode = main(process.argv.slice(2));
