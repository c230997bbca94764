/** RFC-4180 CSV parsing for the solver's trace and diagnostics files. */

export interface CsvTable {
    header: string[];
    rows: Record<string, string>[];
}

export function parseCsv(text: string): CsvTable {
    const records: string[][] = [];
    let field = "";
    let record: string[] = [];
    let inQuotes = false;
    let i = 0;
    while (i < text.length) {
        const c = text[i];
        if (inQuotes) {
            if (c === '"') {
                if (text[i + 1] === '"') {
                    field += '"';
                    i += 2;
                    continue;
                }
                inQuotes = false;
                i += 1;
                continue;
            }
            field += c;
            i += 1;
            continue;
        }
        if (c === '"') {
            inQuotes = true;
            i += 1;
            continue;
        }
        if (c === ",") {
            record.push(field);
            field = "";
            i += 1;
            continue;
        }
        if (c === "\r") {
            i += 1;
            continue;
        }
        if (c === "\n") {
            record.push(field);
            records.push(record);
            field = "";
            record = [];
            i += 1;
            continue;
        }
        field += c;
        i += 1;
    }
    if (field.length > 0 || record.length > 0) {
        record.push(field);
        records.push(record);
    }
    if (records.length === 0) {
        throw new Error("empty CSV document");
    }
    const header = records[0];
    const rows = records.slice(1).filter((r) => r.length > 1 || r[0] !== "").map((r) => {
        const row: Record<string, string> = {};
        header.forEach((name, idx) => {
            row[name] = r[idx] ?? "";
        });
        return row;
    });
    return { header, rows };
}

export function numericColumn(table: CsvTable, name: string): number[] {
    if (!table.header.includes(name)) {
        throw new Error(`CSV lacks column ${name}`);
    }
    return table.rows.map((row) => {
        const value = Number(row[name]);
        if (!Number.isFinite(value)) {
            throw new Error(`non-numeric value ${JSON.stringify(row[name])} in column ${name}`);
        }
        return value;
    });
}
