/** Readers for the runner's CSV outputs. */

export interface SeriesPoint {
  abscissa: number;
  value: number;
  stderr: number | null;
}

export interface Series {
  label: string;
  points: SeriesPoint[];
}

export interface RateFit {
  label: string;
  slope: number;
  intercept: number;
  rSquared: number;
}

export class SchemaError extends Error {}

function splitHeader(line: string, expected: string[], path: string): void {
  const cols = line.split(',').map(c => c.trim());
  for (const name of expected) {
    if (!cols.includes(name)) {
      throw new SchemaError(`${path}: missing column '${name}' (header was '${line}')`);
    }
  }
  if (cols.length !== expected.length) {
    const extra = cols.filter(c => !expected.includes(c));
    throw new SchemaError(`${path}: unexpected column '${extra[0]}'`);
  }
}

function parseNumber(token: string, column: string, path: string, lineno: number): number {
  const value = Number(token);
  if (token.trim() === '' || !Number.isFinite(value)) {
    throw new SchemaError(`${path}:${lineno}: bad '${column}' value '${token}'`);
  }
  return value;
}

/** Parse report.csv: series_label, abscissa, value, stderr (stderr may be empty). */
export function parseReport(text: string, path: string): Series[] {
  const lines = text.split(/\r?\n/).filter(l => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${path}: empty file`);
  }
  splitHeader(lines[0], ['series_label', 'abscissa', 'value', 'stderr'], path);
  const byLabel = new Map<string, Series>();
  const order: string[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(',');
    if (cells.length !== 4) {
      throw new SchemaError(`${path}:${i + 1}: expected 4 cells, got ${cells.length}`);
    }
    const label = cells[0];
    const point: SeriesPoint = {
      abscissa: parseNumber(cells[1], 'abscissa', path, i + 1),
      value: parseNumber(cells[2], 'value', path, i + 1),
      stderr: cells[3].trim() === '' ? null : parseNumber(cells[3], 'stderr', path, i + 1),
    };
    if (!byLabel.has(label)) {
      byLabel.set(label, { label, points: [] });
      order.push(label);
    }
    byLabel.get(label)!.points.push(point);
  }
  return order.map(l => byLabel.get(l)!);
}

/** Parse fits.csv: series_label, slope, intercept, r_squared. */
export function parseFits(text: string, path: string): RateFit[] {
  const lines = text.split(/\r?\n/).filter(l => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${path}: empty file`);
  }
  splitHeader(lines[0], ['series_label', 'slope', 'intercept', 'r_squared'], path);
  const fits: RateFit[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(',');
    if (cells.length !== 4) {
      throw new SchemaError(`${path}:${i + 1}: expected 4 cells, got ${cells.length}`);
    }
    fits.push({
      label: cells[0],
      slope: parseNumber(cells[1], 'slope', path, i + 1),
      intercept: parseNumber(cells[2], 'intercept', path, i + 1),
      rSquared: parseNumber(cells[3], 'r_squared', path, i + 1),
    });
  }
  return fits;
}

export function pickSeries(series: Series[], label: string | undefined, path: string): Series {
  if (label === undefined) {
    if (series.length === 0) {
      throw new SchemaError(`${path}: no series found`);
    }
    return series[0];
  }
  const found = series.find(s => s.label === label);
  if (!found) {
    const known = series.map(s => s.label).join(', ');
    throw new SchemaError(`${path}: no series labelled '${label}' (have: ${known})`);
  }
  return found;
}
