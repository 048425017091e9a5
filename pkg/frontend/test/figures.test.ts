import { mkdtempSync, readFileSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';
import { beforeAll, describe, expect, it } from 'vitest';

import { SchemaError, parseFits, parseReport } from '../src/csv';
import { gridMass, parseGrid } from '../src/grid';
import { FigureSpec, loadFigureSpec, render } from '../src/figures';
import { main as cliMain } from '../src/cli';

const FIXTURES = join(__dirname, 'fixtures');

let dir: string;

function writeSyntheticReport(): string {
  const lines = ['series_label,abscissa,value,stderr'];
  for (const n of [8, 16, 32, 64, 128]) {
    lines.push(`decay_vs_N,${n},${4.0 / n},${0.1 / n}`);
  }
  const path = join(dir, 'report.csv');
  writeFileSync(path, lines.join('\n') + '\n');
  return path;
}

function writeSyntheticFits(slope: number): string {
  const path = join(dir, 'fits.csv');
  writeFileSync(path,
    'series_label,slope,intercept,r_squared\n' +
    `decay_vs_N,${slope},${Math.log(4.0)},1.0\n`);
  return path;
}

function writeSyntheticGrid(): string {
  const cells = 64;
  const lo = -2.0, hi = 3.0;
  const dx = (hi - lo) / cells;
  const values = new Float64Array(cells);
  let sum = 0;
  for (let i = 0; i < cells; i++) {
    const x = lo + (i + 0.5) * dx;
    values[i] = Math.exp(-0.5 * ((x - 0.5) / 0.3) ** 2);
    sum += values[i] * dx;
  }
  for (let i = 0; i < cells; i++) values[i] /= sum;
  const header = Buffer.from(`CDLGRID 1 ${cells} ${lo} ${hi} 0.25\n`, 'ascii');
  const body = Buffer.alloc(8 * cells);
  for (let i = 0; i < cells; i++) body.writeDoubleLE(values[i], 8 * i);
  const path = join(dir, 'snap.grid');
  writeFileSync(path, Buffer.concat([header, body]));
  return path;
}

beforeAll(() => {
  dir = mkdtempSync(join(tmpdir(), 'crossdiff-plot-'));
});

describe('csv parsing', () => {
  it('groups rows by series label', () => {
    const text = 'series_label,abscissa,value,stderr\n' +
      'a,1,2,\na,2,3,0.1\nb,1,5,\n';
    const series = parseReport(text, 'x.csv');
    expect(series.map(s => s.label)).toEqual(['a', 'b']);
    expect(series[0].points[1].stderr).toBeCloseTo(0.1);
    expect(series[0].points[0].stderr).toBeNull();
  });

  it('names the missing column', () => {
    expect(() => parseReport('series_label,abscissa,value\nx,1,2\n', 'r.csv'))
      .toThrowError(/missing column 'stderr'/);
    expect(() => parseFits('series_label,slope,intercept\nx,1,2\n', 'f.csv'))
      .toThrowError(/missing column 'r_squared'/);
  });

  it('rejects non-numeric cells with position info', () => {
    const text = 'series_label,abscissa,value,stderr\na,one,2,\n';
    expect(() => parseReport(text, 'r.csv')).toThrowError(/r.csv:2/);
  });
});

describe('grid parsing', () => {
  it('round-trips the synthetic snapshot', () => {
    const path = writeSyntheticGrid();
    const snap = parseGrid(readFileSync(path), path);
    expect(snap.dim).toBe(1);
    expect(snap.cells).toBe(64);
    expect(snap.time).toBeCloseTo(0.25);
    expect(gridMass(snap)).toBeCloseTo(1.0, 10);
  });

  it('rejects truncated payloads', () => {
    const path = writeSyntheticGrid();
    const whole = readFileSync(path);
    expect(() => parseGrid(whole.subarray(0, whole.length - 9), path))
      .toThrowError(/payload/);
  });
});

describe('figure kinds', () => {
  it('loglog_rate annotates the fitted slope', () => {
    const spec: FigureSpec = {
      kind: 'loglog_rate',
      reportCsv: writeSyntheticReport(),
      fitsCsv: writeSyntheticFits(-1.0),
    };
    const svg = render(spec);
    expect(svg).toContain('slope = -1.00');
    expect(svg).toContain('<svg');
  });

  it('density_snapshot annotates the mass', () => {
    const spec: FigureSpec = { kind: 'density_snapshot',
                               snapshot: writeSyntheticGrid() };
    const svg = render(spec);
    expect(svg).toContain('∫ρ = 1.000');
  });

  it('sweep_curve and energy_decay render the synthetic series', () => {
    const report = writeSyntheticReport();
    for (const kind of ['sweep_curve', 'energy_decay'] as const) {
      const svg = render({ kind, reportCsv: report });
      expect(svg).toContain('decay_vs_N');
    }
  });

  it('is deterministic', () => {
    const spec: FigureSpec = {
      kind: 'loglog_rate',
      reportCsv: writeSyntheticReport(),
      fitsCsv: writeSyntheticFits(-1.0),
    };
    expect(render(spec)).toBe(render(spec));
  });

  it('errors mention the missing series', () => {
    const spec: FigureSpec = {
      kind: 'sweep_curve',
      reportCsv: writeSyntheticReport(),
      series: 'nope',
    };
    expect(() => render(spec)).toThrowError(/no series labelled 'nope'/);
  });
});

describe('figure spec files', () => {
  it('validates the kind', () => {
    const path = join(dir, 'bad.json');
    writeFileSync(path, JSON.stringify({ kind: 'pie_chart' }));
    expect(() => loadFigureSpec(path)).toThrowError(/kind/);
  });

  it('requires the inputs for the kind', () => {
    const path = join(dir, 'incomplete.json');
    writeFileSync(path, JSON.stringify({ kind: 'loglog_rate',
                                         report_csv: 'r.csv' }));
    expect(() => loadFigureSpec(path)).toThrowError(/fits_csv/);
  });
});

describe('cli', () => {
  it('renders a spec to a file', () => {
    const spec = {
      kind: 'loglog_rate',
      report_csv: writeSyntheticReport(),
      fits_csv: writeSyntheticFits(-1.0),
    };
    const specPath = join(dir, 'fig.json');
    writeFileSync(specPath, JSON.stringify(spec));
    const out = join(dir, 'fig.svg');
    const code = cliMain(['node', 'crossdiff-plot', specPath, '--out', out]);
    expect(code).toBe(0);
    expect(readFileSync(out, 'utf-8')).toContain('slope = -1.00');
  });

  it('reports schema failures', () => {
    const specPath = join(dir, 'broken.json');
    writeFileSync(specPath, JSON.stringify({ kind: 'density_snapshot',
                                             snapshot: join(dir, 'report.csv') }));
    writeSyntheticReport();
    const code = cliMain(['node', 'crossdiff-plot', specPath,
                          '--out', join(dir, 'x.svg')]);
    expect(code).toBe(1);
  });
});

describe('runner output integration', () => {
  // fixtures produced by scripts/make_plot_fixtures.py from real runs of the
  // rate, sweep and energy experiments
  it('renders every kind from real runner outputs', () => {
    const rate = render({
      kind: 'loglog_rate',
      reportCsv: join(FIXTURES, 'poc', 'report.csv'),
      fitsCsv: join(FIXTURES, 'poc', 'fits.csv'),
      series: 'coupled_sup_gap_vs_N',
    });
    const fits = parseFits(
      readFileSync(join(FIXTURES, 'poc', 'fits.csv'), 'utf-8'), 'fits.csv');
    const slope = fits.find(f => f.label === 'coupled_sup_gap_vs_N')!.slope;
    const annotated = /slope = (-?\d+\.\d\d)/.exec(rate);
    expect(annotated).not.toBeNull();
    expect(Math.abs(Number(annotated![1]) - slope)).toBeLessThanOrEqual(0.01);

    const sweep = render({
      kind: 'sweep_curve',
      reportCsv: join(FIXTURES, 'sweep', 'report.csv'),
      series: 'nonlocal_local_l1_vs_eps',
    });
    expect(sweep).toContain('nonlocal_local_l1_vs_eps');

    const energy = render({
      kind: 'energy_decay',
      reportCsv: join(FIXTURES, 'energy', 'report.csv'),
    });
    expect(energy).toContain('energy_local');
    expect(energy).toContain('energy_regularised');

    const density = render({
      kind: 'density_snapshot',
      snapshot: join(FIXTURES, 'sweep', 'local_species1_final.grid'),
    });
    expect(density).toMatch(/∫ρ = 1\.00\d/);
  });
});
