/** The four figure kinds, each a pure function from inputs to SVG text. */

import { readFileSync } from 'fs';

import { RateFit, SchemaError, Series, parseFits, parseReport, pickSeries } from './csv';
import { GridSnapshot, gridMass, parseGrid } from './grid';
import { Scene, color, padLinear, padLog } from './svg';

export const FIGURE_KINDS = [
  'loglog_rate', 'sweep_curve', 'energy_decay', 'density_snapshot',
] as const;
export type FigureKind = (typeof FIGURE_KINDS)[number];

export interface FigureSpec {
  kind: FigureKind;
  reportCsv?: string;
  fitsCsv?: string;
  series?: string;
  snapshot?: string;
  title?: string;
}

export function loadFigureSpec(path: string): FigureSpec {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, 'utf-8'));
  } catch (err) {
    throw new SchemaError(`${path}: not a JSON figure spec (${err})`);
  }
  const obj = raw as Record<string, unknown>;
  const kind = obj.kind;
  if (typeof kind !== 'string' || !FIGURE_KINDS.includes(kind as FigureKind)) {
    throw new SchemaError(
      `${path}: 'kind' must be one of ${FIGURE_KINDS.join(', ')}`);
  }
  const str = (key: string): string | undefined => {
    const v = obj[key];
    if (v === undefined) return undefined;
    if (typeof v !== 'string') throw new SchemaError(`${path}: '${key}' must be a string`);
    return v;
  };
  const spec: FigureSpec = {
    kind: kind as FigureKind,
    reportCsv: str('report_csv'),
    fitsCsv: str('fits_csv'),
    series: str('series'),
    snapshot: str('snapshot'),
    title: str('title'),
  };
  if (spec.kind === 'density_snapshot') {
    if (!spec.snapshot) throw new SchemaError(`${path}: density_snapshot needs 'snapshot'`);
  } else if (!spec.reportCsv) {
    throw new SchemaError(`${path}: ${spec.kind} needs 'report_csv'`);
  }
  if (spec.kind === 'loglog_rate' && !spec.fitsCsv) {
    throw new SchemaError(`${path}: loglog_rate needs 'fits_csv'`);
  }
  return spec;
}

function readSeries(spec: FigureSpec): Series {
  const path = spec.reportCsv!;
  const series = parseReport(readFileSync(path, 'utf-8'), path);
  return pickSeries(series, spec.series, path);
}

function positive(series: Series, what: string): void {
  for (const p of series.points) {
    if (p.abscissa <= 0 || p.value <= 0) {
      throw new SchemaError(
        `series '${series.label}': ${what} plots need positive data`);
    }
  }
}

function renderLoglogRate(spec: FigureSpec): string {
  const series = readSeries(spec);
  positive(series, 'log-log');
  const fitsPath = spec.fitsCsv!;
  const fits = parseFits(readFileSync(fitsPath, 'utf-8'), fitsPath);
  const fit: RateFit | undefined = fits.find(f => f.label === series.label);
  if (!fit) {
    throw new SchemaError(
      `${fitsPath}: no fit for series '${series.label}'`);
  }
  const xs = series.points.map(p => p.abscissa);
  const ys = series.points.map(p => p.value);
  const [xLo, xHi] = padLog(Math.min(...xs), Math.max(...xs));
  const [yLo, yHi] = padLog(Math.min(...ys), Math.max(...ys));
  const scene = new Scene(
    { lo: xLo, hi: xHi, log: true, label: 'N' },
    { lo: yLo, hi: yHi, log: true, label: series.label },
    spec.title ?? `${series.label} (log-log)`);
  const fitYs = xs.map(x => Math.exp(fit.intercept) * Math.pow(x, fit.slope));
  scene.polyline(xs, fitYs, '#888', 1.2, '6 4');
  scene.polyline(xs, ys, color(0));
  scene.errorBars(xs, ys, series.points.map(p => p.stderr), color(0));
  scene.markers(xs, ys, color(0));
  scene.annotation(`slope = ${fit.slope.toFixed(2)}`);
  scene.annotation(`r^2 = ${fit.rSquared.toFixed(3)}`, 1);
  return scene.render();
}

function renderSweepCurve(spec: FigureSpec): string {
  const series = readSeries(spec);
  positive(series, 'sweep');
  const xs = series.points.map(p => p.abscissa);
  const ys = series.points.map(p => p.value);
  const [xLo, xHi] = padLog(Math.min(...xs), Math.max(...xs));
  const [yLo, yHi] = padLog(Math.min(...ys), Math.max(...ys));
  const scene = new Scene(
    { lo: xLo, hi: xHi, log: true, label: 'sweep parameter' },
    { lo: yLo, hi: yHi, log: true, label: series.label },
    spec.title ?? series.label);
  scene.polyline(xs, ys, color(1));
  scene.markers(xs, ys, color(1));
  const first = series.points[0];
  const last = series.points[series.points.length - 1];
  scene.annotation(`final/first = ${(last.value / first.value).toFixed(3)}`);
  return scene.render();
}

function renderEnergyDecay(spec: FigureSpec): string {
  const path = spec.reportCsv!;
  const all = parseReport(readFileSync(path, 'utf-8'), path);
  const chosen = spec.series
    ? [pickSeries(all, spec.series, path)]
    : all;
  if (chosen.length === 0) {
    throw new SchemaError(`${path}: no series to draw`);
  }
  let xLo = Infinity, xHi = -Infinity, yLo = Infinity, yHi = -Infinity;
  for (const s of chosen) {
    for (const p of s.points) {
      xLo = Math.min(xLo, p.abscissa); xHi = Math.max(xHi, p.abscissa);
      yLo = Math.min(yLo, p.value); yHi = Math.max(yHi, p.value);
    }
  }
  const [pyLo, pyHi] = padLinear(yLo, yHi);
  const scene = new Scene(
    { lo: xLo, hi: xHi, log: false, label: 'time' },
    { lo: pyLo, hi: pyHi, log: false, label: 'functional value' },
    spec.title ?? 'energy decay');
  chosen.forEach((s, i) => {
    scene.polyline(s.points.map(p => p.abscissa), s.points.map(p => p.value),
                   color(i));
  });
  scene.legend(chosen.map(s => s.label));
  const drop = chosen.map(s => {
    const v0 = s.points[0].value;
    const v1 = s.points[s.points.length - 1].value;
    return `${s.label}: drop ${(v0 - v1).toExponential(2)}`;
  });
  scene.annotation(drop[0], chosen.length + 1);
  return scene.render();
}

function renderDensitySnapshot(spec: FigureSpec): string {
  const path = spec.snapshot!;
  const snap: GridSnapshot = parseGrid(readFileSync(path), path);
  const mass = gridMass(snap);
  if (snap.dim === 1) {
    const dx = (snap.boxHi[0] - snap.boxLo[0]) / snap.cells;
    const xs = Array.from({ length: snap.cells },
                          (_v, i) => snap.boxLo[0] + (i + 0.5) * dx);
    const ys = Array.from(snap.values);
    const [yLo, yHi] = padLinear(0, Math.max(...ys, 1e-12));
    const scene = new Scene(
      { lo: snap.boxLo[0], hi: snap.boxHi[0], log: false, label: 'x' },
      { lo: yLo, hi: yHi, log: false, label: 'density' },
      spec.title ?? `density at t = ${snap.time}`);
    scene.polyline(xs, ys, color(2));
    scene.annotation(`∫ρ = ${mass.toFixed(3)}`);
    return scene.render();
  }
  // 2d: grayscale cell map
  const scene = new Scene(
    { lo: snap.boxLo[0], hi: snap.boxHi[0], log: false, label: 'x' },
    { lo: snap.boxLo[1], hi: snap.boxHi[1], log: false, label: 'y' },
    spec.title ?? `density at t = ${snap.time}`);
  const n = snap.cells;
  const dx = (snap.boxHi[0] - snap.boxLo[0]) / n;
  const dy = (snap.boxHi[1] - snap.boxLo[1]) / n;
  let peak = 0;
  for (const v of snap.values) peak = Math.max(peak, v);
  const stride = Math.max(1, Math.floor(n / 128));
  for (let i = 0; i < n; i += stride) {
    for (let j = 0; j < n; j += stride) {
      const v = snap.values[i * n + j];
      scene.heatCell(snap.boxLo[0] + i * dx, snap.boxLo[0] + (i + stride) * dx,
                     snap.boxLo[1] + j * dy, snap.boxLo[1] + (j + stride) * dy,
                     peak > 0 ? v / peak : 0);
    }
  }
  scene.annotation(`∫ρ = ${mass.toFixed(3)}`);
  return scene.render();
}

export function render(spec: FigureSpec): string {
  switch (spec.kind) {
    case 'loglog_rate': return renderLoglogRate(spec);
    case 'sweep_curve': return renderSweepCurve(spec);
    case 'energy_decay': return renderEnergyDecay(spec);
    case 'density_snapshot': return renderDensitySnapshot(spec);
  }
}
