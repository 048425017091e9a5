/** Minimal deterministic SVG scene builder: fixed canvas, hand-rolled scales.
 *
 * Everything is assembled from strings with fixed number formatting, so the
 * same inputs always produce the same bytes.
 */

export const WIDTH = 720;
export const HEIGHT = 480;
export const MARGIN = { left: 78, right: 24, top: 46, bottom: 56 };

const PALETTE = ['#1f6fb2', '#c54b2c', '#3a8c5c', '#7b5aa6', '#b0892b'];

export function color(i: number): string {
  return PALETTE[i % PALETTE.length];
}

function fmt(x: number): string {
  return x.toFixed(2);
}

/** Compact tick label: plain within a friendly range, scientific outside. */
export function tickLabel(x: number): string {
  if (x === 0) return '0';
  const mag = Math.abs(x);
  if (mag >= 0.01 && mag < 10000) {
    const rounded = Number(x.toPrecision(4));
    return String(rounded);
  }
  return x.toExponential(1).replace('e', 'e');
}

export type Scale = (v: number) => number;

export function linearScale(lo: number, hi: number, a: number, b: number): Scale {
  const span = hi - lo || 1;
  return v => a + ((v - lo) / span) * (b - a);
}

export function logScale(lo: number, hi: number, a: number, b: number): Scale {
  const llo = Math.log10(lo);
  const span = Math.log10(hi) - llo || 1;
  return v => a + ((Math.log10(v) - llo) / span) * (b - a);
}

/** A handful of round tick positions covering [lo, hi]. */
export function linearTicks(lo: number, hi: number, count = 6): number[] {
  const span = hi - lo || 1;
  const raw = span / count;
  const pow = Math.pow(10, Math.floor(Math.log10(raw)));
  const step = [1, 2, 5, 10].map(m => m * pow).find(s => span / s <= count) ?? pow * 10;
  const first = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = first; v <= hi + 1e-12 * span; v += step) {
    ticks.push(Math.abs(v) < 1e-12 * span ? 0 : v);
  }
  return ticks;
}

/** Decade ticks for a positive range. */
export function logTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.floor(Math.log10(lo)); e <= Math.ceil(Math.log10(hi)); e++) {
    const v = Math.pow(10, e);
    if (v >= lo / 1.0001 && v <= hi * 1.0001) ticks.push(v);
  }
  return ticks.length >= 2 ? ticks : [lo, hi];
}

export interface AxisSpec {
  lo: number;
  hi: number;
  log: boolean;
  label: string;
}

export class Scene {
  private parts: string[] = [];
  readonly x: Scale;
  readonly y: Scale;

  constructor(private xAxis: AxisSpec, private yAxis: AxisSpec,
              private title: string) {
    const { left, right, top, bottom } = MARGIN;
    this.x = (xAxis.log ? logScale : linearScale)(
      xAxis.lo, xAxis.hi, left, WIDTH - right);
    this.y = (yAxis.log ? logScale : linearScale)(
      yAxis.lo, yAxis.hi, HEIGHT - bottom, top);
    this.frame();
  }

  private frame(): void {
    const { left, right, top, bottom } = MARGIN;
    const x0 = left, x1 = WIDTH - right, y0 = HEIGHT - bottom, y1 = top;
    this.parts.push(
      `<rect x="${x0}" y="${y1}" width="${x1 - x0}" height="${y0 - y1}" ` +
      'fill="none" stroke="#444" stroke-width="1"/>');
    this.parts.push(
      `<text x="${fmt((x0 + x1) / 2)}" y="24" text-anchor="middle" ` +
      `font-size="16" fill="#222">${escapeText(this.title)}</text>`);
    const xTicks = this.xAxis.log ? logTicks(this.xAxis.lo, this.xAxis.hi)
      : linearTicks(this.xAxis.lo, this.xAxis.hi);
    for (const t of xTicks) {
      const px = this.x(t);
      this.parts.push(
        `<line x1="${fmt(px)}" y1="${y0}" x2="${fmt(px)}" y2="${y0 + 5}" stroke="#444"/>`);
      this.parts.push(
        `<text x="${fmt(px)}" y="${y0 + 20}" text-anchor="middle" ` +
        `font-size="11" fill="#333">${tickLabel(t)}</text>`);
      this.parts.push(
        `<line x1="${fmt(px)}" y1="${y0}" x2="${fmt(px)}" y2="${y1}" ` +
        'stroke="#ddd" stroke-width="0.5"/>');
    }
    const yTicks = this.yAxis.log ? logTicks(this.yAxis.lo, this.yAxis.hi)
      : linearTicks(this.yAxis.lo, this.yAxis.hi);
    for (const t of yTicks) {
      const py = this.y(t);
      this.parts.push(
        `<line x1="${x0 - 5}" y1="${fmt(py)}" x2="${x0}" y2="${fmt(py)}" stroke="#444"/>`);
      this.parts.push(
        `<text x="${x0 - 8}" y="${fmt(py + 4)}" text-anchor="end" ` +
        `font-size="11" fill="#333">${tickLabel(t)}</text>`);
      this.parts.push(
        `<line x1="${x0}" y1="${fmt(py)}" x2="${x1}" y2="${fmt(py)}" ` +
        'stroke="#ddd" stroke-width="0.5"/>');
    }
    this.parts.push(
      `<text x="${fmt((x0 + x1) / 2)}" y="${HEIGHT - 14}" text-anchor="middle" ` +
      `font-size="13" fill="#222">${escapeText(this.xAxis.label)}</text>`);
    this.parts.push(
      `<text x="20" y="${fmt((y0 + y1) / 2)}" text-anchor="middle" font-size="13" ` +
      `fill="#222" transform="rotate(-90 20 ${fmt((y0 + y1) / 2)})">` +
      `${escapeText(this.yAxis.label)}</text>`);
  }

  polyline(xs: number[], ys: number[], stroke: string, width = 1.8,
           dash?: string): void {
    const pts = xs.map((v, i) => `${fmt(this.x(v))},${fmt(this.y(ys[i]))}`).join(' ');
    const dashAttr = dash ? ` stroke-dasharray="${dash}"` : '';
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${stroke}" ` +
      `stroke-width="${width}"${dashAttr}/>`);
  }

  markers(xs: number[], ys: number[], fill: string, r = 3.5): void {
    for (let i = 0; i < xs.length; i++) {
      this.parts.push(
        `<circle cx="${fmt(this.x(xs[i]))}" cy="${fmt(this.y(ys[i]))}" ` +
        `r="${r}" fill="${fill}"/>`);
    }
  }

  errorBars(xs: number[], ys: number[], err: (number | null)[],
            stroke: string): void {
    for (let i = 0; i < xs.length; i++) {
      const e = err[i];
      if (e === null || e <= 0) continue;
      const lo = ys[i] - e;
      if (this.yAxis.log && lo <= 0) continue;
      const px = fmt(this.x(xs[i]));
      this.parts.push(
        `<line x1="${px}" y1="${fmt(this.y(lo))}" x2="${px}" ` +
        `y2="${fmt(this.y(ys[i] + e))}" stroke="${stroke}" stroke-width="1"/>`);
    }
  }

  heatCell(x0: number, x1: number, y0v: number, y1v: number, shade: number): void {
    const level = Math.round(255 * (1 - Math.min(Math.max(shade, 0), 1)));
    const hex = level.toString(16).padStart(2, '0');
    this.parts.push(
      `<rect x="${fmt(this.x(x0))}" y="${fmt(this.y(y1v))}" ` +
      `width="${fmt(this.x(x1) - this.x(x0))}" ` +
      `height="${fmt(this.y(y0v) - this.y(y1v))}" fill="#${hex}${hex}${hex}"/>`);
  }

  annotation(text: string, slot = 0): void {
    const y = MARGIN.top + 18 + 16 * slot;
    this.parts.push(
      `<text x="${WIDTH - MARGIN.right - 8}" y="${y}" text-anchor="end" ` +
      `font-size="13" fill="#111">${escapeText(text)}</text>`);
  }

  legend(names: string[]): void {
    names.forEach((name, i) => {
      const y = MARGIN.top + 18 + 16 * i;
      const x = MARGIN.left + 10;
      this.parts.push(
        `<line x1="${x}" y1="${y - 4}" x2="${x + 22}" y2="${y - 4}" ` +
        `stroke="${color(i)}" stroke-width="2"/>`);
      this.parts.push(
        `<text x="${x + 28}" y="${y}" font-size="12" fill="#222">` +
        `${escapeText(name)}</text>`);
    });
  }

  render(): string {
    return [
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" ` +
      `height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
      `<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`,
      ...this.parts,
      '</svg>',
      '',
    ].join('\n');
  }
}

function escapeText(s: string): string {
  return s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');
}

/** Pad a positive range multiplicatively (log plots). */
export function padLog(lo: number, hi: number): [number, number] {
  return [lo / 1.35, hi * 1.35];
}

/** Pad a linear range additively. */
export function padLinear(lo: number, hi: number): [number, number] {
  const span = hi - lo || Math.abs(hi) || 1;
  return [lo - 0.06 * span, hi + 0.06 * span];
}
