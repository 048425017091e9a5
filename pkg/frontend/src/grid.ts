/** Reader for the binary grid snapshot format.
 *
 * Layout: one ASCII header line
 *   CDLGRID <dim> <cells_per_axis> <box_min...> <box_max...> <time>
 * followed by cells^dim little-endian float64 cell values.
 */

import { SchemaError } from './csv';

export interface GridSnapshot {
  dim: number;
  cells: number;
  boxLo: number[];
  boxHi: number[];
  time: number;
  values: Float64Array;
}

export function parseGrid(buffer: Buffer, path: string): GridSnapshot {
  const newline = buffer.indexOf(0x0a);
  if (newline < 0) {
    throw new SchemaError(`${path}: missing header line`);
  }
  const header = buffer.subarray(0, newline).toString('ascii').trim().split(/\s+/);
  if (header[0] !== 'CDLGRID') {
    throw new SchemaError(`${path}: not a CDLGRID snapshot`);
  }
  const dim = Number(header[1]);
  const cells = Number(header[2]);
  if (!Number.isInteger(dim) || !Number.isInteger(cells) ||
      header.length !== 4 + 2 * dim) {
    throw new SchemaError(`${path}: malformed header '${header.join(' ')}'`);
  }
  const nums = header.slice(3).map(Number);
  if (nums.some(v => !Number.isFinite(v))) {
    throw new SchemaError(`${path}: non-numeric header fields`);
  }
  const boxLo = nums.slice(0, dim);
  const boxHi = nums.slice(dim, 2 * dim);
  const time = nums[2 * dim];

  const count = cells ** dim;
  const body = buffer.subarray(newline + 1);
  if (body.length !== 8 * count) {
    throw new SchemaError(
      `${path}: expected ${8 * count} payload bytes, found ${body.length}`);
  }
  const values = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    values[i] = body.readDoubleLE(8 * i);
  }
  return { dim, cells, boxLo, boxHi, time, values };
}

/** Total mass under the cell quadrature. */
export function gridMass(snap: GridSnapshot): number {
  let vol = 1;
  for (let ax = 0; ax < snap.dim; ax++) {
    vol *= (snap.boxHi[ax] - snap.boxLo[ax]) / snap.cells;
  }
  let sum = 0;
  for (const v of snap.values) {
    sum += v;
  }
  return sum * vol;
}
