#!/usr/bin/env node
/** crossdiff-plot <figure-spec.json> --out <path.svg> */

import { writeFileSync } from 'fs';

import { SchemaError } from './csv';
import { loadFigureSpec, render } from './figures';

export function main(argv: string[]): number {
  const args = argv.slice(2);
  let specPath: string | undefined;
  let outPath: string | undefined;
  for (let i = 0; i < args.length; i++) {
    if (args[i] === '--out') {
      outPath = args[++i];
    } else if (!specPath) {
      specPath = args[i];
    } else {
      console.error(`unexpected argument '${args[i]}'`);
      return 2;
    }
  }
  if (!specPath || !outPath) {
    console.error('usage: crossdiff-plot <figure-spec.json> --out <path.svg>');
    return 2;
  }
  try {
    const spec = loadFigureSpec(specPath);
    writeFileSync(outPath, render(spec), 'utf-8');
    console.log(`wrote ${outPath}`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    console.error(`error: ${err}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv));
}
