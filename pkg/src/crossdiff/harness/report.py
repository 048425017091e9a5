"""Report files: CSV series, fits, snapshots, manifest, replay.

Everything destined for ``report.csv`` and ``fits.csv`` is formatted with
``repr`` floats and fixed newlines so reruns with the same seed are
byte-identical regardless of worker count.  Wall-clock timings go to a
separate file that makes no such promise.
"""

from __future__ import annotations

import platform
from pathlib import Path

import numpy as np
import scipy

from ..errors import ConfigError
from ..field import save_field
from .config import ExperimentSpec, parse_config, serialize_config
from .experiments import RunReport

REPORT_HEADER = "series_label,abscissa,value,stderr"
FITS_HEADER = "series_label,slope,intercept,r_squared"
_MANIFEST_DIVIDER = "--- config ---"


def render_report_csv(report: RunReport) -> str:
    lines = [REPORT_HEADER]
    for series in report.series:
        errs = series.stderrs or ("",) * len(series.values)
        for x, v, e in zip(series.abscissae, series.values, errs):
            err = repr(float(e)) if e != "" else ""
            lines.append(f"{series.label},{repr(float(x))},{repr(float(v))},{err}")
    return "\n".join(lines) + "\n"


def render_fits_csv(report: RunReport) -> str:
    lines = [FITS_HEADER]
    for label, fit in report.fits:
        lines.append(f"{label},{repr(fit.slope)},{repr(fit.intercept)},"
                     f"{repr(fit.r_squared)}")
    return "\n".join(lines) + "\n"


def render_checks(report: RunReport) -> str:
    lines = ["check,passed,detail"]
    for c in report.checks:
        lines.append(f"{c.name},{'pass' if c.passed else 'FAIL'},\"{c.detail}\"")
    return "\n".join(lines) + "\n"


def render_manifest(report: RunReport) -> str:
    versions = (f"python {platform.python_version()}, numpy {np.__version__}, "
                f"scipy {scipy.__version__}, crossdiff 0.1.0")
    lines = [
        "# crossdiff run manifest",
        f"seed = {report.spec.seed}",
        f"kind = {report.spec.kind}",
        f"versions = {versions}",
        _MANIFEST_DIVIDER,
        serialize_config(report.spec),
    ]
    return "\n".join(lines)


def write_report(report: RunReport, out_dir) -> dict[str, Path]:
    """Emit report.csv, fits.csv, checks.csv, timings.csv, manifest.txt and
    the snapshots/ directory; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    paths["report"] = out / "report.csv"
    paths["report"].write_text(render_report_csv(report), encoding="utf-8")
    paths["fits"] = out / "fits.csv"
    paths["fits"].write_text(render_fits_csv(report), encoding="utf-8")
    paths["checks"] = out / "checks.csv"
    paths["checks"].write_text(render_checks(report), encoding="utf-8")

    timing_lines = ["stage,seconds"]
    timing_lines += [f"{k},{v:.3f}" for k, v in report.timings.items()]
    paths["timings"] = out / "timings.csv"
    paths["timings"].write_text("\n".join(timing_lines) + "\n", encoding="utf-8")

    paths["manifest"] = out / "manifest.txt"
    paths["manifest"].write_text(render_manifest(report), encoding="utf-8")

    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for snap in report.snapshots:
        save_field(snap.field, snap_dir / f"{snap.name}.grid", snap.time)
    paths["snapshots"] = snap_dir
    return paths


def read_manifest(path) -> tuple[ExperimentSpec, int]:
    """Recover the spec and seed from a manifest for replay."""
    text = Path(path).read_text(encoding="utf-8")
    if _MANIFEST_DIVIDER not in text:
        raise ConfigError("not a crossdiff manifest (missing config divider)")
    head, _, config_text = text.partition(_MANIFEST_DIVIDER)
    seed = None
    for line in head.splitlines():
        if line.startswith("seed = "):
            seed = int(line.split("=", 1)[1])
    if seed is None:
        raise ConfigError("manifest missing the seed line")
    spec = parse_config(config_text.lstrip("\n"))
    if spec.seed != seed:
        raise ConfigError("manifest seed disagrees with the config echo")
    return spec, seed
