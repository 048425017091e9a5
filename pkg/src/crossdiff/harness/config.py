"""Experiment configuration: a sectioned key = value document.

Grammar (see README for the full reference):

* comment lines start with ``#``; blank lines are ignored
* ``[section]`` opens a section; recognized sections are ``experiment``,
  ``model``, ``grid``, ``solver`` and ``species.K`` for K = 1..n_species
* entries are ``key = value``; values are numbers, booleans, words, or
  comma-separated lists of numbers
* unknown sections or keys are rejected, with line numbers in every error
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..field import GridSpec
from ..kernel import Mollifier
from ..model import Box, InitialDensity, ModelParams

EXPERIMENT_KINDS = (
    "poc_vs_N", "nonlocal_to_local", "same_mobility_check",
    "energy_dissipation", "eps_of_N_combined", "heat_oracle",
)

DEFAULTS = {
    ("experiment", "seed"): 1,
    ("experiment", "replicas"): 20,
    ("model", "n_species"): 2,
    ("model", "dim"): 1,
    ("model", "m_exponent"): 2.0,
    ("model", "sigma"): 0.05,
    ("model", "eps"): 0.4,
    ("model", "horizon"): 0.5,
    ("grid", "cells_per_axis"): 256,
    ("solver", "cfl_safety"): 0.5,
}

DEFAULT_BOX_1D = (-2.0, 3.0)
DEFAULT_N_GRID = (64, 128, 256, 512, 1024, 2048, 4096)
DEFAULT_EPS_GRID = (0.4, 0.2, 0.1, 0.05)
DEFAULT_COMBINED_N_GRID = (128, 512, 2048)

_SECTION_KEYS = {
    "experiment": {"kind", "seed", "replicas", "n_grid", "eps_grid"},
    "model": {"n_species", "dim", "m_exponent", "a", "b", "sigma", "eps",
              "horizon"},
    "grid": {"cells_per_axis", "box"},
    "solver": {"dt", "cfl_safety"},
}
_SPECIES_KEYS = {"kind", "means", "sds", "weights", "lo", "hi", "ramp_width"}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    params: ModelParams
    densities: tuple[InitialDensity, ...]
    grid: GridSpec
    dt: float | None
    cfl_safety: float
    n_grid: tuple[int, ...]
    eps_grid: tuple[float, ...]
    replicas: int
    seed: int


def _parse_scalar(text: str, line: int):
    token = text.strip()
    if token.lower() in ("true", "false"):
        return token.lower() == "true"
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    if not token:
        raise ConfigError("empty value", line)
    return token


def _tokenize(text: str) -> dict[tuple[str, str], tuple[object, int]]:
    entries: dict[tuple[str, str], tuple[object, int]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigError("empty section name", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if section is None:
            raise ConfigError("entry outside any [section]", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        if (section, key) in entries:
            raise ConfigError(f"duplicate key '{key}' in [{section}]", lineno)
        if "," in value:
            parsed = tuple(_parse_scalar(tok, lineno)
                           for tok in value.split(","))
        else:
            parsed = _parse_scalar(value, lineno)
        entries[(section, key)] = (parsed, lineno)
    return entries


def _reject_unknown(entries) -> None:
    for (section, key), (_val, line) in entries.items():
        if section.startswith("species."):
            tail = section.split(".", 1)[1]
            if not tail.isdigit() or int(tail) < 1:
                raise ConfigError(f"bad species section [{section}]", line)
            if key not in _SPECIES_KEYS:
                raise ConfigError(
                    f"unknown key '{key}' in [{section}]", line)
            continue
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown section [{section}]", line)
        if key not in _SECTION_KEYS[section]:
            raise ConfigError(f"unknown key '{key}' in [{section}]", line)


class _Reader:
    def __init__(self, entries):
        self.entries = entries
        self.line_of = {k: v[1] for k, v in entries.items()}

    def get(self, section: str, key: str, default=None):
        if (section, key) in self.entries:
            return self.entries[(section, key)][0]
        if default is not None:
            return default
        return DEFAULTS.get((section, key))

    def line(self, section: str, key: str) -> int | None:
        return self.line_of.get((section, key))

    def number(self, section: str, key: str, default=None) -> float | None:
        val = self.get(section, key, default)
        if val is None:
            return None
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"'{key}' must be a number",
                              self.line(section, key))
        return float(val)

    def integer(self, section: str, key: str, default=None) -> int | None:
        val = self.get(section, key, default)
        if val is None:
            return None
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"'{key}' must be an integer",
                              self.line(section, key))
        return val

    def numbers(self, section: str, key: str, default=None):
        val = self.get(section, key, default)
        if val is None:
            return None
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            return (float(val),)
        if isinstance(val, tuple) and all(
                isinstance(v, (int, float)) and not isinstance(v, bool)
                for v in val):
            return tuple(float(v) for v in val)
        raise ConfigError(f"'{key}' must be a number list",
                          self.line(section, key))


def _default_density(k: int, n: int, box: Box) -> InitialDensity:
    center = 0.5 * (np.asarray(box.lo) + np.asarray(box.hi))
    mean = center.copy()
    mean[0] += (k - 0.5 * (n - 1)) * 0.5
    return InitialDensity("gaussian_mixture", box,
                          means=(tuple(float(v) for v in mean),),
                          sds=(0.3,), weights=(1.0,))


def _species_density(reader: _Reader, k: int, box: Box, dim: int) -> InitialDensity:
    sec = f"species.{k + 1}"
    present = any(s == sec for (s, _key) in reader.entries)
    if not present:
        return _default_density(k, reader.integer("model", "n_species"), box)
    kind = reader.get(sec, "kind")
    if kind is None:
        raise ConfigError(f"[{sec}] needs a 'kind'")
    if kind == "gaussian_mixture":
        means_flat = reader.numbers(sec, "means")
        sds = reader.numbers(sec, "sds")
        weights = reader.numbers(sec, "weights")
        if means_flat is None or sds is None:
            raise ConfigError(f"[{sec}] gaussian_mixture needs means and sds")
        if weights is None:
            weights = tuple(1.0 / len(sds) for _ in sds)
        if len(means_flat) != dim * len(sds):
            raise ConfigError(
                f"[{sec}] means must list {dim} coordinates per component",
                reader.line(sec, "means"))
        means = tuple(tuple(means_flat[i * dim:(i + 1) * dim])
                      for i in range(len(sds)))
        return InitialDensity("gaussian_mixture", box, means=means, sds=sds,
                              weights=weights)
    if kind in ("uniform_box", "smoothed_box"):
        lo = reader.numbers(sec, "lo")
        hi = reader.numbers(sec, "hi")
        if lo is None or hi is None or len(lo) != dim or len(hi) != dim:
            raise ConfigError(f"[{sec}] {kind} needs lo/hi with {dim} entries")
        ramp = reader.number(sec, "ramp_width", 0.0) or 0.0
        return InitialDensity(kind, box, support_lo=lo, support_hi=hi,
                              ramp_width=ramp)
    raise ConfigError(f"unknown density kind '{kind}'", reader.line(sec, "kind"))


def parse_config(text: str) -> ExperimentSpec:
    """Parse and fully validate a configuration document."""
    entries = _tokenize(text)
    _reject_unknown(entries)
    reader = _Reader(entries)

    kind = reader.get("experiment", "kind")
    if kind is None:
        raise ConfigError("[experiment] must declare a kind")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind '{kind}'",
                          reader.line("experiment", "kind"))

    n_species = reader.integer("model", "n_species")
    dim = reader.integer("model", "dim")
    m_exponent = reader.number("model", "m_exponent")
    a = reader.numbers("model", "a", tuple(1.0 for _ in range(n_species)))
    b = reader.numbers("model", "b", tuple(1.0 for _ in range(n_species)))
    sigma = reader.number("model", "sigma")
    eps = reader.number("model", "eps")
    horizon = reader.number("model", "horizon")
    try:
        params = ModelParams(n_species, dim, m_exponent, a, b, sigma, eps,
                             horizon)
    except ConfigError as exc:
        raise ConfigError(f"invalid model parameters: {exc}") from exc

    box_vals = reader.numbers("grid", "box", DEFAULT_BOX_1D if dim == 1
                              else (-2.0, 3.0, -2.0, 3.0))
    if len(box_vals) != 2 * dim:
        raise ConfigError(f"'box' needs {2 * dim} numbers (lo/hi per axis)",
                          reader.line("grid", "box"))
    lo = tuple(box_vals[2 * ax] for ax in range(dim))
    hi = tuple(box_vals[2 * ax + 1] for ax in range(dim))
    try:
        box = Box(lo, hi)
        grid = GridSpec(box, reader.integer("grid", "cells_per_axis"))
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc

    densities = tuple(_species_density(reader, k, box, dim)
                      for k in range(n_species))

    dt = reader.number("solver", "dt", None)
    cfl_safety = reader.number("solver", "cfl_safety")
    if not 0 < cfl_safety <= 1:
        raise ConfigError("cfl_safety must lie in (0, 1]",
                          reader.line("solver", "cfl_safety"))

    n_grid_default = (DEFAULT_COMBINED_N_GRID if kind == "eps_of_N_combined"
                      else DEFAULT_N_GRID)
    n_grid = tuple(int(v) for v in
                   reader.numbers("experiment", "n_grid", n_grid_default))
    if any(v < 1 for v in n_grid) or list(n_grid) != sorted(set(n_grid)):
        raise ConfigError("n_grid must be strictly increasing positive ints",
                          reader.line("experiment", "n_grid"))
    eps_grid = reader.numbers("experiment", "eps_grid", DEFAULT_EPS_GRID)
    if any(v <= 0 for v in eps_grid) or \
            list(eps_grid) != sorted(set(eps_grid), reverse=True):
        raise ConfigError("eps_grid must be strictly decreasing positives",
                          reader.line("experiment", "eps_grid"))

    replicas = reader.integer("experiment", "replicas")
    if replicas < 1:
        raise ConfigError("replicas must be >= 1",
                          reader.line("experiment", "replicas"))
    seed = reader.integer("experiment", "seed")
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must fit in 64 bits",
                          reader.line("experiment", "seed"))

    # resolution checks the runs will rely on
    if kind == "nonlocal_to_local":
        widths = [Mollifier(dim, e) for e in eps_grid]
    elif kind == "eps_of_N_combined":
        widths = []
    else:
        widths = [Mollifier(dim, eps)]
    for mol in widths:
        if not grid.resolves(mol):
            raise ConfigError(
                f"grid does not resolve kernel width {mol.eps}: needs at "
                f"least 3 cells per radius")

    return ExperimentSpec(kind=kind, params=params, densities=densities,
                          grid=grid, dt=dt, cfl_safety=cfl_safety,
                          n_grid=n_grid, eps_grid=eps_grid,
                          replicas=replicas, seed=seed)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _fmt_list(values) -> str:
    return ", ".join(_fmt(v) for v in values)


def serialize_config(spec: ExperimentSpec) -> str:
    """Canonical config text; parsing it yields an equal spec."""
    p = spec.params
    lines = [
        "[experiment]",
        f"kind = {spec.kind}",
        f"seed = {spec.seed}",
        f"replicas = {spec.replicas}",
        f"n_grid = {_fmt_list(spec.n_grid)}",
        f"eps_grid = {_fmt_list(spec.eps_grid)}",
        "",
        "[model]",
        f"n_species = {p.n_species}",
        f"dim = {p.dim}",
        f"m_exponent = {_fmt(p.m_exponent)}",
        f"a = {_fmt_list(p.a)}",
        f"b = {_fmt_list(p.b)}",
        f"sigma = {_fmt(p.sigma)}",
        f"eps = {_fmt(p.eps)}",
        f"horizon = {_fmt(p.horizon)}",
        "",
        "[grid]",
        f"cells_per_axis = {spec.grid.cells_per_axis}",
        "box = " + _fmt_list([v for ax in range(p.dim)
                              for v in (spec.grid.box.lo[ax],
                                        spec.grid.box.hi[ax])]),
        "",
        "[solver]",
        f"cfl_safety = {_fmt(spec.cfl_safety)}",
    ]
    if spec.dt is not None:
        lines.append(f"dt = {_fmt(spec.dt)}")
    for k, rho in enumerate(spec.densities):
        lines.append("")
        lines.append(f"[species.{k + 1}]")
        lines.append(f"kind = {rho.kind}")
        if rho.kind == "gaussian_mixture":
            flat = [c for mu in rho.means for c in mu]
            lines.append(f"means = {_fmt_list(flat)}")
            lines.append(f"sds = {_fmt_list(rho.sds)}")
            lines.append(f"weights = {_fmt_list(rho.weights)}")
        else:
            lines.append(f"lo = {_fmt_list(rho.support_lo)}")
            lines.append(f"hi = {_fmt_list(rho.support_hi)}")
            if rho.kind == "smoothed_box":
                lines.append(f"ramp_width = {_fmt(rho.ramp_width)}")
    return "\n".join(lines) + "\n"
