"""Configuration files, run manifests, CSV series and field snapshots."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import platform
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from . import __version__
from .grid import GridSpec, build_grid
from .plate import PotentialSpec
from .state import SystemState
from .stepper import EnergyLedger, ForcingSpec, InitialSpec, RunConfig


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key, ``line`` the source line."""

    def __init__(self, msg: str, field: str | None = None, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{msg}{where}")
        self.field, self.line = field, line


@dataclass(frozen=True)
class AnalysisSpec:
    """Ensemble and probe sizes for the long-time subcommands."""

    ensemble: int = 10
    r_max: float = 2.0
    restart_T: float = 5.0
    pairs: int = 10
    pair_r_max: float = 1.0
    dim_samples: int = 400
    dim_window: float | None = None
    transient: float | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("ensemble", "pairs", "dim_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("r_max", "pair_r_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.restart_T < 0:
            raise ValueError("restart_T must be nonnegative")


@dataclass(frozen=True)
class Experiment:
    """A parsed configuration file."""

    run: RunConfig = field(default_factory=RunConfig)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)

    def with_seed(self, seed: int) -> "Experiment":
        return Experiment(
            dataclasses.replace(self.run, initial=dataclasses.replace(self.run.initial, seed=seed)),
            dataclasses.replace(self.analysis, seed=seed),
        )


_SECTIONS = {"grid": GridSpec, "potential": PotentialSpec, "forcing": ForcingSpec,
             "initial": InitialSpec, "analysis": AnalysisSpec}
_TOP = ("dt", "T", "theta", "tol", "cadence", "corrections", "eta")
_TUPLES = {("grid", "cells"), ("grid", "extents"), ("potential", "coeffs")}


def _key_lines(text: str) -> dict[str, int]:
    """First source line of every quoted key (good enough for error messages)."""
    out: dict[str, int] = {}
    for n, line in enumerate(text.splitlines(), 1):
        rest = line
        while '"' in rest:
            _, _, rest = rest.partition('"')
            key, sep, rest = rest.partition('"')
            if sep and rest.lstrip().startswith(":"):
                out.setdefault(key, n)
    return out


def _build(cls, section: str, data: Any, lines: dict[str, int]):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object", section, lines.get(section))
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown key {section}.{key}", f"{section}.{key}", lines.get(key))
    kw = {k: (tuple(v) if (section, k) in _TUPLES and v is not None else v) for k, v in data.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        bad = next((k for k in data if k in str(exc)), None)
        name = f"{section}.{bad}" if bad else section
        raise ConfigError(f"invalid {name}: {exc}", name, lines.get(bad or section)) from exc


def parse_config_text(text: str) -> Experiment:
    """Parse JSON text into an :class:`Experiment` with defaults applied.

    Raises
    ------
    ConfigError
        On malformed JSON (with line number), unknown keys or invalid values
        (naming the field).
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error: {exc.msg} at column {exc.colno}", None, exc.lineno) from exc
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object", None, 1)
    lines = _key_lines(text)
    for key in data:
        if key not in _SECTIONS and key not in _TOP:
            raise ConfigError(f"unknown key {key}", key, lines.get(key))
    parts = {name: _build(cls, name, data.get(name, {}), lines) for name, cls in _SECTIONS.items()}
    analysis = parts.pop("analysis")
    top = {k: data[k] for k in _TOP if k in data}
    try:
        run = RunConfig(**parts, **top)
    except (TypeError, ValueError) as exc:
        bad = next((k for k in top if k in str(exc)), None)
        raise ConfigError(f"invalid {bad or 'run settings'}: {exc}", bad, lines.get(bad)) from exc
    return Experiment(run, analysis)


def parse_config(path: str | Path) -> Experiment:
    """Read and validate a JSON configuration file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"configuration file not found: {p}")
    return parse_config_text(p.read_text())


def config_to_dict(exp: Experiment) -> dict:
    """Fully resolved configuration (every default spelled out)."""
    def plain(obj):
        out = dataclasses.asdict(obj)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}

    r = exp.run
    out = {name: plain(getattr(r, name)) for name in ("grid", "potential", "forcing", "initial")}
    out.update({k: getattr(r, k) for k in _TOP})
    out["analysis"] = plain(exp.analysis)
    return out


def serialize_config(exp: Experiment) -> str:
    return json.dumps(config_to_dict(exp), indent=2, sort_keys=True) + "\n"


# -- outputs ------------------------------------------------------------------------

def sha256_of(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class OutputDir:
    """Writes run artifacts and keeps the inventory for the manifest."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def _track(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        if name not in self.files:
            self.files.append(name)
        return p

    def write_text(self, name: str, text: str) -> Path:
        p = self._track(name)
        p.write_text(text)
        return p

    def write_bytes(self, name: str, data: bytes) -> Path:
        p = self._track(name)
        p.write_bytes(data)
        return p

    def write_json(self, name: str, obj: Any) -> Path:
        return self.write_text(name, json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, header, rows) -> Path:
        return self.write_text(name, csv_text(header, rows))

    def write_manifest(self, exp: Experiment, subcommand: str, seed: int, timing: dict) -> Path:
        manifest = {
            "subcommand": subcommand,
            "config": config_to_dict(exp),
            "seed": seed,
            "versions": {"fpi": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "timing": timing,
            "files": [{"path": f, "sha256": sha256_of(self.root / f),
                       "bytes": (self.root / f).stat().st_size} for f in self.files],
        }
        p = self.root / "manifest.json"
        p.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return p


def to_jsonable(obj: Any) -> Any:
    """Convert dataclasses, numpy scalars and arrays to plain JSON values (non-finite as strings)."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in fields(obj)
                if f.repr and not isinstance(getattr(obj, f.name), (SystemState, EnergyLedger))}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def csv_text(header, rows) -> str:
    """CSV with ``repr`` floats so the text is a bit-exact record."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]]) if len(rows) > 1 else np.empty((0, len(header)))
    return header, data


def emit_plot_data(out: OutputDir, kind: str, obj: Any, prefix: str = "") -> list[Path]:
    """Write CSV series for external plotting.

    kind
        ``"ledger"``: energy components against time.  ``"decay"``: ``(t, log
        ||U||_H)`` with the fit parameters in a JSON sidecar (``obj`` is
        ``(ledger, DecayFit)``).  ``"spectrum"``: ``(re, im)`` sorted by real
        part, descending.  ``"scaling"``: ``(log r, log C(r))`` of a dimension
        estimate.
    """
    if kind == "ledger":
        led: EnergyLedger = obj
        return [out.write_text(prefix + "energy.csv", led.to_csv())]
    if kind == "decay":
        led, fit = obj
        t, nrm = led.t, led.column("norm_H")
        keep = nrm > 0
        rows = zip(t[keep], np.log(nrm[keep]))
        return [out.write_csv(prefix + "decay.csv", ("t", "log_norm_H"), rows),
                out.write_json(prefix + "decay_fit.json", fit)]
    if kind == "spectrum":
        ev = np.asarray(obj)
        order = np.lexsort((-ev.imag, -ev.real))
        return [out.write_csv(prefix + "spectrum.csv", ("re", "im"),
                              ((float(z.real), float(z.imag)) for z in ev[order]))]
    if kind == "scaling":
        r, C = obj.radii, obj.correlation
        keep = C > 0
        return [out.write_csv(prefix + "scaling.csv", ("log_r", "log_C"), zip(np.log(r[keep]), np.log(C[keep])))]
    raise ValueError(f"unknown plot data kind {kind!r}")


# -- snapshots ----------------------------------------------------------------------

def write_snapshot(out: OutputDir, name: str, state: SystemState) -> tuple[Path, Path]:
    """Flat little-endian float64 ``[v, u, w]`` plus a JSON header with the layout."""
    g = state.grid
    data = np.concatenate([state.v, state.u, state.w]).astype("<f8")
    header = {
        "dtype": "<f8", "t": float(state.t), "grid": _grid_dict(g.spec),
        "fields": [
            {"name": "v", "offset": 0, "count": g.n_velocity,
             "components": [list(s) for s in g.velocity_shapes]},
            {"name": "u", "offset": g.n_velocity, "count": g.n_plate,
             "components": [list(s) for s in g.plate_shapes]},
            {"name": "w", "offset": g.n_velocity + g.n_plate, "count": g.n_plate,
             "components": [list(s) for s in g.plate_shapes]},
        ],
    }
    return out.write_bytes(name + ".bin", data.tobytes()), out.write_json(name + ".json", header)


def _grid_dict(spec: GridSpec) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(spec).items()}


def read_snapshot(stem: str | Path) -> SystemState:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    gd = header["grid"]
    spec = GridSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in gd.items()})
    g = build_grid(spec)
    data = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype=header["dtype"]).astype(float)
    f = {x["name"]: data[x["offset"]:x["offset"] + x["count"]] for x in header["fields"]}
    return SystemState(g, f["v"], f["u"], f["w"], header["t"])
