"""Run configuration, density-grid files and result export."""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


# --------------------------------------------------------------------------
# configuration schema: section -> {key: default}; REQUIRED marks mandatory keys

REQUIRED = object()

SCHEMA: dict[str, dict] = {
    "problem": {
        "type": REQUIRED,          # double_clamped_beam | pinned_column | compressive_block | shallow_arch | grid
        "nx": 60, "ny": 20, "elem_size": 1.0, "load": 1.0,
        "E": 1.0, "nu": 0.3, "gamma": 1.0,
        "eps": 1e-8, "beta": 120.0, "c0": 0.08, "dc": 0.05,
        "width": 4, "height": 80, "margin": 0,          # pinned_column
        "rise": 4.0,                                    # shallow_arch
        "supports": [], "loads": [],                    # grid
    },
    "filter": {"r_min": 1.5},
    "optimizer": {
        "V_f": REQUIRED, "lam_hat": None, "m": 6, "theta": 0.04, "move": 0.3,
        "max_iter": 800, "inner_max_iter": 100, "inner_obj_tol": 1e-8,
        "inner_dx_tol": 1e-4, "tol_mult": 1e-8, "continuation": True,
        "symmetry": "none", "pm_start": 1.0,
    },
    "analysis": {
        "m": 6, "ell": None, "n_steps": 20, "max_points": 200, "tau": 100.0,
        "r_factor": 0.1, "seed": 0, "threshold": 0.5, "gamma_max": None,
        "branch_points": 60, "pseudo_mass": True,
    },
    "verify": {
        "nx": 30, "ny": 10, "gamma": 0.01, "h": 1e-5, "m": 6, "seed": 0,
        "density_low": 0.2, "density_high": 1.0, "elements": None,
        "tolerance": 1e-3,
    },
    "output": {"directory": "out", "snapshot_every": 0, "pgm": True,
               "workers": 1},
}

# value types of keys without a default
REQUIRED_TYPES = {("problem", "type"): str, ("optimizer", "V_f"): float}

# sections that must be present in the file for each command
COMMAND_SECTIONS = {
    "optimize": ("problem", "optimizer"),
    "analyze": ("problem",),
    "verify-sens": ("problem",),
    "post-buckle": ("problem",),
}


@dataclass
class RunConfig:
    problem: dict = field(default_factory=dict)
    filter: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    source: str = ""


def parse_config(text: str, command: str | None = None, source: str = "<string>") -> RunConfig:
    """Parse TOML text strictly: unknown sections or keys are errors."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    for sec in raw:
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        if not isinstance(raw[sec], dict):
            raise ConfigError(f"{source}: [{sec}] must be a table")
    required = COMMAND_SECTIONS.get(command, ())
    for sec in required:
        if sec not in raw:
            raise ConfigError(f"{source}: missing section [{sec}]")
    out = {}
    for sec, spec in SCHEMA.items():
        given = raw.get(sec, {})
        for key in given:
            if key not in spec:
                raise ConfigError(f"{source}: unknown key '{key}' in [{sec}]")
        vals = {}
        for key, default in spec.items():
            if key in given:
                vals[key] = given[key]
            elif default is REQUIRED:
                if sec in required:
                    raise ConfigError(f"{source}: missing required key '{key}' in [{sec}]")
                vals[key] = None
            else:
                vals[key] = default
        out[sec] = vals
    _check_types(out, source)
    return RunConfig(**out, source=source)


def _check_types(cfg: dict, source: str):
    for sec, spec in SCHEMA.items():
        for key, default in spec.items():
            v = cfg[sec][key]
            if default is REQUIRED:
                default = REQUIRED_TYPES[sec, key]()
            if v is None or default is None:
                continue
            if isinstance(default, bool):
                ok = isinstance(v, bool)
            elif isinstance(default, int):
                ok = isinstance(v, int) and not isinstance(v, bool)
            elif isinstance(default, float):
                ok = isinstance(v, (int, float)) and not isinstance(v, bool)
                if ok:
                    cfg[sec][key] = float(v)
            else:
                ok = isinstance(v, type(default))
            if not ok:
                raise ConfigError(f"{source}: '{key}' in [{sec}] has wrong type "
                                  f"({type(v).__name__})")


def load_config(path, command: str | None = None) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, command, str(p))


# --------------------------------------------------------------------------
# density grids

def write_density_csv(path, rho: np.ndarray, nx: int, ny: int, elem_size: float):
    """Row-major density grid, bottom row first, with a self-describing header."""
    rho = np.asarray(rho, dtype=float)
    if rho.size != nx * ny:
        raise ValueError("density size does not match nx * ny")
    grid = rho.reshape(ny, nx)
    with open(path, "w") as fh:
        fh.write(f"# nx={nx} ny={ny} elem_size={elem_size!r}\n")
        for row in grid:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_density_csv(path) -> tuple[np.ndarray, int, int, float]:
    """Returns ``(rho, nx, ny, elem_size)``; inverse of :func:`write_density_csv`."""
    with open(path) as fh:
        head = fh.readline()
        if not head.startswith("#"):
            raise ConfigError(f"{path}: missing density header")
        meta = dict(tok.split("=", 1) for tok in head[1:].split())
        try:
            nx, ny, h = int(meta["nx"]), int(meta["ny"]), float(meta["elem_size"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{path}: bad density header {head.strip()!r}") from exc
        rows = [line for line in fh if line.strip()]
    vals = [[float(x) for x in line.split(",")] for line in rows]
    if len(vals) != ny or any(len(r) != nx for r in vals):
        raise ConfigError(f"{path}: grid shape does not match header {nx}x{ny}")
    return np.array(vals, dtype=float).ravel(), nx, ny, h


def write_pgm(path, rho: np.ndarray, nx: int, ny: int, scale: int = 4):
    """Binary graymap (P5); black = solid.  Top image row = top mesh row."""
    grid = np.asarray(rho, dtype=float).reshape(ny, nx)[::-1]
    img = np.clip(np.round(255 * (1.0 - grid)), 0, 255).astype(np.uint8)
    img = np.kron(img, np.ones((scale, scale), dtype=np.uint8))
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def write_summary(path, summary: dict):
    def conv(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o).__name__)
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, default=conv)
        fh.write("\n")


def write_modes(path, model, vectors_full: np.ndarray, values):
    """Per-node mode shapes: node, x, y, then (ux, uy) per mode."""
    V = np.asarray(vectors_full).reshape(model.n_nodes, 2, -1)
    head = ["node", "x", "y"]
    for k in range(V.shape[2]):
        head += [f"ux_{k + 1}", f"uy_{k + 1}"]
    with open(path, "w") as fh:
        fh.write("# eigenvalues: " + " ".join(repr(float(v)) for v in values) + "\n")
        fh.write(",".join(head) + "\n")
        for i in range(model.n_nodes):
            row = [str(i), repr(float(model.nodes[i, 0])), repr(float(model.nodes[i, 1]))]
            for k in range(V.shape[2]):
                row += [repr(float(V[i, 0, k])), repr(float(V[i, 1, k]))]
            fh.write(",".join(row) + "\n")
