"""Scenario configuration: TOML parsing, fail-closed validation, and
construction of the runtime objects a task needs.

Unknown keys are errors (silent typos corrupt physics runs), and every
diagnostic carries the config path of the offending entry.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .grid import EventWavefunction, SpacetimeGrid, gaussian_event, load_event_csv, make_grid, plane_wave, sharp_time_event
from .observables import HamiltonianSpec, Potential
from .evolution import CRANK_NICOLSON, SPLIT_STEP, FULL, RETARDED, ADVANCED
from .measurement import (CompleteMeasurement, ObservationWindow,
                          identity_projector, momentum_bin_projectors,
                          position_bin_projectors)


class ConfigError(ValueError):
    """Config file cannot be parsed."""


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


TASK_KINDS = ("orbit", "measure", "history", "golden-rule", "scatter", "check")
POTENTIAL_KINDS = ("zero", "harmonic", "gaussian-barrier", "driven-harmonic")
INITIAL_KINDS = ("gaussian", "sharp-time", "plane-wave", "file")
WINDOW_KINDS = ("box", "time-slab", "sharp")
PROJECTOR_KINDS = ("position-bins", "momentum-bins", "identity")
INTEGRATORS = (CRANK_NICOLSON, SPLIT_STEP)
VARIANTS = (FULL, RETARDED, ADVANCED)

_NUM = (int, float)


def load_config(path) -> dict:
    """Parse the TOML scenario file; raises ConfigError on syntax errors."""
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc


# ---------------------------------------------------------------------------
# validation helpers


class _Checker:
    def __init__(self):
        self.diags: list[Diagnostic] = []

    def error(self, path: str, message: str):
        self.diags.append(Diagnostic(path, message))

    def table(self, node: Any, path: str) -> Optional[dict]:
        if not isinstance(node, dict):
            self.error(path, "expected a table")
            return None
        return node

    def known_keys(self, node: dict, path: str, allowed: set[str]):
        for key in node:
            if key not in allowed:
                self.error(f"{path}.{key}" if path else key, "unknown key")

    def require(self, node: dict, path: str, key: str, types, what: str):
        if key not in node:
            self.error(f"{path}.{key}", f"missing required {what}")
            return None
        val = node[key]
        if types is not None and not isinstance(val, types) \
                or isinstance(val, bool) and types in (_NUM, int):
            self.error(f"{path}.{key}", f"expected {what}")
            return None
        return val

    def optional(self, node: dict, path: str, key: str, types, what: str, default):
        if key not in node:
            return default
        val = node[key]
        if types is not None and not isinstance(val, types):
            self.error(f"{path}.{key}", f"expected {what}")
            return default
        return val


def _validate_grid(ck: _Checker, node, path="grid"):
    tbl = ck.table(node, path)
    if tbl is None:
        return
    ck.known_keys(tbl, path, {"t_min", "t_max", "n_t", "x_min", "x_max", "n_x", "hbar"})
    t_min = ck.require(tbl, path, "t_min", _NUM, "number")
    t_max = ck.require(tbl, path, "t_max", _NUM, "number")
    n_t = ck.require(tbl, path, "n_t", int, "integer")
    x_min = ck.require(tbl, path, "x_min", _NUM, "number")
    x_max = ck.require(tbl, path, "x_max", _NUM, "number")
    n_x = ck.require(tbl, path, "n_x", int, "integer")
    hbar = ck.optional(tbl, path, "hbar", _NUM, "number", 1.0)
    if None not in (t_min, t_max) and t_max <= t_min:
        ck.error(f"{path}.t_max", "t_max must exceed t_min")
    if None not in (x_min, x_max) and x_max <= x_min:
        ck.error(f"{path}.x_max", "x_max must exceed x_min")
    for key, n in (("n_t", n_t), ("n_x", n_x)):
        if n is not None and n < 2:
            ck.error(f"{path}.{key}", "must be >= 2")
    if hbar is not None and hbar <= 0:
        ck.error(f"{path}.hbar", "must be positive")


def _validate_potential(ck: _Checker, node, path):
    tbl = ck.table(node, path)
    if tbl is None:
        return
    kind = ck.require(tbl, path, "kind", str, "string")
    if kind is None:
        return
    if kind not in POTENTIAL_KINDS:
        ck.error(f"{path}.kind", f"unknown potential kind {kind!r}; "
                                 f"one of {POTENTIAL_KINDS}")
        return
    per_kind = {
        "zero": set(),
        "harmonic": {"k", "x0"},
        "gaussian-barrier": {"amplitude", "width", "center"},
        "driven-harmonic": {"k", "drive_amplitude", "drive_frequency", "x0"},
    }
    ck.known_keys(tbl, path, {"kind"} | per_kind[kind])
    required = {"harmonic": ("k",),
                "gaussian-barrier": ("amplitude", "width"),
                "driven-harmonic": ("k", "drive_amplitude", "drive_frequency")}
    for key in required.get(kind, ()):
        ck.require(tbl, path, key, _NUM, "number")


def _validate_hamiltonian(ck: _Checker, node, path="hamiltonian"):
    tbl = ck.table(node, path)
    if tbl is None:
        return
    ck.known_keys(tbl, path, {"mass", "potential"})
    mass = ck.optional(tbl, path, "mass", _NUM, "number", 1.0)
    if mass is not None and mass <= 0:
        ck.error(f"{path}.mass", "must be positive")
    if "potential" in tbl:
        _validate_potential(ck, tbl["potential"], f"{path}.potential")


def _validate_initial(ck: _Checker, node, grid_tbl, path="initial"):
    tbl = ck.table(node, path)
    if tbl is None:
        return
    kind = ck.require(tbl, path, "kind", str, "string")
    if kind is None:
        return
    if kind not in INITIAL_KINDS:
        ck.error(f"{path}.kind", f"unknown initial-event kind {kind!r}; "
                                 f"one of {INITIAL_KINDS}")
        return
    per_kind = {
        "gaussian": {"t0", "sigma_t", "x0", "sigma_x", "E0", "p0", "mass_tol"},
        "sharp-time": {"t0", "x0", "sigma_x", "p0"},
        "plane-wave": {"E", "p"},
        "file": {"path"},
    }
    ck.known_keys(tbl, path, {"kind"} | per_kind[kind])
    required = {"gaussian": ("t0", "sigma_t", "x0", "sigma_x"),
                "sharp-time": ("t0", "x0", "sigma_x"),
                "plane-wave": ("E", "p"),
                "file": ()}
    for key in required[kind]:
        ck.require(tbl, path, key, _NUM, "number")
    if kind == "file":
        ck.require(tbl, path, "path", str, "string")
    for key in ("sigma_t", "sigma_x"):
        if isinstance(tbl.get(key), _NUM) and tbl[key] <= 0:
            ck.error(f"{path}.{key}", "must be positive")
    # wide gaussians that leak outside the grid are caught here, not at run time
    if kind == "gaussian" and isinstance(grid_tbl, dict):
        try:
            grid = make_grid(grid_tbl["t_min"], grid_tbl["t_max"], grid_tbl["n_t"],
                             grid_tbl["x_min"], grid_tbl["x_max"], grid_tbl["n_x"],
                             grid_tbl.get("hbar", 1.0))
            gaussian_event(grid, tbl["t0"], tbl["sigma_t"], tbl["x0"],
                           tbl["sigma_x"], tbl.get("E0", 0.0), tbl.get("p0", 0.0),
                           tbl.get("mass_tol", 1e-6))
        except KeyError:
            pass
        except Exception as exc:
            ck.error(path, str(exc))


def _validate_window(ck: _Checker, node, path):
    tbl = ck.table(node, path)
    if tbl is None:
        return
    kind = ck.require(tbl, path, "kind", str, "string")
    if kind is None:
        return
    if kind not in WINDOW_KINDS:
        ck.error(f"{path}.kind", f"unknown window kind {kind!r}; one of {WINDOW_KINDS}")
        return
    per_kind = {"box": {"t1", "t2", "x1", "x2"},
                "time-slab": {"t1", "t2"},
                "sharp": {"t"}}
    ck.known_keys(tbl, path, {"kind"} | per_kind[kind])
    for key in per_kind[kind]:
        ck.require(tbl, path, key, _NUM, "number")


def _validate_projectors(ck: _Checker, node, path):
    tbl = ck.table(node, path)
    if tbl is None:
        return
    kind = ck.require(tbl, path, "kind", str, "string")
    if kind is None:
        return
    if kind not in PROJECTOR_KINDS:
        ck.error(f"{path}.kind",
                 f"unknown projector kind {kind!r}; one of {PROJECTOR_KINDS}")
        return
    if kind == "identity":
        ck.known_keys(tbl, path, {"kind"})
        return
    ck.known_keys(tbl, path, {"kind", "edges"})
    edges = ck.require(tbl, path, "edges", list, "list of numbers")
    if edges is not None:
        if len(edges) < 2 or not all(isinstance(e, _NUM) for e in edges):
            ck.error(f"{path}.edges", "need at least two numeric edges")
        elif any(b <= a for a, b in zip(edges, edges[1:])):
            ck.error(f"{path}.edges", "edges must be strictly increasing")


def _window_time_range(node) -> Optional[tuple[float, float]]:
    if not isinstance(node, dict):
        return None
    kind = node.get("kind")
    if kind == "sharp" and isinstance(node.get("t"), _NUM):
        return (node["t"], node["t"])
    if kind in ("box", "time-slab") \
            and isinstance(node.get("t1"), _NUM) and isinstance(node.get("t2"), _NUM):
        return (node["t1"], node["t2"])
    return None


def validate_config(cfg: dict) -> list[Diagnostic]:
    """Full fail-closed validation; an empty list means the config is runnable."""
    ck = _Checker()
    if not isinstance(cfg, dict):
        ck.error("", "top level must be a table")
        return ck.diags
    ck.known_keys(cfg, "", {"grid", "hamiltonian", "initial", "task", "run", "output"})
    task = ck.table(cfg.get("task", None), "task") if "task" in cfg \
        else ck.error("task", "missing required table") or None
    kind = None
    if task is not None:
        kind = ck.require(task, "task", "kind", str, "string")
        if kind is not None and kind not in TASK_KINDS:
            ck.error("task.kind", f"unknown task kind {kind!r}; one of {TASK_KINDS}")
            kind = None

    needs_grid = kind in ("orbit", "measure", "history")
    if needs_grid:
        for section in ("grid", "initial"):
            if section not in cfg:
                ck.error(section, f"missing required table for task {kind!r}")
    if "grid" in cfg:
        _validate_grid(ck, cfg["grid"])
    if "hamiltonian" in cfg:
        _validate_hamiltonian(ck, cfg["hamiltonian"])
    if "initial" in cfg:
        _validate_initial(ck, cfg["initial"], cfg.get("grid"))

    if task is not None and kind is not None:
        allowed = {"kind", kind} if kind != "check" else {"kind", "check"}
        ck.known_keys(task, "task", allowed)
        sub = task.get(kind)
        path = f"task.{kind}"
        if kind == "orbit":
            tbl = ck.table(sub, path) if sub is not None else {}
            if tbl is not None:
                ck.known_keys(tbl, path, {"variant", "integrator"})
                _check_choice(ck, tbl, path, "variant", VARIANTS)
                _check_choice(ck, tbl, path, "integrator", INTEGRATORS)
        elif kind == "measure":
            tbl = ck.table(sub, path) if sub is not None else None
            if tbl is None:
                ck.error(path, "missing required table")
            else:
                ck.known_keys(tbl, path, {"variant", "integrator", "window",
                                          "projectors", "operators"})
                _check_choice(ck, tbl, path, "variant", VARIANTS)
                _check_choice(ck, tbl, path, "integrator", INTEGRATORS)
                if "window" in tbl:
                    _validate_window(ck, tbl["window"], f"{path}.window")
                else:
                    ck.error(f"{path}.window", "missing required table")
                if "projectors" in tbl:
                    _validate_projectors(ck, tbl["projectors"], f"{path}.projectors")
                ops = ck.optional(tbl, path, "operators", list, "list of strings",
                                  ["identity"])
                known_ops = {"identity", "time", "position", "energy", "momentum",
                             "hamiltonian"}
                for i, op in enumerate(ops or []):
                    if op not in known_ops:
                        ck.error(f"{path}.operators[{i}]",
                                 f"unknown operator {op!r}; one of {sorted(known_ops)}")
        elif kind == "history":
            tbl = ck.table(sub, path) if sub is not None else None
            if tbl is None:
                ck.error(path, "missing required table")
            else:
                ck.known_keys(tbl, path, {"variant", "integrator", "measurements"})
                _check_choice(ck, tbl, path, "variant", VARIANTS)
                _check_choice(ck, tbl, path, "integrator", INTEGRATORS)
                meas = ck.require(tbl, path, "measurements", list, "array of tables")
                spans = []
                for i, m in enumerate(meas or []):
                    mpath = f"{path}.measurements[{i}]"
                    mt = ck.table(m, mpath)
                    if mt is None:
                        continue
                    ck.known_keys(mt, mpath, {"window", "projectors"})
                    if "window" in mt:
                        _validate_window(ck, mt["window"], f"{mpath}.window")
                        spans.append((_window_time_range(mt["window"]), mpath))
                    else:
                        ck.error(f"{mpath}.window", "missing required table")
                    if "projectors" in mt:
                        _validate_projectors(ck, mt["projectors"],
                                             f"{mpath}.projectors")
                    else:
                        ck.error(f"{mpath}.projectors", "missing required table")
                for (a, apath), (b, bpath) in zip(spans, spans[1:]):
                    if a and b and b[0] <= a[1]:
                        ck.error(f"{bpath}.window",
                                 "measurement windows must occupy disjoint, "
                                 "increasing time intervals")
        elif kind == "golden-rule":
            tbl = ck.table(sub, path) if sub is not None else None
            if tbl is None:
                ck.error(path, "missing required table")
            else:
                ck.known_keys(tbl, path, {"level", "coupling", "omega_min",
                                          "omega_max", "n_omega", "density",
                                          "hbar", "fit_t_min_frac", "fit_t_max_frac"})
                for key in ("level", "coupling", "omega_min", "omega_max"):
                    ck.require(tbl, path, key, _NUM, "number")
                n_omega = ck.optional(tbl, path, "n_omega", int, "integer", 2000)
                if n_omega is not None and n_omega < 2:
                    ck.error(f"{path}.n_omega", "must be >= 2")
                if isinstance(tbl.get("omega_min"), _NUM) \
                        and isinstance(tbl.get("omega_max"), _NUM) \
                        and tbl["omega_max"] <= tbl["omega_min"]:
                    ck.error(f"{path}.omega_max", "must exceed omega_min")
        elif kind == "scatter":
            tbl = ck.table(sub, path) if sub is not None else None
            if tbl is None:
                ck.error(path, "missing required table")
            else:
                ck.known_keys(tbl, path, {"mass", "x_min", "x_max", "n_x",
                                          "horizon", "hbar", "n_t", "integrator",
                                          "potential", "pairs"})
                for key in ("x_min", "x_max", "n_x", "horizon"):
                    ck.require(tbl, path, key,
                               int if key == "n_x" else _NUM,
                               "integer" if key == "n_x" else "number")
                _check_choice(ck, tbl, path, "integrator", INTEGRATORS)
                if "potential" in tbl:
                    _validate_potential(ck, tbl["potential"], f"{path}.potential")
                else:
                    ck.error(f"{path}.potential", "missing required table")
                pairs = ck.require(tbl, path, "pairs", list, "array of [p, p'] pairs")
                for i, pair in enumerate(pairs or []):
                    if not (isinstance(pair, list) and len(pair) == 2
                            and all(isinstance(v, _NUM) for v in pair)):
                        ck.error(f"{path}.pairs[{i}]", "expected [p, p_prime]")
        elif kind == "check":
            tbl = ck.table(sub, path) if sub is not None else {}
            if tbl is not None:
                ck.known_keys(tbl, path, {"suite"})

    if "run" in cfg:
        tbl = ck.table(cfg["run"], "run")
        if tbl is not None:
            ck.known_keys(tbl, "run", {"seed", "threads"})
            seed = ck.optional(tbl, "run", "seed", int, "integer", 0)
            threads = ck.optional(tbl, "run", "threads", int, "integer", 1)
            if threads is not None and threads < 1:
                ck.error("run.threads", "must be >= 1")
            del seed
    if "output" in cfg:
        tbl = ck.table(cfg["output"], "output")
        if tbl is not None:
            ck.known_keys(tbl, "output", {"directory"})
    return ck.diags


def _check_choice(ck: _Checker, tbl: dict, path: str, key: str, choices):
    if key in tbl and tbl[key] not in choices:
        ck.error(f"{path}.{key}", f"expected one of {choices}")


# ---------------------------------------------------------------------------
# builders (assume a validated config)


def build_grid(cfg: dict) -> SpacetimeGrid:
    g = cfg["grid"]
    return make_grid(g["t_min"], g["t_max"], g["n_t"],
                     g["x_min"], g["x_max"], g["n_x"], g.get("hbar", 1.0))


def build_potential(node: Optional[dict]) -> Potential:
    if node is None:
        return Potential.zero()
    kind = node["kind"]
    if kind == "zero":
        return Potential.zero()
    if kind == "harmonic":
        return Potential.harmonic(node["k"], node.get("x0", 0.0))
    if kind == "gaussian-barrier":
        return Potential.gaussian_barrier(node["amplitude"], node["width"],
                                          node.get("center", 0.0))
    if kind == "driven-harmonic":
        return Potential.driven_harmonic(node["k"], node["drive_amplitude"],
                                         node["drive_frequency"],
                                         node.get("x0", 0.0))
    raise ConfigError(f"unknown potential kind {kind!r}")


def build_hamiltonian(cfg: dict) -> HamiltonianSpec:
    h = cfg.get("hamiltonian", {})
    return HamiltonianSpec(h.get("mass", 1.0), build_potential(h.get("potential")))


def build_initial(cfg: dict, grid: SpacetimeGrid) -> EventWavefunction:
    node = cfg["initial"]
    kind = node["kind"]
    if kind == "gaussian":
        return gaussian_event(grid, node["t0"], node["sigma_t"], node["x0"],
                              node["sigma_x"], node.get("E0", 0.0),
                              node.get("p0", 0.0), node.get("mass_tol", 1e-6))
    if kind == "sharp-time":
        x = grid.xs
        sigma, x0 = node["sigma_x"], node["x0"]
        profile = np.exp(-((x - x0) ** 2) / (4 * sigma ** 2)
                         + 1j * node.get("p0", 0.0) * x / grid.hbar)
        return sharp_time_event(grid, node["t0"], profile)
    if kind == "plane-wave":
        return plane_wave(grid, node["E"], node["p"])
    if kind == "file":
        return load_event_csv(node["path"])
    raise ConfigError(f"unknown initial-event kind {kind!r}")


def build_window(node: dict, grid: SpacetimeGrid) -> ObservationWindow:
    kind = node["kind"]
    if kind == "box":
        return ObservationWindow.box(grid, node["t1"], node["t2"],
                                     node["x1"], node["x2"])
    if kind == "time-slab":
        return ObservationWindow.time_slab(grid, node["t1"], node["t2"])
    if kind == "sharp":
        return ObservationWindow.sharp_slice(grid, node["t"])
    raise ConfigError(f"unknown window kind {kind!r}")


def build_projectors(node: Optional[dict], grid: SpacetimeGrid):
    if node is None or node["kind"] == "identity":
        return [identity_projector()]
    if node["kind"] == "position-bins":
        return position_bin_projectors(grid, node["edges"])
    if node["kind"] == "momentum-bins":
        return momentum_bin_projectors(grid, node["edges"])
    raise ConfigError(f"unknown projector kind {node['kind']!r}")


def build_measurement(node: dict, grid: SpacetimeGrid) -> CompleteMeasurement:
    window = build_window(node["window"], grid)
    projs = build_projectors(node.get("projectors"), grid)
    return CompleteMeasurement.of(projs, window)
