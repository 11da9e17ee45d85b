"""Command-line entry point: parse an experiment configuration, dispatch to
the solvers/harness, and emit CSV artifacts.

Configurations are flat ``key = value`` text files with dotted section keys
(see docs/formats.md for the full key reference and CSV schemas).  Built-in
presets cover the stock experiments; ``--config`` entries override preset
values.  Every artifact embeds a fingerprint of the effective configuration,
and re-running the same configuration with the same seed reproduces CSV
payloads byte for byte (timing tables excepted; wall time is a property of
the machine, not the run).

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (amplitude_threshold_search, benchmark, bias_study,
                       mc_scaling_test, refractory_divergence,
                       validate_diffusion_approximation)
from .core import (Constant, GaussianInit, GaussianPulse, GridAlignmentError,
                   NetworkParams, PulseTrain, RandomSource, aligned_mesh_size,
                   make_grid)
from .macro import PositivityError, StabilityError
from .micro import MfeOverflowError, UpdateRule
from .multiscale import (HybridConfig, SolverMode, SwitchThrashError,
                         run_hybrid, run_pure)
from .switching import EmptyDensityError, PiecewiseUniformDensity

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_preset", "run",
           "verify_artifacts", "main"]


class ConfigError(ValueError):
    """Bad configuration: unknown/missing keys, type errors, misaligned grid."""


_NUMERICAL_ERRORS = (PositivityError, StabilityError, MfeOverflowError,
                     SwitchThrashError, EmptyDensityError,
                     np.linalg.LinAlgError, FloatingPointError)

KINDS = ("run-micro", "run-macro", "run-hybrid", "tests-1-4", "bias-study",
         "threshold-sweep", "refractory-study", "mc-scaling", "diffusion-check",
         "benchmark")

# key -> (type tag, default); required keys have no default (marker object)
_REQUIRED = object()
KEY_SCHEMA = {
    "run.kind": ("str", _REQUIRED),
    "run.seed": ("int", 12345),
    "run.t_max": ("float", _REQUIRED),
    "run.dt": ("float", _REQUIRED),
    "run.k_rec": ("int", 10),
    "network.size": ("int", _REQUIRED),
    "grid.dv": ("float", None),
    "physics.b": ("float", 0.0),
    "physics.kick": ("float", None),
    "physics.v_fire": ("float", 2.0),
    "physics.v_reset": ("float", 1.0),
    "physics.v_leak": ("float", 0.0),
    "physics.v_min": ("float", -4.0),
    "physics.diffusion": ("float", None),
    "physics.noise_std": ("float", None),
    "init.mean": ("float", -1.0),
    "init.variance": ("float", 0.5),
    "current.kind": ("str", "constant"),
    "current.value": ("float", 0.0),
    "current.j_max": ("float", 0.0),
    "current.beta": ("float", 100.0),
    "current.t_p": ("float", 0.5),
    "current.n_pulses": ("int", 6),
    "current.spacing": ("float", 0.5),
    "current.offset": ("float", 0.25),
    "micro.rule": ("str", "refractory"),
    "micro.strict": ("bool", True),
    "hybrid.n_on": ("float", _REQUIRED),
    "hybrid.n_off": ("float", _REQUIRED),
    "hybrid.k_back": ("int", 10),
    "hybrid.rewind": ("bool", False),
    "hybrid.max_switches": ("int", 100),
    "study.n_rep": ("int", _REQUIRED),
    "study.sizes": ("int_list", _REQUIRED),
    "study.b_values": ("float_list", _REQUIRED),
    "study.rate_threshold": ("float", 15.0),
    "study.lattice_step": ("float", 0.5),
    "study.amplitude_max": ("float", 40.0),
    "study.pairs": ("float_list", _REQUIRED),
    "study.pulse_center": ("float", 0.2),
    "study.rate": ("float", 5.0),
    "study.kick": ("float", 1e-4),
}

# keys that must be present (no usable default) per experiment kind
REQUIRED_KEYS = {
    "run-micro": ("run.t_max", "run.dt", "network.size"),
    "run-macro": ("run.t_max", "run.dt", "network.size"),
    "run-hybrid": ("run.t_max", "run.dt", "network.size", "hybrid.n_on", "hybrid.n_off"),
    "tests-1-4": ("run.t_max", "run.dt", "network.size", "study.n_rep"),
    "bias-study": ("run.t_max", "run.dt", "study.sizes", "study.n_rep"),
    "threshold-sweep": ("run.t_max", "run.dt", "network.size", "study.b_values"),
    "refractory-study": ("run.t_max", "run.dt", "network.size", "study.pairs"),
    "mc-scaling": ("grid.dv", "study.sizes", "study.n_rep"),
    "diffusion-check": ("run.t_max", "network.size", "study.n_rep"),
    "benchmark": ("run.t_max", "run.dt", "study.sizes"),
}

PRESETS: dict[str, dict[str, object]] = {
    "run-micro-b1": {
        "run.kind": "run-micro", "physics.b": 1.0, "network.size": 10_000,
        "run.t_max": 3.0, "run.dt": 5e-5, "run.k_rec": 100,
        "micro.rule": "no-refractory",
    },
    "run-macro-b1": {
        "run.kind": "run-macro", "physics.b": 1.0, "network.size": 10_000,
        "run.t_max": 3.0, "run.dt": 5e-5, "run.k_rec": 100,
    },
    "run-micro-b-1": {
        "run.kind": "run-micro", "physics.b": -1.0, "network.size": 10_000,
        "run.t_max": 3.0, "run.dt": 5e-5, "run.k_rec": 100,
        "micro.rule": "no-refractory",
    },
    "run-macro-b-1": {
        "run.kind": "run-macro", "physics.b": -1.0, "network.size": 10_000,
        "run.t_max": 3.0, "run.dt": 5e-5, "run.k_rec": 100,
    },
    "tests-1-4-b1": {
        "run.kind": "tests-1-4", "physics.b": 1.0, "network.size": 625,
        "run.t_max": 3.0, "run.dt": 5e-5, "run.k_rec": 100, "study.n_rep": 3,
        "micro.rule": "no-refractory",
    },
    "bias-study-b1": {
        "run.kind": "bias-study", "physics.b": 1.0,
        "study.sizes": [625, 10_000], "study.n_rep": 20,
        "run.t_max": 3.0, "run.dt": 5e-5, "run.k_rec": 100,
        "micro.rule": "no-refractory",
    },
    "single-pulse-b1": {
        "run.kind": "run-hybrid", "physics.b": 1.0,
        "current.kind": "single-pulse", "current.j_max": 16.0,
        "current.beta": 100.0, "current.t_p": 0.5,
        "network.size": 160_000, "grid.dv": 0.05,
        "run.t_max": 1.0, "run.dt": 1e-4, "run.k_rec": 10,
        "hybrid.n_on": 10.0, "hybrid.n_off": 10.0, "hybrid.k_back": 10,
        "micro.rule": "refractory",
    },
    "single-pulse-b05": {
        "run.kind": "run-hybrid", "physics.b": 0.5,
        "current.kind": "single-pulse", "current.j_max": 24.0,
        "current.beta": 100.0, "current.t_p": 0.5,
        "network.size": 160_000, "grid.dv": 0.05,
        "run.t_max": 1.0, "run.dt": 1e-4, "run.k_rec": 10,
        "hybrid.n_on": 10.0, "hybrid.n_off": 10.0, "hybrid.k_back": 10,
        "micro.rule": "refractory",
    },
    "periodic-b08-j10": {
        "run.kind": "run-hybrid", "physics.b": 0.8,
        "current.kind": "periodic", "current.j_max": 10.0,
        "current.beta": 500.0, "current.n_pulses": 6,
        "current.spacing": 0.5, "current.offset": 0.25,
        "network.size": 160_000, "grid.dv": 0.05,
        "run.t_max": 3.0, "run.dt": 1e-4, "run.k_rec": 10,
        "hybrid.n_on": 10.0, "hybrid.n_off": 10.0, "hybrid.k_back": 10,
        "micro.rule": "refractory",
    },
    "periodic-b08-j20": {
        "run.kind": "run-hybrid", "physics.b": 0.8,
        "current.kind": "periodic", "current.j_max": 20.0,
        "current.beta": 500.0, "current.n_pulses": 6,
        "current.spacing": 0.5, "current.offset": 0.25,
        "network.size": 160_000, "grid.dv": 0.05,
        "run.t_max": 3.0, "run.dt": 1e-4, "run.k_rec": 10,
        "hybrid.n_on": 10.0, "hybrid.n_off": 10.0, "hybrid.k_back": 10,
        "micro.rule": "refractory",
    },
    "threshold-sweep": {
        "run.kind": "threshold-sweep", "network.size": 10_000,
        "study.b_values": [0.5, 1.0, 1.5], "study.rate_threshold": 15.0,
        "study.pulse_center": 0.2, "current.beta": 100.0,
        "run.t_max": 1.0, "run.dt": 1e-4, "run.k_rec": 10,
    },
    "refractory-study": {
        "run.kind": "refractory-study", "network.size": 10_000,
        "study.pairs": [1.2, 20.0, 1.0, 16.0],
        "study.pulse_center": 0.2, "current.beta": 100.0,
        "run.t_max": 1.0, "run.dt": 1e-4, "run.k_rec": 10,
    },
    "mc-scaling": {
        "run.kind": "mc-scaling", "grid.dv": 0.1,
        "study.sizes": [1000, 10_000, 100_000], "study.n_rep": 300,
    },
    "diffusion-check": {
        "run.kind": "diffusion-check", "network.size": 10_000,
        "study.rate": 5.0, "study.kick": 1e-4,
        "run.t_max": 1.0, "study.n_rep": 200,
    },
    "benchmark-single-pulse": {
        "run.kind": "benchmark", "physics.b": 1.0,
        "current.kind": "single-pulse", "current.j_max": 16.0,
        "current.beta": 100.0, "current.t_p": 0.5,
        "study.sizes": [10_000, 50_625],
        "run.t_max": 1.0, "run.dt": 1e-4, "run.k_rec": 10,
        "hybrid.n_on": 10.0, "hybrid.n_off": 10.0, "hybrid.k_back": 10,
        "micro.rule": "refractory",
    },
    "benchmark-periodic": {
        "run.kind": "benchmark", "physics.b": 0.8,
        "current.kind": "periodic", "current.j_max": 10.0,
        "current.beta": 500.0, "current.n_pulses": 6,
        "current.spacing": 0.5, "current.offset": 0.25,
        "study.sizes": [10_000],
        "run.t_max": 3.0, "run.dt": 1e-4, "run.k_rec": 10,
        "hybrid.n_on": 10.0, "hybrid.n_off": 10.0, "hybrid.k_back": 10,
        "micro.rule": "refractory",
    },
}

_FULL_FIDELITY_SIZES = {
    "bias-study": [625, 10_000, 160_000],
    "benchmark": [10_000, 50_625, 160_000, 390_625],
}


def _parse_value(key: str, raw, tag: str):
    if not isinstance(raw, str):
        return raw  # already typed (preset entry)
    raw = raw.strip()
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if tag == "int_list":
            return [int(x) for x in raw.split(",") if x.strip()]
        if tag == "float_list":
            return [float(x) for x in raw.split(",") if x.strip()]
        return raw
    except ValueError as exc:
        raise ConfigError(f"key '{key}': cannot parse {raw!r} as {tag} ({exc})") from exc


def _canon(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(_canon(v) for v in value)
    return str(value)


@dataclass
class RunConfig:
    """Validated experiment configuration plus builders for domain objects."""

    values: dict

    @property
    def kind(self) -> str:
        return self.values["run.kind"]

    def __getitem__(self, key):
        return self.values[key]

    def fingerprint(self) -> str:
        lines = sorted(f"{k}={_canon(v)}" for k, v in self.values.items() if v is not None)
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]

    def params(self, n_neurons: int | None = None) -> NetworkParams:
        v = self.values
        return NetworkParams(
            v_fire=v["physics.v_fire"], v_reset=v["physics.v_reset"],
            v_leak=v["physics.v_leak"], v_min=v["physics.v_min"],
            connectivity=v["physics.b"],
            n_neurons=v["network.size"] if n_neurons is None else n_neurons,
            kick=v["physics.kick"], noise_std=v["physics.noise_std"],
            diffusion=v["physics.diffusion"])

    def grid(self, n_neurons: int | None = None):
        v = self.values
        dv = v["grid.dv"]
        if dv is None:
            dv = aligned_mesh_size(
                v["network.size"] if n_neurons is None else n_neurons,
                v["physics.v_min"], v["physics.v_fire"], v["physics.v_reset"])
        return make_grid(v["physics.v_min"], v["physics.v_fire"],
                         v["physics.v_reset"], dv)

    def current(self):
        v = self.values
        kind = v["current.kind"]
        if kind == "constant":
            return Constant(v["current.value"])
        if kind == "single-pulse":
            return GaussianPulse(v["current.j_max"], v["current.beta"], v["current.t_p"])
        if kind == "periodic":
            pulses = tuple(
                GaussianPulse(v["current.j_max"], v["current.beta"],
                              k * v["current.spacing"] + v["current.offset"])
                for k in range(v["current.n_pulses"]))
            return PulseTrain(pulses)
        raise ConfigError(f"key 'current.kind': unknown current kind {kind!r}")

    def init(self) -> GaussianInit:
        return GaussianInit(self.values["init.mean"], self.values["init.variance"])

    def rule(self) -> UpdateRule:
        name = self.values["micro.rule"]
        try:
            return UpdateRule(name)
        except ValueError:
            raise ConfigError(
                f"key 'micro.rule': expected 'refractory' or 'no-refractory', got {name!r}"
            ) from None

    def hybrid_config(self, n_neurons: int | None = None) -> HybridConfig:
        v = self.values
        n_on = v["hybrid.n_on"] if v["hybrid.n_on"] is not None else np.inf
        n_off = v["hybrid.n_off"] if v["hybrid.n_off"] is not None else np.inf
        return HybridConfig(
            params=self.params(n_neurons), current=self.current(),
            grid=self.grid(n_neurons), init=self.init(),
            t_max=v["run.t_max"], dt=v["run.dt"], rule=self.rule(),
            n_on=n_on, n_off=n_off, k_back=v["hybrid.k_back"],
            k_rec=v["run.k_rec"], rewind_on_switch_down=v["hybrid.rewind"],
            max_switches=v["hybrid.max_switches"], strict_mfe=v["micro.strict"])

    def source(self) -> RandomSource:
        return RandomSource(self.values["run.seed"])


def _read_config_file(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    entries: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key in entries:
            raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
        entries[key] = raw
    return entries


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return dict(PRESETS[name])


def parse_config(path: str | Path | None = None, preset: str | None = None,
                 overrides: dict | None = None, seed: int | None = None,
                 full_fidelity: bool = False) -> RunConfig:
    """Merge preset, config file, and overrides into a validated RunConfig.

    Unknown keys, type mismatches, missing required keys, and grid
    misalignment are all reported with their key paths.
    """
    merged: dict[str, object] = {}
    if preset is not None:
        merged.update(load_preset(preset))
    if path is not None:
        merged.update(_read_config_file(Path(path)))
    if overrides:
        merged.update(overrides)
    if not merged:
        missing = ", ".join(k for k, (_, d) in KEY_SCHEMA.items() if d is _REQUIRED)
        raise ConfigError(f"empty configuration; missing required key(s): {missing}")

    unknown = [k for k in merged if k not in KEY_SCHEMA]
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")

    values = {}
    for key, (tag, default) in KEY_SCHEMA.items():
        if key in merged:
            values[key] = _parse_value(key, merged[key], tag)
        else:
            values[key] = None if default is _REQUIRED else default

    kind = values["run.kind"]
    if kind is None:
        raise ConfigError("missing required key(s): run.kind")
    if kind not in KINDS:
        raise ConfigError(f"key 'run.kind': unknown kind {kind!r}; one of {', '.join(KINDS)}")

    if full_fidelity:
        if values["study.n_rep"] is not None:
            values["study.n_rep"] = max(values["study.n_rep"], 50)
        if kind in _FULL_FIDELITY_SIZES and values["study.sizes"] is not None:
            values["study.sizes"] = list(_FULL_FIDELITY_SIZES[kind])
        if kind in ("run-micro", "run-macro", "run-hybrid") and values["network.size"] < 160_000:
            values["network.size"] = 160_000
    if seed is not None:
        values["run.seed"] = int(seed)

    missing = [k for k in REQUIRED_KEYS[kind] if values.get(k) is None]
    if missing:
        raise ConfigError(f"missing required key(s) for {kind}: {', '.join(missing)}")

    config = RunConfig(values)
    # eager validation of derived objects so bad physics fails before compute
    try:
        size = values["network.size"]
        if size is None and values["study.sizes"]:
            size = values["study.sizes"][0]
        if size is not None:
            config.params(size)
            config.grid(size)
        elif values["grid.dv"] is not None:
            config.grid(10_000)
        config.current()
        config.init()
        config.rule()
    except GridAlignmentError as exc:
        raise ConfigError(f"key 'grid.dv': {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return config


# ---------------------------------------------------------------------------
# artifact emission


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def atomic_write_text(path: Path, text: str):
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_csv(path: Path, fingerprint: str, header, rows):
    lines = [f"# config={fingerprint}", ",".join(header)]
    lines.extend(",".join(_fmt(x) for x in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def _write_metadata(out: Path, config: RunConfig, extra: dict | None = None):
    meta = {
        "fingerprint": config.fingerprint(),
        "created_unix": time.time(),
        "package_version": __version__,
        "config": {k: v for k, v in config.values.items() if v is not None},
    }
    if extra:
        meta.update(extra)
    atomic_write_text(out / "metadata.json", json.dumps(meta, indent=2, default=str) + "\n")


def verify_artifacts(config: RunConfig, out: Path) -> list[str]:
    """Return the artifact files whose embedded fingerprint does not match."""
    expected = f"# config={config.fingerprint()}"
    bad = []
    for csv_path in sorted(out.glob("*.csv")):
        first = csv_path.read_text().splitlines()[0] if csv_path.stat().st_size else ""
        if first != expected:
            bad.append(csv_path.name)
    return bad


def _emit_trajectory(traj, config: RunConfig, out: Path, with_events: bool):
    fp = config.fingerprint()
    windowed = traj.windowed_rates()
    mode_names = np.where(traj.mode == SolverMode.MICRO, "micro", "macro")
    rows = zip(traj.times, mode_names, traj.rate, windowed)
    write_csv(out / "rates.csv", fp, ("t", "mode", "rate", "rate_windowed"), rows)

    density = traj.terminal_density()
    write_csv(out / "density.csv", fp, ("v_center", "p"),
              zip(traj.grid.interior_centers, density.weights))

    if with_events:
        write_csv(out / "events.csv", fp, ("t", "direction", "step", "traceback"),
                  ((e.time, e.direction, e.step, e.restart_step) for e in traj.events))
    return density


def _plot_trajectory(traj, out: Path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(traj.times, traj.windowed_rates(), lw=1.0)
    ax.set_xlabel("t")
    ax.set_ylabel("firing rate (windowed)")
    fig.savefig(out / "rates.svg")
    plt.close(fig)

    density = traj.terminal_density()
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.step(traj.grid.interior_centers, density.weights, where="mid", lw=1.0)
    ax.set_xlabel("v")
    ax.set_ylabel("p")
    fig.savefig(out / "density.svg")
    plt.close(fig)


# ---------------------------------------------------------------------------
# experiment runners


def _run_solver_kind(config: RunConfig, out: Path, plot: bool):
    kind = config.kind
    hybrid_cfg = config.hybrid_config()
    source = config.source()
    if kind == "run-micro":
        traj = run_pure(SolverMode.MICRO, hybrid_cfg, source)
    elif kind == "run-macro":
        traj = run_pure(SolverMode.MACRO, hybrid_cfg, source)
    else:
        traj = run_hybrid(hybrid_cfg, source)
    _emit_trajectory(traj, config, out, with_events=(kind == "run-hybrid"))
    if plot:
        _plot_trajectory(traj, out)
    n_micro = int(np.count_nonzero(traj.mode == SolverMode.MICRO))
    print(f"{kind}: {traj.rate.size - 1} steps, {len(traj.events)} switch event(s), "
          f"{n_micro} micro-mode step(s), wall {traj.wall_time:.2f}s")
    return {"wall_time": traj.wall_time, "events": len(traj.events)}


def _run_bias_kind(config: RunConfig, out: Path, threads: int):
    sizes = ([config["network.size"]] if config.kind == "tests-1-4"
             else config["study.sizes"])
    report = bias_study(config["physics.b"], sizes, config["study.n_rep"],
                        config.source(), t_max=config["run.t_max"],
                        dt=config["run.dt"], rule=config.rule(), threads=threads)
    rows = [(e.n_neurons, e.observable, e.pair, e.bias) for e in report.entries]
    write_csv(out / "biases.csv", config.fingerprint(),
              ("n_neurons", "observable", "pair", "bias"), rows)
    print(f"{config.kind}: {len(rows)} bias entries over sizes {sizes}, "
          f"n_rep={report.n_rep}")
    return {"n_entries": len(rows)}


def _run_threshold_sweep(config: RunConfig, out: Path):
    fp = config.fingerprint()
    rows, peak_rows = [], []
    for b in config["study.b_values"]:
        result = amplitude_threshold_search(
            b, config["study.rate_threshold"], config.source(),
            n_neurons=config["network.size"], t_max=config["run.t_max"],
            dt=config["run.dt"], concentration=config["current.beta"],
            center=config["study.pulse_center"], k_rec=config["run.k_rec"],
            rule=config.rule(), lattice_step=config["study.lattice_step"],
            amplitude_max=config["study.amplitude_max"])
        found = result.minimal_amplitude is not None
        rows.append((b, config["study.rate_threshold"],
                     result.minimal_amplitude if found else "", found))
        peak_rows.extend((b, amp, peak) for amp, peak in sorted(result.peak_rates.items()))
        print(f"threshold-sweep: b={b} -> minimal amplitude "
              f"{result.minimal_amplitude if found else 'not found'}")
    write_csv(out / "thresholds.csv", fp,
              ("b", "rate_threshold", "minimal_amplitude", "found"), rows)
    write_csv(out / "peaks.csv", fp, ("b", "amplitude", "peak_rate"), peak_rows)
    return {"n_points": len(rows)}


def _run_refractory_study(config: RunConfig, out: Path):
    fp = config.fingerprint()
    pairs = config["study.pairs"]
    if len(pairs) % 2:
        raise ConfigError("key 'study.pairs': expected flattened (b, j_max) pairs")
    rows = []
    for i in range(0, len(pairs), 2):
        b, amplitude = pairs[i], pairs[i + 1]
        result = refractory_divergence(
            b, amplitude, config.source(), n_neurons=config["network.size"],
            t_max=config["run.t_max"], dt=config["run.dt"],
            concentration=config["current.beta"],
            center=config["study.pulse_center"], k_rec=config["run.k_rec"])
        rows.append((b, amplitude, result.sup_distance))
        write_csv(out / f"refractory_rates_{i // 2}.csv", fp,
                  ("t", "rate_refractory", "rate_no_refractory"),
                  zip(result.times, result.windowed_refractory,
                      result.windowed_no_refractory))
        print(f"refractory-study: (b, j_max)=({b}, {amplitude}) -> "
              f"sup rate distance {result.sup_distance:.3f}")
    write_csv(out / "divergence.csv", fp, ("b", "j_max", "sup_distance"), rows)
    return {"n_pairs": len(rows)}


def _run_mc_scaling(config: RunConfig, out: Path, threads: int):
    grid = config.grid(10_000)  # dv is explicit for mc-scaling; size is unused
    init = config.init()
    density = PiecewiseUniformDensity(grid, init.pdf(grid.interior_centers))
    report = mc_scaling_test(density, config["study.sizes"], config["study.n_rep"],
                             config.source(), threads=threads)
    write_csv(out / "scaling.csv", config.fingerprint(),
              ("n_samples", "rms_error"), zip(report.sizes, report.rms_errors))
    print(f"mc-scaling: fitted slope {report.slope:.4f} over sizes {list(report.sizes)}")
    return {"slope": report.slope}


def _run_diffusion_check(config: RunConfig, out: Path):
    report = validate_diffusion_approximation(
        config["study.rate"], config["study.kick"], config["network.size"],
        config["run.t_max"], config["study.n_rep"], config.source())
    rows = [
        ("mean", report.mean_empirical, report.mean_expected, report.mean_band,
         report.mean_ok),
        ("variance", report.var_empirical, report.var_expected, report.var_band,
         report.var_ok),
    ]
    write_csv(out / "diffusion.csv", config.fingerprint(),
              ("moment", "empirical", "expected", "band", "ok"), rows)
    print(f"diffusion-check: mean ok={report.mean_ok}, variance ok={report.var_ok}")
    if not (report.mean_ok and report.var_ok):
        raise PositivityError("diffusion-approximation moments outside 4-sigma bands")
    return {"mean_ok": report.mean_ok, "var_ok": report.var_ok}


def _run_benchmark(config: RunConfig, out: Path):
    cases = []
    for n in config["study.sizes"]:
        cases.append((f"{config['current.kind']}-L{n}", config.hybrid_config(n_neurons=n)))
    rows = benchmark(cases, config.source())
    write_csv(out / "benchmark.csv", config.fingerprint(),
              ("experiment", "n_neurons", "micro_seconds", "multiscale_seconds",
               "speedup"),
              ((r.label, r.n_neurons, r.micro_seconds, r.multiscale_seconds,
                r.speedup) for r in rows))
    for r in rows:
        print(f"benchmark: {r.label}: micro {r.micro_seconds:.2f}s, "
              f"multi-scale {r.multiscale_seconds:.2f}s, speedup {r.speedup:.2f}x")
    return {"n_cases": len(rows)}


def run(config: RunConfig, out: Path, threads: int = 1, plot: bool = False) -> dict:
    """Dispatch a validated configuration and write artifacts atomically."""
    out.mkdir(parents=True, exist_ok=True)
    kind = config.kind
    if kind in ("run-micro", "run-macro", "run-hybrid"):
        extra = _run_solver_kind(config, out, plot)
    elif kind in ("tests-1-4", "bias-study"):
        extra = _run_bias_kind(config, out, threads)
    elif kind == "threshold-sweep":
        extra = _run_threshold_sweep(config, out)
    elif kind == "refractory-study":
        extra = _run_refractory_study(config, out)
    elif kind == "mc-scaling":
        extra = _run_mc_scaling(config, out, threads)
    elif kind == "diffusion-check":
        extra = _run_diffusion_check(config, out)
    else:
        extra = _run_benchmark(config, out)
    _write_metadata(out, config, extra)
    return extra


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nlif-sim",
        description="Multi-scale integrate-and-fire network simulations")
    parser.add_argument("--config", type=Path, help="key=value configuration file")
    parser.add_argument("--preset", help="built-in experiment preset")
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--out", type=Path, default=Path("nlif-out"),
                        help="output directory (default: ./nlif-out)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap for replica-parallel studies")
    parser.add_argument("--full-fidelity", action="store_true",
                        help="paper-scale replica counts and network sizes")
    parser.add_argument("--plot", action="store_true",
                        help="also render simple SVG charts (needs matplotlib)")
    parser.add_argument("--verify", action="store_true",
                        help="check artifact/config fingerprint pairing in --out")
    parser.add_argument("--list-presets", action="store_true")
    args = parser.parse_args(argv)

    if args.list_presets:
        for name in sorted(PRESETS):
            print(name)
        return 0

    try:
        if args.config is None and args.preset is None:
            raise ConfigError("provide --config and/or --preset (see --list-presets)")
        config = parse_config(path=args.config, preset=args.preset,
                              seed=args.seed, full_fidelity=args.full_fidelity)
        if args.verify:
            bad = verify_artifacts(config, args.out)
            if bad:
                print(f"fingerprint mismatch in: {', '.join(bad)}", file=sys.stderr)
                return 2
            print(f"all artifacts in {args.out} match config {config.fingerprint()}")
            return 0
        run(config, args.out, threads=args.threads, plot=args.plot)
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
