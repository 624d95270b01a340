"""Batch experiment driver: configuration, sweeps, disorder averages, output.

Config files are YAML with four sections (unknown keys are rejected)::

    system:   {L1, L2, alpha1, alpha2}
    circuit:  {Np, T, gate_kind, custom_gate}
    run:      {realizations, master_seed, mode, fraction, workers,
               oracle_check, oracle_cap, max_trajectories, sample_rescale}
    output:   {output_path}

A result directory holds ``realizations.csv``, ``aggregate.csv`` (or the
``compare*.csv`` pair) and ``manifest.json``. Floats are written with 17
significant digits so they round-trip exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import multiprocessing
import os
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .engine import (
    DEFAULT_TRAJECTORY_BUDGET,
    RECORD_DTYPE,
    SurvivalSeries,
    branches_for,
    collect,
    execute_unit,
    prepare_units,
    trajectory_count,
)
from .errors import ArgumentError, ResourceError
from .oracle import DEFAULT_CAP, oracle_run
from .randmodel import RNG_ALGORITHM, GateKind, ModelParams, build_realization

WORKERS_ENV = "SFSIM_WORKERS"

SECTIONS = {
    "system": ("L1", "L2", "alpha1", "alpha2"),
    "circuit": ("Np", "T", "gate_kind", "custom_gate"),
    "run": (
        "realizations",
        "master_seed",
        "mode",
        "fraction",
        "workers",
        "oracle_check",
        "oracle_cap",
        "max_trajectories",
        "sample_rescale",
    ),
    "output": ("output_path",),
}


@dataclass
class RunConfig:
    L1: int
    L2: int
    alpha1: float
    alpha2: float
    T: int
    gate_kind: str = "cz"
    Np: int = 10
    custom_gate: list | None = None
    realizations: int = 1
    master_seed: int = 0
    mode: str = "exact"
    fraction: float = 1.0
    workers: int = 1
    oracle_check: bool = False
    oracle_cap: int = DEFAULT_CAP
    max_trajectories: int = DEFAULT_TRAJECTORY_BUDGET
    sample_rescale: bool = False
    output_path: str | None = None

    def __post_init__(self) -> None:
        self.gate_kind = str(self.gate_kind).lower()
        if self.gate_kind not in {g.value for g in GateKind}:
            raise ArgumentError(f"gate_kind must be one of cz, iswap, none, custom; got {self.gate_kind!r}")
        if self.mode not in ("exact", "sampled"):
            raise ArgumentError(f"mode must be 'exact' or 'sampled', got {self.mode!r}")
        for name in ("L1", "L2", "Np", "realizations", "workers", "oracle_cap", "max_trajectories"):
            if int(getattr(self, name)) < 1:
                raise ArgumentError(f"{name} must be >= 1")
        if self.T < 0:
            raise ArgumentError("T must be >= 0")
        if not 0 < self.fraction <= 1:
            raise ArgumentError(f"fraction must be in (0, 1], got {self.fraction}")
        if not 0 <= self.master_seed < 2**64:
            raise ArgumentError("master_seed must be a 64-bit unsigned integer")
        self.params()

    @property
    def L(self) -> int:
        return self.L1 + self.L2

    def custom_matrix(self) -> np.ndarray | None:
        if self.custom_gate is None:
            return None
        rows = []
        for row in self.custom_gate:
            rows.append([complex(*v) if isinstance(v, (list, tuple)) else complex(v) for v in row])
        return np.array(rows, dtype=np.complex128)

    def params(self, gate_kind: str | None = None) -> ModelParams:
        kind = gate_kind or self.gate_kind
        return ModelParams(
            self.L1, self.L2, self.alpha1, self.alpha2, self.Np, self.T, kind,
            self.custom_matrix() if kind == "custom" else None,
        )

    def to_nested(self) -> dict:
        flat = dataclasses.asdict(self)
        return {sec: {k: flat[k] for k in keys} for sec, keys in SECTIONS.items()}


def config_from_nested(doc: dict, overrides: dict | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ArgumentError("config document must be a mapping")
    flat = {}
    for sec, body in doc.items():
        if sec not in SECTIONS:
            raise ArgumentError(f"unknown config section {sec!r}")
        body = body or {}
        if not isinstance(body, dict):
            raise ArgumentError(f"section {sec!r} must be a mapping")
        for key, val in body.items():
            if key not in SECTIONS[sec]:
                raise ArgumentError(f"unknown key {key!r} in section {sec!r}")
            flat[key] = val
    env = os.environ.get(WORKERS_ENV)
    if env:
        flat["workers"] = int(env)
    for key, val in (overrides or {}).items():
        if not any(key in keys for keys in SECTIONS.values()):
            raise ArgumentError(f"unknown config field {key!r}")
        if val is not None:
            flat[key] = val
    try:
        return RunConfig(**flat)
    except TypeError as exc:
        raise ArgumentError(f"incomplete config: {exc}") from None


def load_config(path: str | os.PathLike, overrides: dict | None = None) -> RunConfig:
    """Read a YAML config, a result ``manifest.json``, or a result directory."""
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    try:
        doc = yaml.safe_load(p.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ArgumentError(f"cannot read config {p}: {exc}") from None
    if isinstance(doc, dict) and "rng_algorithm" in doc and "config" in doc:
        doc = doc["config"]
    return config_from_nested(doc, overrides)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def aggregate(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over realizations (axis 0)."""
    values = np.asarray(values, dtype=float)
    R = values.shape[0]
    mean = np.array([math.fsum(col) / R for col in values.T])
    if R < 2:
        return mean, np.full(mean.shape, np.nan)
    var = np.array([math.fsum((col - m) ** 2) / (R - 1) for col, m in zip(values.T, mean)])
    return mean, np.sqrt(var / R)


@dataclass
class SweepResult:
    config: RunConfig
    series: list[SurvivalSeries]
    mean: np.ndarray
    stderr: np.ndarray
    oracle_max_deviation: float | None = None
    trajectories: int = 0
    peak_state_complex: int = 0

    @property
    def values(self) -> np.ndarray:
        return np.array([s.values for s in self.series])


@contextmanager
def _executor(workers: int):
    if workers <= 1:
        yield None
        return
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(workers) as pool:
        yield pool


def _split_depth(config: RunConfig, r: int) -> int:
    """Subtree depth so that realizations x subtrees covers the workers."""
    if config.workers <= config.realizations or r == 1:
        return 0
    per_real = math.ceil(config.workers / config.realizations)
    d = 0
    while r**d < per_real and d < config.T:
        d += 1
    return d


def _run_realizations(config: RunConfig, gate_kinds: list[str], pool) -> dict[str, list[SurvivalSeries]]:
    """Run every realization once per gate kind, same seeds for each kind."""
    plans = []
    units = []
    for i in range(config.realizations):
        base = build_realization(config.params(), config.master_seed, i)
        for kind in gate_kinds:
            real = base.with_gate(GateKind(kind), config.custom_matrix() if kind == "custom" else None)
            r = branches_for(real).r
            u, r, exact = prepare_units(
                real,
                config.mode,
                config.fraction,
                split_depth=_split_depth(config, r),
                budget=config.max_trajectories,
            )
            plans.append((kind, len(units), len(units) + len(u), r, exact))
            units.extend(u)
    mapper = pool.imap if pool is not None else map
    results = list(mapper(execute_unit, units))
    out: dict[str, list[SurvivalSeries]] = {k: [] for k in gate_kinds}
    for kind, lo, hi, r, exact in plans:
        out[kind].append(collect(results[lo:hi], config.T, r, exact, config.sample_rescale))
    return out


def _deviation(config: RunConfig, s: SurvivalSeries, i: int, gate_kind: str) -> float:
    real = build_realization(config.params(gate_kind), config.master_seed, i)
    ref = oracle_run(real, cap=config.oracle_cap)
    return float(np.max(np.abs(s.values - ref.values)))


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _manifest(config: RunConfig, status: str, extra: dict) -> dict:
    return {
        "status": status,
        "config": config.to_nested(),
        "rng_algorithm": RNG_ALGORITHM,
        "code_version": f"sfsim {__version__}",
        "numpy_version": np.__version__,
        "record_format": {
            "fields": [name for name in RECORD_DTYPE.names],
            "byte_layout": "<u8 <u8 <u2 <f8 <f8 (little-endian, packed)",
            "record_bytes": RECORD_DTYPE.itemsize,
        },
        **extra,
    }


def _write(out_dir: Path, files: dict[str, str], manifest: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text, encoding="utf-8")
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _series_rows(series: list[SurvivalSeries]):
    for i, s in enumerate(series):
        for t, (a, v) in enumerate(zip(s.amplitudes, s.values)):
            yield [i, t, fmt(v), fmt(a.real), fmt(a.imag)]


def _check_budget(config: RunConfig, kinds: list[str]) -> None:
    for kind in kinds:
        real = build_realization(config.params(kind), config.master_seed, 0)
        total = trajectory_count(branches_for(real).r, config.T)
        need = total if config.mode == "exact" else math.ceil(config.fraction * total)
        if need > config.max_trajectories:
            raise ResourceError(
                f"{kind}: {need} trajectories per realization exceed max_trajectories="
                f"{config.max_trajectories}",
                required=need,
                limit=config.max_trajectories,
            )


def _guarded(config: RunConfig, kinds: list[str], fn):
    """Run ``fn``; on failure mark the output directory incomplete."""
    try:
        _check_budget(config, kinds)
        return fn()
    except (ResourceError, ArgumentError) as exc:
        if config.output_path:
            _write(Path(config.output_path), {}, _manifest(config, "incomplete", {"error": str(exc)}))
        raise


def run_sweep(config: RunConfig) -> SweepResult:
    """Disorder-averaged survival probability for one configuration."""

    def go() -> SweepResult:
        with _executor(config.workers) as pool:
            series = _run_realizations(config, [config.gate_kind], pool)[config.gate_kind]
        mean, se = aggregate([s.values for s in series])
        res = SweepResult(
            config, series, mean, se,
            trajectories=sum(s.stats.trajectories for s in series),
            peak_state_complex=max(s.stats.peak_state_complex for s in series),
        )
        oracle = {"requested": config.oracle_check}
        if config.oracle_check:
            if config.L <= config.oracle_cap:
                res.oracle_max_deviation = max(
                    _deviation(config, s, i, config.gate_kind) for i, s in enumerate(series)
                )
                oracle["max_abs_deviation"] = fmt(res.oracle_max_deviation)
            else:
                oracle["skipped"] = f"L={config.L} exceeds oracle_cap={config.oracle_cap}"
        if config.output_path:
            per = _csv_text(["realization_id", "t", "L_value", "amp_re", "amp_im"], _series_rows(series))
            agg = _csv_text(
                ["t", "mean_L", "stderr", "R"],
                ([t, fmt(m), fmt(e), config.realizations] for t, (m, e) in enumerate(zip(mean, se))),
            )
            extra = {
                "approximate": config.mode == "sampled" and config.fraction < 1,
                "files": {"per_realization": "realizations.csv", "aggregate": "aggregate.csv"},
                "oracle": oracle,
                "trajectories_total": res.trajectories,
                "peak_state_complex_per_worker": res.peak_state_complex,
            }
            _write(
                Path(config.output_path),
                {"realizations.csv": per, "aggregate.csv": agg},
                _manifest(config, "complete", extra),
            )
        return res

    return _guarded(config, [config.gate_kind], go)


@dataclass
class CompareResult:
    config: RunConfig
    connected: list[SurvivalSeries]
    disconnected: list[SurvivalSeries]

    @property
    def connected_values(self) -> np.ndarray:
        return np.array([s.values for s in self.connected])

    @property
    def disconnected_values(self) -> np.ndarray:
        return np.array([s.values for s in self.disconnected])


def compare_connected_disconnected(config: RunConfig) -> CompareResult:
    """Same realizations with ``config.gate_kind`` and with no connecting gate."""
    kinds = [config.gate_kind, "none"] if config.gate_kind != "none" else ["none"]

    def go() -> CompareResult:
        with _executor(config.workers) as pool:
            out = _run_realizations(config, kinds, pool)
        res = CompareResult(config, out[config.gate_kind], out["none"])
        if config.output_path:
            rows = (
                [i, t, fmt(a), fmt(b)]
                for i, (sc, sd) in enumerate(zip(res.connected, res.disconnected))
                for t, (a, b) in enumerate(zip(sc.values, sd.values))
            )
            per = _csv_text(["realization_id", "t", "L_connected", "L_disconnected"], rows)
            mc, ec = aggregate(res.connected_values)
            md, ed = aggregate(res.disconnected_values)
            agg = _csv_text(
                ["t", "mean_connected", "stderr_connected", "mean_disconnected", "stderr_disconnected", "R"],
                (
                    [t, fmt(mc[t]), fmt(ec[t]), fmt(md[t]), fmt(ed[t]), config.realizations]
                    for t in range(config.T + 1)
                ),
            )
            extra = {
                "approximate": config.mode == "sampled" and config.fraction < 1,
                "files": {"per_realization": "compare.csv", "aggregate": "compare_aggregate.csv"},
            }
            _write(
                Path(config.output_path),
                {"compare.csv": per, "compare_aggregate.csv": agg},
                _manifest(config, "complete", extra),
            )
        return res

    return _guarded(config, kinds, go)


def oracle_check(config: RunConfig) -> list[float]:
    """Per-realization max deviation between engine and oracle."""
    if config.L > config.oracle_cap:
        raise ResourceError(
            f"oracle-check needs L={config.L} qubits, cap is {config.oracle_cap}",
            required=config.L,
            limit=config.oracle_cap,
        )
    _check_budget(config, [config.gate_kind])
    with _executor(config.workers) as pool:
        series = _run_realizations(config, [config.gate_kind], pool)[config.gate_kind]
    return [_deviation(config, s, i, config.gate_kind) for i, s in enumerate(series)]
