"""Command-line experiment runner.

    resonance-lab --preset beating --out runs/beating
    resonance-lab --config my.json --out runs/x --seed 7 --threads 4

A config is JSON; its keys are merged over the chosen preset (or over the
scenario's preset when only ``scenario`` is given) and validated strictly.
Every run writes CSV tables, a ``report.json`` and a ``manifest.json``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
import warnings
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from .beating import BeatingSpec, period_quadrature, verify_beating
from .field import (TransferSpec, build_beating_field, evolve_resonant, plateau_envelope,
                    transfer_scaling_law)
from .nls import (NlsState, NumericalError, SERIES_COLUMNS, StepConfig, decomposition_diagnostic,
                  default_potential, evolve_nls, exchange_series, scattering_diagnostic,
                  uniform_beating_state)
from .reduced import CoupledState, IntegrationError, IntegratorConfig, evolve
from .snapshot import write_snapshot
from .spectral import LineGrid, ProductField, TorusGrid

SCENARIOS = ("reduced", "beating", "gamma-scan", "resonant-field", "transfer-check", "nls",
             "decompose", "scattering", "potential")
MODE_SCENARIOS = ("beating", "resonant-field", "nls", "decompose", "scattering", "potential")
THREADS_ENV = "RESONANCE_LAB_THREADS"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Strict):
    P: int = Field(4, ge=0)
    L: float = Field(256.0, gt=0)
    n_x: int = Field(1024, gt=0)

    @model_validator(mode="after")
    def _power_of_two(self):
        if self.n_x & (self.n_x - 1):
            raise ValueError(f"n_x must be a power of two, got {self.n_x}")
        return self


class PhysicsConfig(_Strict):
    eps: float = Field(0.1, gt=0)
    gamma: float = Field(0.1, gt=0, lt=0.5)
    p: int = 0
    q: int = 1
    interval: tuple[float, float] = (-0.5, 0.5)
    width: float = Field(0.5, gt=0)
    potential: Union[None, Literal["default"], list[float]] = None
    nonlinear: bool = True

    @model_validator(mode="after")
    def _distinct(self):
        if self.p == self.q:
            raise ValueError("p and q must differ")
        if not self.interval[1] > self.interval[0]:
            raise ValueError("interval must be nonempty")
        return self


class IntegratorSection(_Strict):
    method: Literal["rk45", "rk4"] = "rk45"
    rtol: float = Field(1e-10, gt=0)
    atol: float = Field(1e-13, gt=0)
    step: Optional[float] = Field(None, gt=0)
    n_samples: int = Field(101, ge=2)

    def build(self, **extra) -> IntegratorConfig:
        return IntegratorConfig(method=self.method, rtol=self.rtol, atol=self.atol,
                                step=self.step, n_samples=self.n_samples, **extra)


class TimeConfig(_Strict):
    dt: float = Field(0.01, gt=0)
    t_end: float = Field(10.0, ge=0)
    tau_end: float = Field(10.0, ge=0)
    t0: float = Field(20.0, ge=1)
    t1: float = Field(60.0, gt=1)
    t_list: list[float] = [4.0, 8.0, 16.0, 32.0, 64.0]
    horizon: float = Field(3.0, gt=0)


class ExperimentConfig(_Strict):
    scenario: Literal[SCENARIOS]
    grid: GridConfig = GridConfig()
    physics: PhysicsConfig = PhysicsConfig()
    integrator: IntegratorSection = IntegratorSection()
    time: TimeConfig = TimeConfig()
    gammas: list[float] = Field(default_factory=lambda: [10.0**-k for k in range(1, 7)])
    amplitude: float = Field(0.1, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)
    record_every: int = Field(100, ge=1)
    snapshot_every: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _cross(self):
        if self.time.t1 <= self.time.t0:
            raise ValueError("time.t1 must exceed time.t0")
        if self.integrator.method == "rk4" and self.integrator.step is None:
            raise ValueError("integrator.step is required for rk4")
        if any(not 0 < g < 0.5 for g in self.gammas):
            raise ValueError("gammas must lie in (0, 1/2)")
        needed = max(abs(self.physics.p), abs(self.physics.q))
        if self.scenario in MODE_SCENARIOS and needed > self.grid.P:
            raise ValueError(f"modes p, q need grid.P >= {needed}")
        if isinstance(self.physics.potential, list) and len(self.physics.potential) != 2 * self.grid.P + 1:
            raise ValueError(f"physics.potential needs {2 * self.grid.P + 1} entries")
        return self

    def potential_table(self) -> np.ndarray | None:
        pot = self.physics.potential
        if pot is None:
            return None
        if pot == "default":
            return default_potential(TorusGrid(self.grid.P))
        return np.asarray(pot, dtype=float)


PRESETS: dict[str, dict] = {
    "reduced": {"scenario": "reduced", "grid": {"P": 8}, "amplitude": 0.1,
                "integrator": {"rtol": 1e-12, "atol": 1e-15}, "time": {"tau_end": 1000.0}},
    "beating": {"scenario": "beating", "physics": {"eps": 0.1, "gamma": 0.1, "p": 0, "q": 1},
                "grid": {"P": 1}, "integrator": {"rtol": 1e-12, "atol": 1e-16},
                "time": {"horizon": 3.0}},
    "gamma-scan": {"scenario": "gamma-scan"},
    "resonant-field": {"scenario": "resonant-field", "grid": {"P": 2, "L": 40.0, "n_x": 64},
                       "physics": {"eps": 0.1}, "time": {"tau_end": 100.0}},
    "transfer-check": {"scenario": "transfer-check", "grid": {"P": 4, "L": 40.0, "n_x": 64},
                       "amplitude": 1.0, "time": {"tau_end": 5.0}},
    "nls": {"scenario": "nls", "grid": {"P": 4, "L": 256.0, "n_x": 1024},
            "physics": {"eps": 0.05}, "time": {"dt": 0.01, "t_end": 10.0}, "record_every": 50},
    "decompose": {"scenario": "decompose", "grid": {"P": 3, "L": 512.0, "n_x": 4096},
                  "time": {"t_list": [4.0, 8.0, 16.0, 32.0, 64.0]}},
    "scattering": {"scenario": "scattering", "grid": {"P": 4, "L": 512.0, "n_x": 4096},
                   "physics": {"eps": 0.05, "gamma": 0.1, "interval": [1.5, 2.5]},
                   "time": {"dt": 0.01, "t0": 20.0, "t1": 60.0}, "record_every": 100},
    "potential": {"scenario": "potential", "grid": {"P": 4, "L": 3.141592653589793, "n_x": 4},
                  "physics": {"eps": 0.1, "gamma": 0.1, "potential": "default"},
                  "time": {"dt": 0.02, "horizon": 1.2}, "record_every": 10},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def load_config(raw: dict | None = None, preset: str | None = None,
                seed: int | None = None, threads: int | None = None) -> ExperimentConfig:
    raw = dict(raw or {})
    name = preset or raw.get("scenario")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"preset: unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    data = _merge(PRESETS.get(name, {}), raw)
    if seed is not None:
        data["seed"] = seed
    if threads is not None:
        data["threads"] = threads
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        lines = [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}"
                 for e in err.errors()]
        raise ConfigError("\n".join(lines)) from None


def format_float(v) -> str:
    return repr(float(v))


def write_csv(path: Path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    path.write_text(buf.getvalue())
    return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def _random_state(P: int, norm: float, seed: int) -> CoupledState:
    rng = np.random.default_rng(seed)
    n = 2 * P + 1
    z = rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))
    z *= norm / np.linalg.norm(z)
    return CoupledState(z[0], z[1])


def _beating_spec(cfg: ExperimentConfig) -> BeatingSpec:
    ph = cfg.physics
    return BeatingSpec(ph.p, ph.q, ph.gamma, ph.eps)


def _line(cfg: ExperimentConfig) -> LineGrid:
    return LineGrid(cfg.grid.L, cfg.grid.n_x)


def _transfer_state(cfg: ExperimentConfig) -> NlsState:
    line = _line(cfg)
    env = plateau_envelope(line.xi, tuple(cfg.physics.interval), cfg.physics.width)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        field, _ = build_beating_field(_beating_spec(cfg), line, env, P=cfg.grid.P)
    return NlsState(field.W_U, field.W_V, 0.0)


def _run_reduced(cfg, out):
    state = _random_state(cfg.grid.P, cfg.amplitude, cfg.seed)
    _, rep = evolve(state, cfg.time.tau_end, cfg.integrator.build())
    keys = sorted(rep.hs)
    write_csv(out / "invariants.csv", ["t", "I", "J", "H"] + [f"h{s}" for s in keys],
              zip(rep.t, rep.I, rep.J, rep.H, *(rep.hs[s] for s in keys)))
    return {"drift": rep.drift, "max_drift": rep.max_drift}


def _run_beating(cfg, out):
    spec = _beating_spec(cfg)
    rep = verify_beating(spec, cfg.time.horizon, cfg.integrator.build(),
                         P=cfg.grid.P)
    e2 = spec.eps**2
    write_csv(out / "k_curve.csv", ["t", "K_numeric", "K_planar"],
              zip(rep.t, rep.aq2 / e2, rep.predicted / e2))
    return {"half_period": rep.half_period, "expected_period": rep.expected_period,
            "observed_period": rep.observed_period, "max_deviation": rep.max_deviation,
            "K_min": rep.exchange_min / e2, "K_max": rep.exchange_max / e2,
            "action_drift": rep.action_drift, "leakage": rep.leakage}


def _run_gamma_scan(cfg, out):
    rows = [(g, period_quadrature(g), period_quadrature(g) / abs(np.log(g))) for g in cfg.gammas]
    write_csv(out / "gamma_scan.csv", ["gamma", "T_gamma", "T_over_abs_ln_gamma"], rows)
    ratios = [r[2] for r in rows]
    return {"ratio_min": min(ratios), "ratio_max": max(ratios)}


def _run_resonant_field(cfg, out):
    line = _line(cfg)
    env = plateau_envelope(line.xi, tuple(cfg.physics.interval), cfg.physics.width)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        field, splus = build_beating_field(_beating_spec(cfg), line, env, P=cfg.grid.P)
    write_snapshot(out / "initial.rsfd", field.W_U, field.W_V, field.tau)
    final, rep = evolve_resonant(field, cfg.time.tau_end, cfg.integrator.build(), n_jobs=cfg.threads)
    write_snapshot(out / "final.rsfd", final.W_U, final.W_V, final.tau)
    write_csv(out / "sobolev.csv", ["sigma", "initial", "final", "drift"],
              [(float(s), rep.initial[s], rep.final[s], rep.drift[s]) for s in rep.sigmas])
    return {"splus": splus, "drift": rep.drift}


def _run_transfer_check(cfg, out):
    line = _line(cfg)
    seed = _random_state(cfg.grid.P, cfg.amplitude, cfg.seed)
    env = plateau_envelope(line.xi, tuple(cfg.physics.interval), cfg.physics.width)
    spec = TransferSpec(env, seed, tuple(cfg.physics.interval))
    icfg = cfg.integrator.build()
    direct, _ = evolve_resonant(spec.initial_field(line), cfg.time.tau_end, icfg, n_jobs=cfg.threads)
    closed = transfer_scaling_law(spec, line, cfg.time.tau_end, cfg=icfg)
    diff = np.sqrt(np.sum(np.abs(direct.W_U.data - closed.W_U.data) ** 2
                          + np.abs(direct.W_V.data - closed.W_V.data) ** 2, axis=1))
    size = np.sqrt(np.sum(np.abs(closed.W_U.data) ** 2 + np.abs(closed.W_V.data) ** 2))
    write_csv(out / "transfer.csv", ["xi", "phi", "abs_error"], zip(line.xi, env, diff))
    return {"relative_error": float(np.sqrt(np.sum(diff**2)) / size)}


def _series_rows(rep):
    return [tuple(float(v) for v in r) for r in rep.rows]


def _run_nls(cfg, out):
    state = _transfer_state(cfg)
    step = StepConfig(cfg.time.dt, potential=cfg.potential_table(), nonlinear=cfg.physics.nonlinear)
    rows, t = [], state.t
    chunk = cfg.snapshot_every * cfg.time.dt if cfg.snapshot_every else cfg.time.t_end
    k = 0
    write_snapshot(out / f"snapshot_{k:04d}.rsfd", state.U, state.V, state.t)
    while t < cfg.time.t_end - 1e-12:
        t_next = min(cfg.time.t_end, t + chunk)
        state, rep = evolve_nls(state, t_next, step, cfg.record_every)
        rows.extend(rep.rows if not rows else rep.rows[1:])
        t, k = t_next, k + 1
        write_snapshot(out / f"snapshot_{k:04d}.rsfd", state.U, state.V, state.t)
    write_csv(out / "series.csv", SERIES_COLUMNS, [tuple(map(float, r)) for r in rows])
    mu = np.array([r[1] for r in rows])
    mv = np.array([r[2] for r in rows])
    return {"mass_drift": float(max(np.ptp(mu) / mu[0], np.ptp(mv) / mv[0])), "snapshots": k + 1}


def _gaussian_profiles(cfg):
    line, torus = _line(cfg), TorusGrid(cfg.grid.P)
    p, q = cfg.physics.p, cfg.physics.q
    g = lambda X, c, s: np.exp(-((X - c) ** 2) / (2 * s**2))
    F = ProductField.from_function(line, torus, lambda X, Y: g(X, 0, 2) * np.exp(1j * p * Y))
    G = ProductField.from_function(
        line, torus, lambda X, Y: g(X, 1, 2.5) * (np.exp(1j * p * Y) + np.exp(1j * q * Y)))
    H = ProductField.from_function(line, torus, lambda X, Y: g(X, -1, 2) * np.exp(1j * q * Y))
    return F, G, H


def _run_decompose(cfg, out):
    curve = decomposition_diagnostic(*_gaussian_profiles(cfg), cfg.time.t_list)
    write_csv(out / "decomposition.csv",
              ["t", "c_re", "c_im", "ct_over_pi_abs_error", "residual", "remainder"],
              [(t, c.real, c.imag, abs(c * t / np.pi - 1), r, e)
               for t, c, r, e in zip(curve.t, curve.c, curve.residual, curve.remainder)])
    return {"ct_over_pi_error_last": float(abs(curve.ct_over_pi[-1] - 1)),
            "residual_monotone": bool(np.all(np.diff(curve.residual) < 0)),
            "remainder_monotone": bool(np.all(np.diff(curve.remainder) < 0))}


def _run_scattering(cfg, out):
    step = StepConfig(cfg.time.dt, potential=cfg.potential_table())
    rep = scattering_diagnostic(_transfer_state(cfg), cfg.time.t0, cfg.time.t1, step,
                                cfg.integrator.build(), record_every=cfg.record_every)
    write_csv(out / "series.csv", SERIES_COLUMNS, _series_rows(rep.series))
    return {"err_res": rep.err_res, "err_frozen": rep.err_frozen, "ratio": rep.ratio,
            "decay_variation": rep.decay_variation, "sobolev_growth": rep.sobolev_growth,
            "mass_drift": rep.mass_drift}


def _run_potential(cfg, out):
    spec = _beating_spec(cfg)
    state = uniform_beating_state(spec, _line(cfg), cfg.grid.P)
    t_end = cfg.time.horizon * 2 * period_quadrature(spec.gamma) / spec.eps**2
    pot = cfg.potential_table()
    if pot is None:
        pot = default_potential(state.torus)
    t, free = exchange_series(state, t_end, StepConfig(cfg.time.dt), spec.q, cfg.record_every)
    _, with_pot = exchange_series(state, t_end, StepConfig(cfg.time.dt, potential=pot),
                                  spec.q, cfg.record_every)
    write_csv(out / "exchange.csv", ["t", "fraction_free", "fraction_potential"],
              zip(t, free, with_pot))
    a_free, a_pot = np.ptp(free), np.ptp(with_pot)
    return {"amplitude_free": float(a_free), "amplitude_potential": float(a_pot),
            "relative_change": float(abs(a_pot - a_free) / a_free)}


RUNNERS = {"reduced": _run_reduced, "beating": _run_beating, "gamma-scan": _run_gamma_scan,
           "resonant-field": _run_resonant_field, "transfer-check": _run_transfer_check,
           "nls": _run_nls, "decompose": _run_decompose, "scattering": _run_scattering,
           "potential": _run_potential}


def run(cfg: ExperimentConfig, out) -> dict:
    """Run one scenario into ``out``; numeric failures propagate."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    report = RUNNERS[cfg.scenario](cfg, out)
    manifest = {"version": __version__, "scenario": cfg.scenario, "config": cfg.model_dump(mode="json"),
                "wall_time_s": time.perf_counter() - start,
                "files": sorted(p.name for p in out.iterdir() if p.name != "manifest.json")}
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    manifest["files"] = sorted(set(manifest["files"]) | {"report.json"})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return report


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="resonance-lab", description=__doc__.splitlines()[0],
                                 epilog=f"scenarios/presets: {', '.join(SCENARIOS)}")
    ap.add_argument("--config", type=Path, help="JSON config merged over the preset")
    ap.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    ap.add_argument("--preset", help="named preset")
    ap.add_argument("--seed", type=int, help="rng seed (u64)")
    ap.add_argument("--threads", type=int, help=f"worker threads (fallback: ${THREADS_ENV})")
    return ap


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ap = _parser()
    if not argv:
        ap.print_help()
        return EXIT_OK
    args = ap.parse_args(argv)
    if args.config is None and args.preset is None:
        ap.print_help()
        return EXIT_OK
    try:
        raw = {}
        if args.config is not None:
            try:
                raw = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as err:
                raise ConfigError(f"config: {err}") from None
            if not isinstance(raw, dict):
                raise ConfigError("config: top level must be a JSON object")
        threads = args.threads
        if threads is None and os.environ.get(THREADS_ENV):
            try:
                threads = int(os.environ[THREADS_ENV])
            except ValueError:
                raise ConfigError(f"{THREADS_ENV}: not an integer") from None
        cfg = load_config(raw, args.preset, args.seed, threads)
    except ConfigError as err:
        print(f"config error:\n{err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run(cfg, args.out)
    except (IntegrationError, NumericalError, ArithmeticError, FloatingPointError) as err:
        diag = {"error": type(err).__name__, "message": str(err), "scenario": cfg.scenario}
        last = getattr(err, "last_state", None)
        if last is not None:
            diag["last_time"] = float(last.t)
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "diagnostic.json").write_text(json.dumps(diag, indent=2))
        print(json.dumps(diag), file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(_jsonable(report), sort_keys=True))
    return EXIT_OK
