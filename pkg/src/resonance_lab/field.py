"""Resonant system on R x T.

In the mixed representation the resonant nonlinearity acts on each xi-row
separately, so every row obeys the reduced system with xi as a parameter.
Separated data ``phi(xi) * a_p(0)`` is then solved in closed form by
``phi(xi) a_p(phi(xi)^2 tau)``.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .beating import BeatingSpec, build_two_mode_state
from .reduced import (CoupledState, IntegrationError, IntegratorConfig, Trajectory,
                      evolve)
from .resonant import R_closed
from .spectral import LineGrid, ProductField, TorusGrid, norm_HN, norm_Splus


class ColumnIntegrationError(IntegrationError):
    """Integration of one xi-row failed."""

    def __init__(self, message, last_state, xi_index: int):
        super().__init__(f"xi index {xi_index}: {message}", last_state)
        self.xi_index = xi_index


class SmallnessWarning(UserWarning):
    """Initial data exceeds the smallness threshold of the scattering theory."""


@dataclass
class ResonantField:
    W_U: ProductField
    W_V: ProductField
    tau: float = 0.0

    def __post_init__(self):
        self.W_U = self.W_U.mixed()
        self.W_V = self.W_V.mixed()
        if not self.W_U.same_grid(self.W_V):
            raise ValueError("W_U and W_V must share a grid")

    @property
    def line(self) -> LineGrid:
        return self.W_U.line

    @property
    def torus(self) -> TorusGrid:
        return self.W_U.torus

    def column(self, j: int) -> CoupledState:
        return CoupledState(self.W_U.data[j], self.W_V.data[j], self.tau)


def sobolev_sum(field: ResonantField, sigma: float) -> float:
    """``||W_U||_{H^sigma}^2 + ||W_V||_{H^sigma}^2``."""
    return norm_HN(field.W_U, sigma) ** 2 + norm_HN(field.W_V, sigma) ** 2


@dataclass
class ResonantReport:
    sigmas: tuple
    initial: dict
    final: dict
    drift: dict = field(default_factory=dict)
    steps: int = 0


def _rows_rhs(shape):
    def f(t, y):
        z = y.view(complex).reshape(shape)
        u, v = z[0], z[1]
        out = np.stack([-1j * R_closed(v, v, u), -1j * R_closed(u, u, v)])
        return out.reshape(-1).view(float)
    return f


def _evolve_batch(U, V, tau0, tau_end, cfg):
    shape = (2,) + U.shape
    y0 = np.stack([U, V]).reshape(-1).view(float).copy()
    sol = solve_ivp(_rows_rhs(shape), (tau0, tau_end), y0, method="RK45",
                    rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step, t_eval=[tau_end])
    if sol.status != 0:
        raise IntegrationError(sol.message, CoupledState(U[0], V[0], tau0))
    z = sol.y[:, -1].view(complex).reshape(shape)
    return z[0], z[1], sol.nfev


def evolve_resonant(field: ResonantField, tau_end: float, cfg: IntegratorConfig | None = None,
                    sigmas=(0, 1, 12), n_jobs: int = 1, batch: bool = False):
    """Evolve every xi-row to ``tau_end``; returns ``(field, ResonantReport)``.

    Rows are integrated independently (``batch=False``) so each row's result is
    independent of scheduling.  ``batch=True`` integrates all nonzero rows as a
    single system, which is much faster for wide grids but shares step control.
    Identically zero rows stay zero and are skipped.
    """
    cfg = cfg or IntegratorConfig()
    if tau_end < field.tau:
        raise ValueError(f"tau_end={tau_end} precedes field time {field.tau}")
    U, V = field.W_U.data, field.W_V.data
    active = np.flatnonzero(np.any(U != 0, axis=1) | np.any(V != 0, axis=1))
    newU, newV = U.copy(), V.copy()

    if batch and len(active):
        newU[active], newV[active], _ = _evolve_batch(U[active], V[active], field.tau, tau_end, cfg)
    else:
        def run(j):
            try:
                final, _ = evolve(field.column(j), tau_end, cfg)
            except IntegrationError as err:
                raise ColumnIntegrationError(str(err), err.last_state, int(j)) from err
            return j, final

        with ThreadPoolExecutor(max_workers=max(1, n_jobs)) as pool:
            for j, final in pool.map(run, active):
                newU[j], newV[j] = final.a, final.b

    out = ResonantField(field.W_U.with_data(newU), field.W_V.with_data(newV), tau_end)
    initial = {s: sobolev_sum(field, s) for s in sigmas}
    final = {s: sobolev_sum(out, s) for s in sigmas}
    drift = {s: abs(final[s] - initial[s]) / initial[s] if initial[s] else abs(final[s])
             for s in sigmas}
    return out, ResonantReport(tuple(sigmas), initial, final, drift)


def _smooth_step(u):
    u = np.asarray(u, dtype=float)
    f = lambda v: np.where(v > 0, np.exp(-1.0 / np.where(v > 0, v, 1.0)), 0.0)
    return f(u) / (f(u) + f(1.0 - u))


def plateau_envelope(xi: np.ndarray, interval=(-0.5, 0.5), width: float = 0.5) -> np.ndarray:
    """Smooth compactly supported bump: exactly 1 on ``interval``, 0 beyond ``width`` of it."""
    lo, hi = interval
    if not (hi > lo and width > 0):
        raise ValueError("need a nonempty interval and positive transition width")
    xi = np.asarray(xi, dtype=float)
    return _smooth_step((xi - (lo - width)) / width) * _smooth_step(((hi + width) - xi) / width)


@dataclass
class TransferSpec:
    """Envelope samples on the xi-grid and the seed data for every row."""

    envelope: np.ndarray
    seed: CoupledState
    interval: tuple = (-0.5, 0.5)

    def __post_init__(self):
        self.envelope = np.asarray(self.envelope)
        if np.iscomplexobj(self.envelope) or not np.all(np.isfinite(self.envelope)):
            raise ValueError("envelope must be real and finite")

    def plateau_rows(self, line: LineGrid) -> np.ndarray:
        lo, hi = self.interval
        return np.flatnonzero((line.xi >= lo) & (line.xi <= hi))

    def initial_field(self, line: LineGrid) -> ResonantField:
        if self.envelope.shape != (line.n_x,):
            raise ValueError("envelope must be sampled on the xi-grid")
        torus = TorusGrid(self.seed.P)
        U = ProductField.separable(line, torus, self.envelope, self.seed.a)
        V = ProductField.separable(line, torus, self.envelope, self.seed.b)
        return ResonantField(U, V, 0.0)


def seed_trajectory(spec: TransferSpec, tau: float, cfg: IntegratorConfig | None = None) -> Trajectory:
    cfg = replace(cfg or IntegratorConfig(), dense_output=True)
    t_end = float(np.max(spec.envelope**2)) * tau
    _, report = evolve(spec.seed, t_end, cfg)
    return report.trajectory


def transfer_scaling_law(spec: TransferSpec, line: LineGrid, tau: float,
                         trajectory: Trajectory | None = None,
                         cfg: IntegratorConfig | None = None) -> ResonantField:
    """Closed-form field ``phi(xi) a_p(phi(xi)^2 tau)`` from a dense seed trajectory."""
    traj = trajectory or seed_trajectory(spec, tau, cfg)
    phi = spec.envelope
    times = phi**2 * tau
    if times.max(initial=0.0) > traj.t_max * (1 + 1e-12) + 1e-300:
        raise ValueError(f"dense output ends at {traj.t_max}, need {times.max()}")
    packed = traj.packed(times)
    states = CoupledState.unpack(packed)
    torus = TorusGrid(spec.seed.P)
    U = ProductField.from_mixed(line, torus, phi[:, None] * states.a)
    V = ProductField.from_mixed(line, torus, phi[:, None] * states.b)
    return ResonantField(U, V, tau)


def build_beating_field(spec: BeatingSpec, line: LineGrid, envelope: np.ndarray,
                        P: int | None = None, threshold: float | None = None):
    """Initial resonant field ``phi(xi) * (a(0), b(0))`` for two-mode beating data.

    Returns ``(field, splus)`` where ``splus = ||W_U||_{S+} + ||W_V||_{S+}``; a
    :class:`SmallnessWarning` is emitted when it exceeds ``threshold`` (default ``eps``).
    """
    seed = build_two_mode_state(spec, P)
    field_ = TransferSpec(envelope, seed).initial_field(line)
    splus = norm_Splus(field_.W_U) + norm_Splus(field_.W_V)
    limit = spec.eps if threshold is None else threshold
    if splus > limit:
        warnings.warn(f"S+ size {splus:.3e} exceeds {limit:.3e}", SmallnessWarning, stacklevel=2)
    return field_, splus
