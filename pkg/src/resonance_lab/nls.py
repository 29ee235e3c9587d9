"""Split-step solver for the coupled cubic system on the truncated cylinder.

    i dU/dt + Lap U = |V|^2 U,    i dV/dt + Lap V = |U|^2 V

Linear substeps are exact Fourier multipliers ``exp(-i d (xi^2 + p^2 + Vhat_p))``.
The nonlinear subsystem leaves ``|U|`` and ``|V|`` pointwise invariant, so its
exact flow is the phase rotation ``U exp(-i d |V|^2)``, ``V exp(-i d |U|^2)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .field import ResonantField, evolve_resonant
from .reduced import IntegratorConfig
from .resonant import R_closed
from .spectral import (DEFAULT_N, EdgeMassWarning, LineGrid, ProductField, TorusGrid,
                       check_edges, norm_HN, norm_L2, to_mixed)

SERIES_COLUMNS = ("t", "mass_U", "mass_V", "H1_sum", "H6_sum", "H12_sum",
                  "Linfty_H1y_U", "Linfty_H1y_V")


class NumericalError(RuntimeError):
    """Non-finite values appeared; ``last_state`` is the last finite state."""

    def __init__(self, message: str, last_state: "NlsState"):
        super().__init__(message)
        self.last_state = last_state


def default_potential(torus: TorusGrid) -> np.ndarray:
    return 1.0 / (1.0 + torus.modes.astype(float) ** 2)


@dataclass
class StepConfig:
    """``potential`` is a table ``Vhat_p`` over modes ``-P..P``, or None."""

    dt: float
    splitting: str = "strang"
    dealias: bool = False
    potential: np.ndarray | None = None
    nonlinear: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.splitting != "strang":
            raise ValueError(f"unsupported splitting {self.splitting!r}")
        if self.potential is not None:
            self.potential = np.asarray(self.potential, dtype=float)


@dataclass
class NlsState:
    U: ProductField
    V: ProductField
    t: float = 0.0

    def __post_init__(self):
        self.U = self.U.physical()
        self.V = self.V.physical()
        if not self.U.same_grid(self.V):
            raise ValueError("U and V must share a grid")

    @property
    def line(self) -> LineGrid:
        return self.U.line

    @property
    def torus(self) -> TorusGrid:
        return self.U.torus


def _fft_order_symbols(line: LineGrid, torus: TorusGrid, potential=None):
    xi = 2 * np.pi * np.fft.fftfreq(line.n_x, line.dx)
    p = np.fft.ifftshift(torus.modes)
    lam = xi[:, None] ** 2 + p[None, :] ** 2
    if potential is not None:
        pot = np.asarray(potential, dtype=float)
        if pot.shape != (torus.n_y,):
            raise ValueError(f"potential table must have {torus.n_y} entries")
        lam = lam + np.fft.ifftshift(pot)[None, :]
    return xi, p, lam


def _dealias_mask(line: LineGrid, torus: TorusGrid) -> np.ndarray:
    xi, p, _ = _fft_order_symbols(line, torus)
    keep_x = np.abs(xi) <= (2 / 3) * line.xi_max
    keep_y = np.abs(p) <= (2 / 3) * torus.P
    return (keep_x[:, None] & keep_y[None, :]).astype(float)


def _propagate(data: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(np.fft.fft2(data) * multiplier)


def _free(field: ProductField, delta: float, potential=None) -> ProductField:
    _, _, lam = _fft_order_symbols(field.line, field.torus, potential)
    phys = field.physical()
    return phys.with_data(_propagate(phys.data, np.exp(-1j * delta * lam)))


def linear_step(state: NlsState, delta: float, potential=None) -> NlsState:
    """Exact free evolution over ``delta`` (optionally with the torus potential)."""
    return NlsState(_free(state.U, delta, potential), _free(state.V, delta, potential),
                    state.t + delta)


def nonlinear_step(state: NlsState, delta: float) -> NlsState:
    U, V = state.U.data, state.V.data
    newU = U * np.exp(-1j * delta * np.abs(V) ** 2)
    newV = V * np.exp(-1j * delta * np.abs(U) ** 2)
    return NlsState(state.U.with_data(newU), state.V.with_data(newV), state.t + delta)


def strang_step(state: NlsState, dt: float, cfg: StepConfig | None = None) -> NlsState:
    """Half linear, full nonlinear, half linear."""
    pot = cfg.potential if cfg else None
    half = linear_step(state, dt / 2, pot)
    if cfg is None or cfg.nonlinear:
        mid = nonlinear_step(half, dt)
    else:
        mid = half
    if cfg is not None and cfg.dealias:
        mask = _dealias_mask(state.line, state.torus)
        mid = NlsState(mid.U.with_data(_propagate(mid.U.data, mask)),
                       mid.V.with_data(_propagate(mid.V.data, mask)))
    out = linear_step(mid, dt / 2, pot)
    out.t = state.t + dt
    return out


def linfty_h1y(field: ProductField) -> float:
    """``max_x ||F(x, .)||_{H^1(T)}``."""
    phys = field.physical()
    coeffs = np.fft.fftshift(np.fft.fft(phys.data, axis=1), axes=1) / phys.torus.n_y
    weight = 1.0 + phys.torus.modes**2
    return float(np.sqrt(2 * np.pi * np.max(np.sum(weight * np.abs(coeffs) ** 2, axis=1))))


def monitor_row(state: NlsState) -> tuple:
    U, V = state.U, state.V
    hs = [norm_HN(U, s) + norm_HN(V, s) for s in (1, 6, 12)]
    return (float(state.t), norm_L2(U), norm_L2(V), *hs, linfty_h1y(U), linfty_h1y(V))


@dataclass
class NlsReport:
    rows: list = field(default_factory=list)

    @property
    def columns(self) -> tuple:
        return SERIES_COLUMNS

    def column(self, name: str) -> np.ndarray:
        return np.array([r[SERIES_COLUMNS.index(name)] for r in self.rows])

    @property
    def mass_drift(self) -> float:
        mu, mv = self.column("mass_U"), self.column("mass_V")
        return float(max(np.max(np.abs(mu - mu[0])) / mu[0] if mu[0] else 0.0,
                         np.max(np.abs(mv - mv[0])) / mv[0] if mv[0] else 0.0))


def evolve_nls(state: NlsState, t_end: float, cfg: StepConfig, record_every: int | None = None,
               monitor=monitor_row):
    """Advance by Strang steps to ``t_end``; returns ``(state, NlsReport)``.

    Consecutive linear half steps are fused.  The report holds ``monitor(state)``
    rows at the start, every ``record_every`` steps, and the end.
    """
    if t_end < state.t:
        raise ValueError(f"t_end={t_end} precedes state time {state.t}")
    report = NlsReport()
    if monitor is not None:
        report.rows.append(monitor(state))
    n = int(np.ceil((t_end - state.t) / cfg.dt - 1e-9))
    if n == 0:
        return state, report
    dt = (t_end - state.t) / n
    _, _, lam = _fft_order_symbols(state.line, state.torus, cfg.potential)
    half = np.exp(-0.5j * dt * lam)
    mask = _dealias_mask(state.line, state.torus) if cfg.dealias else 1.0
    after = half * mask

    def synced(u_hat, v_hat, t):
        U = state.U.with_data(np.fft.ifft2(u_hat))
        V = state.V.with_data(np.fft.ifft2(v_hat))
        return NlsState(U, V, t)

    u_hat = np.fft.fft2(state.U.data) * half
    v_hat = np.fft.fft2(state.V.data) * half
    last = state
    for k in range(1, n + 1):
        U = np.fft.ifft2(u_hat)
        V = np.fft.ifft2(v_hat)
        if cfg.nonlinear:
            U, V = U * np.exp(-1j * dt * np.abs(V) ** 2), V * np.exp(-1j * dt * np.abs(U) ** 2)
        u_hat = np.fft.fft2(U) * after
        v_hat = np.fft.fft2(V) * after
        t = state.t + k * dt
        if not (np.all(np.isfinite(u_hat)) and np.all(np.isfinite(v_hat))):
            raise NumericalError(f"non-finite field at t={t}", last)
        record = monitor is not None and record_every and k % record_every == 0
        if k == n or record:
            last = synced(u_hat, v_hat, t)
            if record and k != n:
                report.rows.append(monitor(last))
        if k < n:
            u_hat *= half
            v_hat *= half
    if monitor is not None:
        report.rows.append(monitor(last))
    last.t = t_end
    return last, report


def extract_profiles(state: NlsState, potential=None) -> tuple[ProductField, ProductField]:
    """Profiles ``exp(-i t Lap) U`` and ``exp(-i t Lap) V``."""
    back = linear_step(state, -state.t, potential)
    return back.U, back.V


def N_t(F: ProductField, G: ProductField, H: ProductField, t: float) -> ProductField:
    """``exp(-itLap)(exp(itLap)F * conj(exp(itLap)G) * exp(itLap)H)``, physical.

    An :class:`EdgeMassWarning` is emitted when a propagated factor reaches the box edge.
    """
    uF, uG, uH = (_free(f, t) for f in (F, G, H))
    for name, f in zip("FGH", (uF, uG, uH)):
        check_edges(f, what=f"N_t: propagated {name}")
    prod = uF.with_data(uF.data * np.conj(uG.data) * uH.data)
    return _free(prod, -t)


def spectral_extent(field: ProductField, rel: float = 1e-10) -> float:
    """Largest ``|xi|`` where ``|F_hat|`` exceeds ``rel`` times its maximum."""
    m = np.abs(field.mixed().data)
    peak = m.max()
    if peak == 0:
        return 0.0
    rows = np.flatnonzero(m.max(axis=1) > rel * peak)
    return float(np.max(np.abs(field.line.xi[rows])))


def spatial_width(field: ProductField, rel: float = 1e-10) -> float:
    """Length of the smallest x-interval outside which ``|F| <= rel * max|F|``."""
    d = np.abs(field.physical().data).max(axis=1)
    peak = d.max()
    if peak == 0:
        return 0.0
    idx = np.flatnonzero(d > rel * peak)
    x = field.line.x
    return float(x[idx[-1]] - x[idx[0]] + field.line.dx)


@dataclass
class DecompositionCurve:
    t: np.ndarray
    c: np.ndarray
    residual: np.ndarray
    remainder: np.ndarray

    @property
    def ct_over_pi(self) -> np.ndarray:
        return self.c * self.t / np.pi


def _inner(a, b, line):
    return (2 * np.pi) ** 2 * line.dxi * np.vdot(a, b)


def decomposition_diagnostic(F: ProductField, G: ProductField, H: ProductField, t_list,
                             k_max: float | None = None, width: float | None = None):
    """Fit ``N^t ~ c(t) R`` for each ``t`` and measure the remainder.

    ``c(t)`` minimises ``||N^t - c R||``, ``residual = ||N^t - c R|| / ||c R||`` and
    ``remainder = t ||N^t - (pi/t) R|| / ||R||``.  Times whose dispersed packets
    could wrap, ``2 k_max t + width >= L``, are refused.
    """
    fields = [f.physical() for f in (F, G, H)]
    line = fields[0].line
    if k_max is None:
        k_max = max(spectral_extent(f) for f in fields)
    if width is None:
        width = max(spatial_width(f) for f in fields)
    t_list = np.asarray(t_list, dtype=float)
    horizon = (line.L - width) / (2 * k_max) if k_max > 0 else np.inf
    if np.any(t_list <= 0) or np.any(t_list >= horizon):
        raise ValueError(f"times must lie in (0, {horizon:.4g}) to avoid wrap-around "
                         f"(k_max={k_max:.3g}, width={width:.3g}, L={line.L})")
    mixed = [to_mixed(f).data for f in fields]
    R = R_closed(*mixed)
    rnorm = np.sqrt(_inner(R, R, line).real)
    cs, res, rem = [], [], []
    for t in t_list:
        N = to_mixed(N_t(*fields, t)).data
        c = _inner(R, N, line) / _inner(R, R, line)
        cs.append(c)
        res.append(np.sqrt(_inner(N - c * R, N - c * R, line).real) / (abs(c) * rnorm))
        E = N - (np.pi / t) * R
        rem.append(t * np.sqrt(_inner(E, E, line).real) / rnorm)
    return DecompositionCurve(t_list, np.array(cs), np.array(res), np.array(rem))


@dataclass
class ScatteringReport:
    t0: float
    t1: float
    err_res: float
    err_frozen: float
    decay_variation: float
    sobolev_growth: dict
    mass_drift: float
    series: NlsReport

    @property
    def ratio(self) -> float:
        return self.err_res / self.err_frozen if self.err_frozen else np.inf


def scattering_diagnostic(initial: NlsState, t0: float, t1: float, cfg: StepConfig,
                          resonant_cfg: IntegratorConfig | None = None, N: float = DEFAULT_N,
                          record_every: int = 50) -> ScatteringReport:
    """Compare the profile at ``t1`` with the resonant flow seeded by the profile at ``t0``.

    The resonant system, started from ``F(t0)`` at ``tau = pi ln t0``, is evolved to
    ``pi ln t1``.  ``err_res`` is the ``H^N`` distance of ``(F, G)(t1)`` to it and
    ``err_frozen`` the distance between the profiles at ``t0`` and ``t1``.
    """
    if not (t1 > t0 >= 1):
        raise ValueError("need t1 > t0 >= 1")
    resonant_cfg = resonant_cfg or IntegratorConfig(rtol=1e-10, atol=1e-14)
    s0, rep0 = evolve_nls(initial, t0, cfg, record_every)
    F0, G0 = extract_profiles(s0, cfg.potential)
    s1, rep1 = evolve_nls(s0, t1, cfg, record_every)
    F1, G1 = extract_profiles(s1, cfg.potential)

    W0 = ResonantField(F0, G0, np.pi * np.log(t0))
    W1, _ = evolve_resonant(W0, np.pi * np.log(t1), resonant_cfg, sigmas=(0,), batch=True)

    def dist(a, b):
        return norm_HN(a.mixed().with_data(a.mixed().data - b.mixed().data), N)

    err_res = dist(F1, W1.W_U) + dist(G1, W1.W_V)
    err_frozen = dist(F1, F0) + dist(G1, G0)

    series = NlsReport(rep0.rows[:-1] + rep1.rows)
    t = series.column("t")
    window = (t >= t0) & (t <= t1)
    decay = np.maximum(series.column("Linfty_H1y_U"), series.column("Linfty_H1y_V"))
    decay = decay[window] * np.sqrt(1 + t[window])
    growth = {s: _safe_ratio(np.max(series.column(f"H{s}_sum")), series.column(f"H{s}_sum")[0])
              for s in (1, 6, 12)}
    return ScatteringReport(t0, t1, float(err_res), float(err_frozen),
                            _safe_ratio(decay.max(), decay.min()), growth, series.mass_drift, series)


def _safe_ratio(a, b) -> float:
    if b == 0:
        return 1.0 if a == 0 else float("inf")
    return float(a / b)


def mode_powers(field: ProductField) -> np.ndarray:
    """``||F_p||_{L^2(R)}^2`` for every torus mode ``p``."""
    m = field.mixed()
    return (2 * np.pi) ** 2 * m.line.dxi * np.sum(np.abs(m.data) ** 2, axis=0)


def uniform_beating_state(spec, line: LineGrid, P: int | None = None) -> NlsState:
    """x-uniform two-mode data; the box is then a torus and beating occurs in time ``~ 1/eps^2``."""
    from .beating import build_two_mode_state

    seed = build_two_mode_state(spec, P)
    torus = TorusGrid(seed.P)
    wave = lambda c: ProductField.from_function(
        line, torus, lambda X, Y: sum(c[torus.index(p)] * np.exp(1j * p * Y) for p in torus.modes))
    return NlsState(wave(seed.a), wave(seed.b), 0.0)


def exchange_series(state: NlsState, t_end: float, cfg: StepConfig, q: int,
                    record_every: int = 10):
    """Times and fraction of U's mass carried by mode ``q``."""
    torus = state.torus

    def monitor(s):
        w = mode_powers(s.U)
        return (s.t, w[torus.index(q)] / w.sum())

    _, rep = evolve_nls(state, t_end, cfg, record_every, monitor=monitor)
    arr = np.array(rep.rows)
    return arr[:, 0], arr[:, 1]
