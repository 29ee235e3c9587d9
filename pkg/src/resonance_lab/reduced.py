"""Reduced resonant system on torus sequences.

    i da/dt = R(b, b, a),    i db/dt = R(a, a, b)

with invariant monitoring (per-mode sums, I, J, H and weighted Sobolev sums).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .resonant import R_closed, _check, gamma0_membership

DEFAULT_S_LIST = (-1, 0, 1, 2, 12)
METHODS = ("rk45", "rk4")


class IntegrationError(RuntimeError):
    """Integration failed; ``last_state`` is the last accepted state."""

    def __init__(self, message: str, last_state: "CoupledState"):
        super().__init__(message)
        self.last_state = last_state


@dataclass
class CoupledState:
    a: np.ndarray
    b: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=complex)
        self.b = np.asarray(self.b, dtype=complex)
        _check(self.a, self.b)

    @property
    def P(self) -> int:
        return (self.a.shape[-1] - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.P, self.P + 1)

    def conjugate(self) -> "CoupledState":
        return CoupledState(np.conj(self.a), np.conj(self.b), self.t)

    def pack(self) -> np.ndarray:
        """Interleaved (re, im) real vector of ``(a, b)``."""
        return np.concatenate([self.a, self.b]).view(float).copy()

    @classmethod
    def unpack(cls, y: np.ndarray, t: float = 0.0) -> "CoupledState":
        z = np.ascontiguousarray(y, dtype=float).view(complex)
        n = z.shape[-1] // 2
        return cls(z[..., :n], z[..., n:], t)


@dataclass
class IntegratorConfig:
    """``rk45`` is the adaptive Dormand-Prince 5(4) pair; ``rk4`` uses a fixed ``step``."""

    method: str = "rk45"
    rtol: float = 1e-10
    atol: float = 1e-13
    max_step: float = np.inf
    step: float | None = None
    dense_output: bool = False
    n_samples: int = 101
    s_list: tuple = DEFAULT_S_LIST

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.method == "rk4" and not (self.step and self.step > 0):
            raise ValueError("rk4 needs a positive step")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")


def rhs(state: CoupledState) -> tuple[np.ndarray, np.ndarray]:
    a, b = state.a, state.b
    return -1j * R_closed(b, b, a), -1j * R_closed(a, a, b)


def _rhs_packed(t, y):
    s = CoupledState.unpack(y)
    da, db = rhs(s)
    return np.concatenate([da, db]).view(float)


@dataclass
class InvariantSnapshot:
    I: float
    J: float
    S: complex
    H: float
    per_mode: np.ndarray
    hs: dict


def hs_sum(a: np.ndarray, b: np.ndarray, s: float) -> float:
    """``sum (1 + p^2)^s (|a_p|^2 + |b_p|^2)``."""
    n = a.shape[-1]
    p = np.arange(n) - n // 2
    return float(np.sum((1.0 + p**2) ** s * (np.abs(a) ** 2 + np.abs(b) ** 2)))


def hamiltonian(a: np.ndarray, b: np.ndarray) -> float:
    """``I J + |S|^2 - sum |a_n|^2 |b_n|^2``."""
    I = np.sum(np.abs(a) ** 2)
    J = np.sum(np.abs(b) ** 2)
    S = np.sum(a * np.conj(b))
    return float(I * J + abs(S) ** 2 - np.sum(np.abs(a) ** 2 * np.abs(b) ** 2))


def hamiltonian_bruteforce(a: np.ndarray, b: np.ndarray) -> complex:
    """Direct quadruple sum of ``a_p conj(a_q) b_r conj(b_s)`` over in-box Gamma_0."""
    P = _check(a, b)
    m = np.arange(-P, P + 1)
    p, q, r, s = np.meshgrid(m, m, m, m, indexing="ij")
    keep = gamma0_membership(p, q, r, s)
    ip, iq, ir, is_ = (v[keep] + P for v in (p, q, r, s))
    return complex(np.sum(a[ip] * np.conj(a[iq]) * b[ir] * np.conj(b[is_])))


def invariants(state: CoupledState, s_list=DEFAULT_S_LIST) -> InvariantSnapshot:
    a, b = state.a, state.b
    return InvariantSnapshot(
        I=float(np.sum(np.abs(a) ** 2)),
        J=float(np.sum(np.abs(b) ** 2)),
        S=complex(np.sum(a * np.conj(b))),
        H=hamiltonian(a, b),
        per_mode=np.abs(a) ** 2 + np.abs(b) ** 2,
        hs={s: hs_sum(a, b, s) for s in s_list},
    )


def _rel_drift(series: np.ndarray, scale: float | None = None) -> float:
    series = np.asarray(series, dtype=float)
    ref = abs(series[0]) if scale is None else scale
    diff = np.max(np.abs(series - series[0]))
    return float(diff / ref) if ref > 0 else float(diff)


@dataclass
class InvariantReport:
    t: np.ndarray
    I: np.ndarray
    J: np.ndarray
    S: np.ndarray
    H: np.ndarray
    per_mode: np.ndarray
    hs: dict
    drift: dict = field(default_factory=dict)
    trajectory: "Trajectory | None" = None

    @classmethod
    def from_states(cls, t, states, s_list=DEFAULT_S_LIST) -> "InvariantReport":
        snaps = [invariants(s, s_list) for s in states]
        rep = cls(
            t=np.asarray(t, dtype=float),
            I=np.array([s.I for s in snaps]),
            J=np.array([s.J for s in snaps]),
            S=np.array([s.S for s in snaps]),
            H=np.array([s.H for s in snaps]),
            per_mode=np.array([s.per_mode for s in snaps]),
            hs={k: np.array([s.hs[k] for s in snaps]) for k in s_list},
        )
        rep.drift = rep._drifts()
        return rep

    def _drifts(self) -> dict:
        total = self.I[0] + self.J[0]
        per_mode = np.max(np.abs(self.per_mode - self.per_mode[0]))
        out = {
            "I": _rel_drift(self.I),
            "J": _rel_drift(self.J),
            "H": _rel_drift(self.H),
            "per_mode": float(per_mode / total) if total > 0 else float(per_mode),
        }
        for s, v in self.hs.items():
            out[f"h{s}"] = _rel_drift(v)
        return out

    @property
    def max_drift(self) -> float:
        return max(self.drift.values())


class Trajectory:
    """Cubic Hermite interpolant through the integrator's accepted steps."""

    def __init__(self, t: np.ndarray, y: np.ndarray):
        self.t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        dydt = np.array([_rhs_packed(ti, yi) for ti, yi in zip(self.t, y)])
        if len(self.t) == 1:
            self._const = y[0]
            self._spline = None
        else:
            self._spline = CubicHermiteSpline(self.t, y, dydt, axis=0)

    @property
    def t_min(self) -> float:
        return float(self.t[0])

    @property
    def t_max(self) -> float:
        return float(self.t[-1])

    def packed(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        span = 1e-12 * max(1.0, abs(self.t_max))
        if np.any(t < self.t_min - span) or np.any(t > self.t_max + span):
            raise ValueError(f"time outside dense-output range [{self.t_min}, {self.t_max}]")
        if self._spline is None:
            return np.broadcast_to(self._const, t.shape + self._const.shape).copy()
        return self._spline(np.clip(t, self.t_min, self.t_max))

    def __call__(self, t: float) -> CoupledState:
        return CoupledState.unpack(self.packed(t), float(t))


def _rk4(y0, t0, t_end, h):
    n = max(1, int(np.ceil((t_end - t0) / h - 1e-12)))
    ts = np.linspace(t0, t_end, n + 1)
    ys = np.empty((n + 1, y0.size))
    ys[0] = y = y0
    for k in range(n):
        t, dt = ts[k], ts[k + 1] - ts[k]
        # blow-up is caught by the finiteness check below
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = _rhs_packed(t, y)
            k2 = _rhs_packed(t + dt / 2, y + dt / 2 * k1)
            k3 = _rhs_packed(t + dt / 2, y + dt / 2 * k2)
            k4 = _rhs_packed(t + dt, y + dt * k3)
            y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state at t={ts[k + 1]}",
                                   CoupledState.unpack(ys[k], float(t)))
        ys[k + 1] = y
    return ts, ys


def integrate(state: CoupledState, t_end: float, cfg: IntegratorConfig):
    """Raw integration; returns accepted step times and packed states."""
    if t_end < state.t:
        raise ValueError(f"t_end={t_end} precedes state time {state.t}")
    y0 = state.pack()
    if t_end == state.t:
        return np.array([state.t]), y0[None, :]
    if cfg.method == "rk4":
        return _rk4(y0, state.t, t_end, cfg.step)
    sol = solve_ivp(_rhs_packed, (state.t, t_end), y0, method="RK45",
                    rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step)
    if sol.status != 0:
        last = CoupledState.unpack(sol.y[:, -1], float(sol.t[-1]))
        raise IntegrationError(f"integration failed at t={sol.t[-1]}: {sol.message}", last)
    return sol.t, sol.y.T


def evolve(state: CoupledState, t_end: float, cfg: IntegratorConfig | None = None):
    """Integrate to ``t_end``; returns ``(final_state, report)``.

    The report samples invariants at ``cfg.n_samples`` evenly spaced times; its
    drift statistics cover every accepted step.  With ``cfg.dense_output`` the
    report carries a :class:`Trajectory` in ``report.trajectory``.
    """
    cfg = cfg or IntegratorConfig()
    ts, ys = integrate(state, t_end, cfg)
    steps = [CoupledState.unpack(y, t) for t, y in zip(ts, ys)]
    traj = Trajectory(ts, ys)
    report = InvariantReport.from_states(ts, steps, cfg.s_list)
    if len(ts) > 1:
        samples = np.linspace(state.t, t_end, cfg.n_samples)
        sampled = InvariantReport.from_states(samples, [traj(t) for t in samples], cfg.s_list)
        sampled.drift = report.drift
        report = sampled
    report.trajectory = traj if cfg.dense_output else None
    return steps[-1], report
