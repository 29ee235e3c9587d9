"""The trilinear resonant operator on torus sequences.

    R(f, g, h)_p = sum_{(p, q, r, s) in Gamma_0} f_q conj(g_r) h_s,

where Gamma_0 collects the quadruples with p - q + r - s = 0 and
p^2 - q^2 + r^2 - s^2 = 0.  Sequences are arrays over modes ``-P..P``; sums are
truncated to that box.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral import norm_h


def momentum(p, q, r, s):
    return p - q + r - s


def resonance(p, q, r, s):
    return p * p - q * q + r * r - s * s


def gamma0_membership(p, q, r, s):
    """True iff ``(p, q, r, s)`` lies in Gamma_0 (works elementwise on arrays)."""
    return (momentum(p, q, r, s) == 0) & (resonance(p, q, r, s) == 0)


def pair_membership(p, q, r, s):
    """The one-dimensional characterisation ``{p, r} == {q, s}``."""
    return ((p == q) & (r == s)) | ((p == s) & (r == q))


def conv_membership(p, q, r, s):
    """Membership of the potential-perturbed set: momentum and ``{|p|,|r|} == {|q|,|s|}``."""
    ap, aq, ar, as_ = (np.abs(v) for v in (p, q, r, s))
    return (momentum(p, q, r, s) == 0) & pair_membership(ap, aq, ar, as_)


def enumerate_gamma0(values) -> list[tuple[int, int, int, int]]:
    """Exhaustive list of Gamma_0 members with all entries drawn from ``values``."""
    return [quad for quad in itertools.product(values, repeat=4) if gamma0_membership(*quad)]


@lru_cache(maxsize=32)
def _box_quadruples(P: int) -> tuple[np.ndarray, ...]:
    modes = np.arange(-P, P + 1)
    p, q, r, s = (g.ravel() for g in np.meshgrid(modes, modes, modes, modes, indexing="ij"))
    keep = gamma0_membership(p, q, r, s)
    return tuple(v[keep] + P for v in (p, q, r, s))


def _check(*seqs: np.ndarray) -> int:
    n = seqs[0].shape[-1]
    if n % 2 != 1:
        raise ValueError(f"sequence length must be odd (modes -P..P), got {n}")
    for s in seqs[1:]:
        if s.shape[-1] != n:
            raise ValueError(f"grid mismatch: sequence lengths {n} and {s.shape[-1]}")
    return (n - 1) // 2


def R_bruteforce(f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Sum over every in-box quadruple passing the Gamma_0 test; O(P^3) terms."""
    f, g, h = (np.asarray(v, dtype=complex) for v in (f, g, h))
    P = _check(f, g, h)
    ip, iq, ir, is_ = _box_quadruples(P)
    out = np.zeros(2 * P + 1, dtype=complex)
    np.add.at(out, ip, f[iq] * np.conj(g[ir]) * h[is_])
    return out


def R_closed(f: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """O(P) evaluation along the last axis; leading axes broadcast (e.g. one row per xi)."""
    f, g, h = (np.asarray(v, dtype=complex) for v in (f, g, h))
    _check(f, g, h)
    gc = np.conj(g)
    gh = np.sum(gc * h, axis=-1, keepdims=True)
    fg = np.sum(f * gc, axis=-1, keepdims=True)
    return f * gh + h * fg - f * gc * h


@dataclass
class BoundReport:
    """Ratios of ``||R||`` to the trilinear bounds (each should be <= 1)."""

    l2_norm: float
    l2_bound: float
    l2_ratio: float
    h_ratios: dict[float, float]

    @property
    def max_ratio(self) -> float:
        return max([self.l2_ratio, *self.h_ratios.values()])


def _ratio(value: float, bound: float) -> float:
    if bound == 0:
        return 0.0 if value == 0 else np.inf
    return value / bound


def lemma_bound_check(f, g, h, nus=(0, 1, 2), constant: float = 3.0) -> BoundReport:
    """Compare ``R(f, g, h)`` against the l^2 and h^nu trilinear estimates.

    The l^2 bound is ``constant * min_sigma |a1|_{l2} |a2|_{h1} |a3|_{h1}`` and the
    h^nu bound ``constant * sum_sigma |a1|_{h^nu} |a2|_{h1} |a3|_{h1}``, with sigma
    running over the permutations of the three inputs.
    """
    seqs = [np.asarray(v, dtype=complex) for v in (f, g, h)]
    out = R_closed(*seqs)
    perms = list(itertools.permutations(range(3)))
    h1 = [norm_h(v, 1) for v in seqs]

    l2 = norm_h(out, 0)
    l2_bound = constant * min(norm_h(seqs[i], 0) * h1[j] * h1[k] for i, j, k in perms)
    h_ratios = {}
    for nu in nus:
        bound = constant * sum(norm_h(seqs[i], nu) * h1[j] * h1[k] for i, j, k in perms)
        h_ratios[nu] = _ratio(norm_h(out, nu), bound)
    return BoundReport(l2, l2_bound, _ratio(l2, l2_bound), h_ratios)
