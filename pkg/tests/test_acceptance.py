"""Acceptance criteria, each at its stated tolerance and time budget."""

import time

import numpy as np
import pytest

from resonance_lab.beating import BeatingSpec, period_ode, period_quadrature, verify_beating
from resonance_lab.cli import load_config, main, run
from resonance_lab.field import TransferSpec, evolve_resonant, plateau_envelope, transfer_scaling_law
from resonance_lab.nls import NlsState, StepConfig, evolve_nls
from resonance_lab.reduced import CoupledState, IntegratorConfig, evolve
from resonance_lab.resonant import (R_bruteforce, R_closed, conv_membership, gamma0_membership,
                                    lemma_bound_check)
from resonance_lab.spectral import LineGrid, ProductField, TorusGrid


def rand_seq(rng, P, decay=0.0):
    n = 2 * P + 1
    w = (1.0 + np.arange(-P, P + 1) ** 2) ** (-decay / 2)
    return w * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def unit_pair(rng, P, norm):
    z = rng.standard_normal((2, 2 * P + 1)) + 1j * rng.standard_normal((2, 2 * P + 1))
    z *= norm / np.linalg.norm(z)
    return CoupledState(z[0], z[1])


def test_c01_operator_oracle(criterion):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        f, g, h = (rand_seq(rng, 8) for _ in range(3))
        ref = R_bruteforce(f, g, h)
        worst = max(worst, np.linalg.norm(R_closed(f, g, h) - ref) / np.linalg.norm(ref))
    elapsed = time.perf_counter() - start
    criterion(1, worst <= 1e-12 and elapsed < 5,
              f"max rel l2 diff {worst:.2e} (<= 1e-12), {elapsed:.2f}s (< 5s)")


def test_c02_trilinear_bound(criterion):
    rng = np.random.default_rng(102)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        P = int(rng.integers(0, 13))
        f, g, h = (rand_seq(rng, P, rng.uniform(0, 4)) * 10.0 ** rng.uniform(-3, 3)
                   for _ in range(3))
        worst = max(worst, lemma_bound_check(f, g, h, nus=(0, 1, 2)).max_ratio)
    elapsed = time.perf_counter() - start
    criterion(2, worst <= 1 and elapsed < 10,
              f"max ratio to bound {worst:.3f} (<= 1), {elapsed:.2f}s (< 10s)")


def test_c03_conservation_suite(criterion):
    state = unit_pair(np.random.default_rng(103), 8, 0.1)
    start = time.perf_counter()
    _, rep = evolve(state, 1000.0, IntegratorConfig(rtol=1e-12, atol=1e-15))
    elapsed = time.perf_counter() - start
    worst = max(rep.drift.values())
    criterion(3, worst <= 1e-8 and elapsed < 30,
              f"max relative drift {worst:.2e} over {sorted(rep.drift)} (<= 1e-8), "
              f"{elapsed:.2f}s (< 30s)")


def test_c04_beating(criterion):
    spec = BeatingSpec(0, 1, 0.1, 0.1)
    e2, g = spec.eps**2, spec.gamma
    start = time.perf_counter()
    rep = verify_beating(spec, horizon=3)
    elapsed = time.perf_counter() - start
    dev = rep.max_deviation / e2
    lo = abs(rep.exchange_min - e2 * g) / (e2 * g)
    hi = abs(rep.exchange_max - e2 * (1 - g)) / (e2 * (1 - g))
    per = abs(rep.observed_period - rep.expected_period) / rep.expected_period
    ok = dev <= 1e-6 and lo <= 1e-3 and hi <= 1e-3 and per <= 1e-3 and elapsed < 120
    criterion(4, ok, f"track {dev:.1e} eps^2, min/max err {lo:.1e}/{hi:.1e}, "
                     f"period err {per:.1e}, {elapsed:.1f}s (< 120s)")


def test_c05_period_cross_validation(criterion):
    start = time.perf_counter()
    worst = max(abs(period_ode(g) - period_quadrature(g)) / period_quadrature(g)
                for g in (0.4, 0.25, 0.1, 0.01))
    elapsed = time.perf_counter() - start
    criterion(5, worst <= 1e-8 and elapsed < 10,
              f"max |ode - quad| / T {worst:.1e} (<= 1e-8), {elapsed:.2f}s (< 10s)")


def test_c06_log_law(criterion):
    start = time.perf_counter()
    gammas = 10.0 ** -np.arange(1, 7)
    ratios = np.array([period_quadrature(g) / abs(np.log(g)) for g in gammas])
    elapsed = time.perf_counter() - start
    width = (ratios.max() - ratios.min()) / ratios.min()
    settled = ratios[-1] <= ratios[-2]
    criterion(6, width < 0.5 and settled and elapsed < 30,
              f"T/|ln g| in [{ratios.min():.3f}, {ratios.max():.3f}], band width {width:.1%} "
              f"(< 50%), non-increasing tail {settled}, {elapsed:.2f}s (< 30s)")


def test_c07_transfer_law(criterion):
    rng = np.random.default_rng(107)
    seed = unit_pair(rng, 4, 1.0)
    line = LineGrid(40.0, 64)
    env = plateau_envelope(line.xi, (-0.5, 0.5), 0.5)
    spec = TransferSpec(env, seed)
    cfg = IntegratorConfig(rtol=1e-10, atol=1e-13)
    start = time.perf_counter()
    direct, _ = evolve_resonant(spec.initial_field(line), 5.0, cfg)
    closed = transfer_scaling_law(spec, line, 5.0, cfg=cfg)
    elapsed = time.perf_counter() - start
    num = np.sqrt(np.sum(np.abs(direct.W_U.data - closed.W_U.data) ** 2
                         + np.abs(direct.W_V.data - closed.W_V.data) ** 2))
    rel = num / np.sqrt(np.sum(np.abs(closed.W_U.data) ** 2 + np.abs(closed.W_V.data) ** 2))
    solo, _ = evolve(seed, 5.0, cfg)
    rows = spec.plateau_rows(line)
    plateau = max(np.max(np.abs(direct.W_U.data[rows] - solo.a)),
                  np.max(np.abs(direct.W_V.data[rows] - solo.b)))
    ok = rel <= 1e-6 and plateau <= 1e-9 and elapsed < 60
    criterion(7, ok, f"relative error {rel:.1e} (<= 1e-6), plateau rows vs seed {plateau:.1e}, "
                     f"{elapsed:.1f}s (< 60s)")


def test_c08_split_step(criterion):
    start = time.perf_counter()
    line, torus = LineGrid(np.pi, 8), TorusGrid(3)
    c1, c2, p0 = 0.3 + 0.1j, 0.2 - 0.05j, 2
    mk = lambda c: ProductField.from_function(line, torus, lambda X, Y: c * np.exp(1j * p0 * Y) + 0 * X)
    s, rep = evolve_nls(NlsState(mk(c1), mk(c2)), 10.0, StepConfig(1e-3), record_every=100)
    exact = c1 * np.exp(1j * p0 * torus.y)[None, :] * np.exp(-1j * (p0**2 + abs(c2) ** 2) * 10.0)
    err = np.max(np.abs(s.U.data - exact))

    gl, gt = LineGrid(40.0, 256), TorusGrid(4)
    U = ProductField.from_function(gl, gt, lambda X, Y: 0.8 * np.exp(-X**2 / 4) * (1 + 0.5 * np.exp(1j * Y)))
    V = ProductField.from_function(gl, gt, lambda X, Y: 0.8 * np.exp(-(X - 1) ** 2 / 4) * (np.exp(-1j * Y) + 0.3))
    runs = {dt: evolve_nls(NlsState(U, V), 2.0, StepConfig(dt), record_every=50)
            for dt in (0.04, 0.02, 0.01)}
    e1 = np.linalg.norm(runs[0.04][0].U.data - runs[0.02][0].U.data)
    e2 = np.linalg.norm(runs[0.02][0].U.data - runs[0.01][0].U.data)
    order = np.log2(e1 / e2)
    drift = max(rep.mass_drift, runs[0.01][1].mass_drift)
    elapsed = time.perf_counter() - start
    ok = err <= 1e-10 and abs(order - 2) <= 0.1 and drift <= 1e-10 and elapsed < 120
    criterion(8, ok, f"exact-solution error {err:.1e} (<= 1e-10), order {order:.3f} (2 +- 0.1), "
                     f"mass drift {drift:.1e}, {elapsed:.1f}s (< 120s)")


def test_c09_decomposition(criterion, tmp_path):
    cfg = load_config(preset="decompose")
    start = time.perf_counter()
    rep = run(cfg, tmp_path)
    elapsed = time.perf_counter() - start
    err = rep["ct_over_pi_error_last"]
    ok = err <= 0.05 and rep["residual_monotone"] and elapsed < 300
    criterion(9, ok, f"|c t / pi - 1| = {err:.3f} at t = {cfg.time.t_list[-1]:g} (<= 0.05), "
                     f"residual monotone {rep['residual_monotone']}, {elapsed:.1f}s (< 300s)")


@pytest.fixture(scope="module")
def scattering(tmp_path_factory):
    cfg = load_config(preset="scattering")
    start = time.perf_counter()
    rep = run(cfg, tmp_path_factory.mktemp("scattering"))
    return cfg, rep, time.perf_counter() - start


def test_c10_modified_scattering(criterion, scattering):
    cfg, rep, elapsed = scattering
    ok = rep["ratio"] <= 0.5 and rep["decay_variation"] < 2 and elapsed < 600
    criterion(10, ok, f"err_res / err_frozen = {rep['ratio']:.3f} (<= 0.5) at "
                      f"(t0, t1) = ({cfg.time.t0:g}, {cfg.time.t1:g}), eps = {cfg.physics.eps}, "
                      f"decay variation {rep['decay_variation']:.3f} (< 2), {elapsed:.0f}s (< 600s)")


def test_c11_sobolev_boundedness(criterion, scattering):
    _, rep, _ = scattering
    growth = {int(k): v for k, v in rep["sobolev_growth"].items()}
    ok = all(growth[s] <= 2 for s in (1, 6, 12))
    criterion(11, ok, "max/initial of ||U||_Hs + ||V||_Hs: "
                      + ", ".join(f"s={s}: {growth[s]:.4f}" for s in (1, 6, 12)) + " (<= 2)")


def test_c12_set_identity(criterion):
    start = time.perf_counter()
    vals = np.arange(-6, 7)
    p, q, r, s = np.meshgrid(vals, vals, vals, vals, indexing="ij")
    a, b = gamma0_membership(p, q, r, s), conv_membership(p, q, r, s)
    mismatches = int(np.sum(a != b))
    elapsed = time.perf_counter() - start
    criterion(12, mismatches == 0 and elapsed < 5,
              f"{mismatches} mismatches over {a.size} quadruples, {int(a.sum())} resonant, "
              f"{elapsed:.3f}s (< 5s)")


def test_c13_reproducibility(criterion, tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    codes = [main(["--preset", "reduced", "--seed", "13", "--out", str(o)]) for o in outs]
    blobs = [(o / "invariants.csv").read_bytes() for o in outs]
    ok = codes == [0, 0] and blobs[0] == blobs[1] and len(blobs[0]) > 0
    criterion(13, ok, f"reduced preset, seed 13: exit codes {codes}, CSV byte-identical "
                      f"{blobs[0] == blobs[1]} ({len(blobs[0])} bytes)")
