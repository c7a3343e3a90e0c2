import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_problem
from waveplate.carleman import (SpaceTimeGrid, VerifierConfig, build_weights, carleman_sweep,
                                check_imaginary_part_estimate, h1_norm, lift_resolvent_data, minimal_constant,
                                random_test_function, smooth_rhs, space_time_grid_for, upper_half_stable,
                                verify_elliptic_carleman, verify_interpolation, verify_local_energy,
                                verify_parabolic_carleman, weight_parameters)
from waveplate.geometry import build_chain, build_cutoffs, build_grid, build_weight_base
from waveplate.operators import StateVector
from waveplate.spectral import ResolventSolveRecord, resolvent_solve


@pytest.fixture(scope="module")
def setup():
    grid = build_grid(1, [math.pi], [80])
    chain = build_chain(grid, ((0.5, 2.5),), ((1.0, 2.8),))
    lo, hi = chain[0][0]
    base = build_weight_base(grid, critical_point=0.5 * (lo + hi), omega0=chain[0])
    return grid, chain, base


def b_params_mp(mu):
    mp = mpmath.mp
    mp.dps = 40
    mu = mpmath.mpf(mu)
    b2 = 1 + mpmath.log(2 + mpmath.e**mu) / mu
    b02 = b2 - mpmath.log((1 + mpmath.e**mu) / mpmath.e**mu) / mu
    return float(mpmath.sqrt(b2)), float(mpmath.sqrt(b02))


def test_weight_parameters_mu1():
    b, b0 = weight_parameters(1.0)
    assert b == pytest.approx(1.5973, abs=5e-5)
    assert b0 == pytest.approx(1.4960, abs=1e-4)  # 1.49606 to five digits
    eb, eb0 = b_params_mp(1.0)
    assert b == pytest.approx(eb, rel=1e-14) and b0 == pytest.approx(eb0, rel=1e-14)


@pytest.mark.parametrize("mu", [0.8, 2.0, 3.0, 7.5])
def test_weight_parameters_ordering(mu):
    b, b0 = weight_parameters(mu)
    assert 1 < b0 < b <= 2
    assert (b, b0) == pytest.approx(b_params_mp(mu), rel=1e-14)


def test_weight_parameters_reject_small_mu():
    with pytest.raises(ValueError):
        weight_parameters(math.log(2.0))


def test_phi_at_peak_mu1():
    grid = build_grid(1, [math.pi], [201])  # pi/2 is a node
    base = build_weight_base(grid, critical_point=math.pi / 2)
    b, _ = weight_parameters(1.0)
    st_ = SpaceTimeGrid(grid, 101, b)  # s = 0 is a node
    w = build_weights(st_, base, 1.0, 1.0)
    assert np.max(w.phi) == pytest.approx(math.exp(1 + b * b), rel=1e-12)
    assert np.max(w.phi) == pytest.approx(34.87, abs=0.01)


@pytest.mark.parametrize("mu", [1.0, 2.0, 3.0])
def test_band_structure(setup, mu):
    grid, chain, base = setup
    st_ = space_time_grid_for(grid, mu, 201)
    w = build_weights(st_, base, mu, 5.0)
    lo, hi = w.band_check()
    assert lo and hi
    assert w.band_floor == pytest.approx(2 + math.exp(mu))


def test_weight_derivatives_second_order(setup):
    grid, chain, base = setup
    mu, lam = 2.0, 3.0
    st_ = space_time_grid_for(grid, mu, 41)
    w = build_weights(st_, base, mu, lam)
    S, X = st_.mesh()
    sup = base.sup

    def ell(s, x):
        return lam * np.exp(mu * (base.evaluate(x) / sup + w.b**2 - s**2))

    def fd(delta):
        return dict(
            ell_s=(ell(S + delta, X) - ell(S - delta, X)) / (2 * delta),
            ell_x=(ell(S, X + delta) - ell(S, X - delta)) / (2 * delta),
            ell_ss=(ell(S + delta, X) - 2 * ell(S, X) + ell(S - delta, X)) / delta**2,
            ell_xx=(ell(S, X + delta) - 2 * ell(S, X) + ell(S, X - delta)) / delta**2,
            ell_xs=(ell(S + delta, X + delta) - ell(S + delta, X - delta) - ell(S - delta, X + delta)
                    + ell(S - delta, X - delta)) / (4 * delta**2),
        )

    coarse, fine = fd(2e-3), fd(1e-3)
    for name in coarse:
        exact = getattr(w, name)
        e1 = np.max(np.abs(coarse[name] - exact))
        e2 = np.max(np.abs(fine[name] - exact))
        assert math.log2(e1 / e2) >= 1.9, name


def test_build_weights_validation(setup):
    grid, chain, base = setup
    st_ = space_time_grid_for(grid, 2.0, 21)
    with pytest.raises(ValueError):
        build_weights(st_, base, 3.0, 8.0)  # grid spans the mu = 2 interval
    with pytest.raises(ValueError):
        build_weights(st_, base, 2.0, -1.0)


def test_random_test_function_contract(setup):
    grid, chain, base = setup
    st_ = space_time_grid_for(grid, 2.0, 61)
    p = random_test_function(st_, 42, 5)
    q = random_test_function(st_, 42, 5)
    assert np.array_equal(p, q)
    assert h1_norm(st_, p) == pytest.approx(1.0, abs=1e-10)
    assert not np.array_equal(p, random_test_function(st_, 43, 5))
    # the sine basis vanishes at s = +-b and on the x-boundary
    j = np.arange(1, 6)
    assert np.max(np.abs(np.sin(j * np.pi * 0.0))) == 0.0
    assert np.max(np.abs(np.sin(j * np.pi))) < 1e-14
    with pytest.raises(ValueError):
        random_test_function(st_, 0, 0)


def test_space_time_regions(setup):
    grid, chain, base = setup
    st_ = space_time_grid_for(grid, 2.0, 61, chain.observation)
    S, X = st_.mesh()
    assert st_.region_X().all()  # b < 2
    assert np.array_equal(st_.region_Y(), np.abs(S) < 1)
    xs = st_.region_X_star()
    lo, hi = chain.observation[0]
    assert np.array_equal(xs, (X >= lo) & (X <= hi))
    sig = st_.region_Sigma()
    assert sig[:, 0].all() and sig[:, -1].all() and not sig[:, 1:-1].any()
    with pytest.raises(ValueError):
        SpaceTimeGrid(grid, 10, 2.5)


def test_elliptic_scaling_and_observation_dominance(setup):
    grid, chain, base = setup
    st_ = space_time_grid_for(grid, 2.0, 61)
    w = build_weights(st_, base, 2.0, 16.0)
    p = random_test_function(st_, 1)
    r1 = verify_elliptic_carleman(p, w, chain[0])
    r10 = verify_elliptic_carleman(10 * p, w, chain[0])
    assert r10["c_emp"] == pytest.approx(r1["c_emp"], rel=1e-12)
    # p supported well inside omega_0: the observation term contains the whole left side
    x = grid.axis(0)
    lo, hi = chain[0][0]
    bump = np.where((x > lo + 0.05) & (x < hi - 0.05), np.sin(np.pi * (x - lo - 0.05) / (hi - lo - 0.1)) ** 4, 0)
    ps = np.outer(np.cos(np.pi * st_.s / (2 * st_.b)), bump).astype(complex)
    r = verify_elliptic_carleman(ps, w, chain[0])
    assert r["lhs"] <= r["rhs_obs"] * (1 + 1e-12)
    assert r["c_emp"] <= 1 + 1e-12
    with pytest.raises(ValueError):
        verify_elliptic_carleman(np.zeros_like(p), w, chain[0])


def test_local_energy_vacuous_and_beta_monotonicity(setup):
    grid, chain, base = setup
    mu = 2.0
    b, b0 = weight_parameters(mu)
    st_ = space_time_grid_for(grid, mu, 61)
    cut = build_cutoffs(grid, chain, b, b0)
    w = build_weights(st_, base, mu, 8.0)
    zero = verify_local_energy(np.zeros(st_.shape, complex), w, VerifierConfig(), cut)
    assert zero["vacuous"] and zero["lhs"] == 0 and zero["c_emp"] == 0
    q = random_test_function(st_, 3)
    r2 = verify_local_energy(q, w, VerifierConfig(beta=2.0), cut)
    r4 = verify_local_energy(q, w, VerifierConfig(beta=4.0), cut)
    assert r4["rhs_source"] < r2["rhs_source"]
    assert r4["rhs_local"] > r2["rhs_local"]
    r10 = verify_local_energy(10 * q, w, VerifierConfig(beta=2.0), cut)
    assert r10["c_emp"] == pytest.approx(r2["c_emp"], rel=1e-12, abs=1e-300)


def test_parabolic_gamma_zero_and_scaling(setup):
    grid, chain, base = setup
    st_ = space_time_grid_for(grid, 3.0, 61)
    w = build_weights(st_, base, 3.0, 32.0)
    q = random_test_function(st_, 4)
    r0 = verify_parabolic_carleman(q, w, 0.0, chain[1])
    assert np.isfinite(r0["c_emp"]) and r0["lhs"] >= 0 and r0["rhs_source"] >= 0
    r1 = verify_parabolic_carleman(q, w, 1.0, chain[1])
    r10 = verify_parabolic_carleman(10 * q, w, 1.0, chain[1])
    assert r10["c_emp"] == pytest.approx(r1["c_emp"], rel=1e-12)
    assert r1["lhs"] == pytest.approx(r1["lhs_first"] + r1["lhs_second"], rel=1e-15)


def test_sweep_is_deterministic(setup):
    grid, chain, base = setup
    cfg = VerifierConfig(n_seeds=3, s_points=41)
    a = carleman_sweep("elliptic", base, chain, cfg)
    b = carleman_sweep("elliptic", base, chain, cfg)
    assert a.to_csv() == b.to_csv()
    assert len(a.rows) == 3 * 2 * 4
    with pytest.raises(ValueError):
        carleman_sweep("hyperbolic", base, chain, cfg)


def test_upper_half_stable():
    assert upper_half_stable([5, 4, 3, 3.5])[0]
    ok, ratio = upper_half_stable([1, 1, 1, 2.5])
    assert not ok and ratio == 2.5
    assert not upper_half_stable([1, 1, 1, np.inf])[0]


def test_verifier_config_validation():
    with pytest.raises(ValueError):
        VerifierConfig(beta=1.5)
    with pytest.raises(ValueError):
        VerifierConfig(eps_grid=(0.0, 1.0))
    with pytest.raises(ValueError):
        VerifierConfig(lam_grid=(8.0, 4.0))


# ---------------------------------------------------------------------------
# lift and interpolation
# ---------------------------------------------------------------------------

def record_for(gen, U, lam):
    """Resolvent record whose solution is exactly ``U``: F = (A - lam) U."""
    AU = gen.apply(U)
    F = AU.combine(1.0, U, -lam)
    return ResolventSolveRecord(lam, F, U, 0.0, 0.0, 0.0)


def test_lift_w_oracle():
    gen = make_problem(n=1000, c0=0.0, d0=0.0)
    g = gen.grid
    x = g.axis(0)
    h = g.h
    mu1 = 4 / h**2 * math.sin(h / 2) ** 2
    Z = np.zeros_like(x, dtype=complex)
    lam = 2.0
    U = StateVector(g, Z, Z, np.sin(x) + 0j, lam * np.sin(x) + 0j, 1, -mu1 * np.sin(x) + 0j)
    st_ = space_time_grid_for(g, 2.0, 21)
    data = lift_resolvent_data(record_for(gen, U, lam), st_, gen)
    expected = np.outer(np.exp(2j * st_.s), (2j + mu1) * np.sin(x))
    np.testing.assert_allclose(data.w, expected, atol=1e-12)
    np.testing.assert_allclose(data.w, np.outer(np.exp(2j * st_.s), (2j + 1) * np.sin(x)), atol=1e-5)
    # at lam = 2i the factor e^{i lam s} = e^{-2s} is real and (i lam - Lap) sin x = (-2 + 1) sin x
    lam = 2j
    U = StateVector(g, Z, Z, np.sin(x) + 0j, lam * np.sin(x), 1, -mu1 * np.sin(x) + 0j)
    data = lift_resolvent_data(record_for(gen, U, lam), st_, gen)
    np.testing.assert_allclose(data.w, np.outer(np.exp(-2 * st_.s), (-2 + mu1) * np.sin(x)), atol=1e-12)


def test_lift_static_and_unimodular(coupled):
    g = coupled.grid
    F = smooth_rhs(g, 0)
    st_ = space_time_grid_for(g, 2.0, 31, coupled.config.chain.observation)
    data = lift_resolvent_data(resolvent_solve(coupled, 0.0, F), st_, coupled)
    assert np.array_equal(data.p, np.broadcast_to(data.p[0], data.p.shape))
    assert max(data.residuals.values()) <= 1e-8
    rec = resolvent_solve(coupled, 0.3 + 4.0j, F)
    data = lift_resolvent_data(rec, st_, coupled)
    assert np.allclose(np.abs(data.p), np.abs(rec.solution.y)[None, :] * np.abs(np.exp(1j * rec.lam * st_.s))[:, None])
    real = lift_resolvent_data(resolvent_solve(coupled, 5.0, F), st_, coupled)  # real lam: |e^{i lam s}| = 1
    np.testing.assert_allclose(np.abs(real.p), np.broadcast_to(np.abs(real.p[0]), real.p.shape), rtol=1e-14)


def test_lift_rejects_inconsistent_record(coupled):
    F = smooth_rhs(coupled.grid, 1)
    rec = resolvent_solve(coupled, 3.0j, F)
    bad = ResolventSolveRecord(rec.lam, rec.rhs.scaled(2.0), rec.solution, 0.0, 0.0, 0.0)
    st_ = space_time_grid_for(coupled.grid, 2.0, 31)
    with pytest.raises(ValueError, match="eq1"):
        lift_resolvent_data(bad, st_, coupled)


def test_lift_fd_residual_second_order(coupled):
    rec = resolvent_solve(coupled, 2.5j, smooth_rhs(coupled.grid, 2))
    res = [lift_resolvent_data(rec, space_time_grid_for(coupled.grid, 2.0, m), coupled).fd_residuals
           for m in (41, 83)]
    for eq in ("eq1", "eq2", "eq3"):
        assert math.log2(res[0][eq] / res[1][eq]) >= 1.9


@pytest.mark.parametrize("alpha", [0, 1])
def test_interpolation_report(alpha):
    gen = make_problem(n=120, alpha=alpha)
    st_ = space_time_grid_for(gen.grid, 2.0, 61, gen.config.chain.observation)
    data = lift_resolvent_data(resolvent_solve(gen, 6.0j, smooth_rhs(gen.grid, 5, alpha=alpha)), st_, gen)
    cfg = VerifierConfig()
    rep = verify_interpolation(data, cfg)
    assert rep.passed and np.isfinite(rep.summary["c_star"])
    assert rep.kind.endswith(f"alpha{alpha}")
    rep10 = verify_interpolation(data.scaled(10.0), cfg)
    for a, b in zip(rep.rows, rep10.rows):
        assert b["c_eps"] == pytest.approx(a["c_eps"], rel=1e-12)
    last = rep.rows[-1]
    assert last["c_eps"] <= last["lhs"] / (last["group_global"] * math.exp(-2 / last["eps"]))
    csv = rep.to_csv()
    assert csv.splitlines()[0].startswith("eps,")


def test_interpolation_vacuous(coupled):
    st_ = space_time_grid_for(coupled.grid, 2.0, 31, coupled.config.chain.observation)
    data = lift_resolvent_data(resolvent_solve(coupled, 3.0j, StateVector.zeros(coupled.grid, dtype=complex)),
                               st_, coupled)
    rep = verify_interpolation(data, VerifierConfig())
    assert rep.passed and rep.summary["vacuous"]


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(0.05, 5.0))
def test_minimal_constant_solves_equation(lhs, g1, g2, eps):
    C = minimal_constant(lhs, g1, g2, eps)
    assert C > 0
    val = C * math.exp(C / eps) * g1 + C * math.exp(-2 / eps) * g2
    assert val == pytest.approx(lhs, rel=1e-9)


def test_imaginary_part_estimate(coupled):
    F = smooth_rhs(coupled.grid, 0)
    for tau in (2.0, 6.0, 10.0):
        row = check_imaginary_part_estimate(resolvent_solve(coupled, -0.01 + 1j * tau, F), coupled)
        assert row["coupling_im"] <= 1e-12
        assert 0 < row["c_min"] <= 4.0  # the identity behind the estimate gives C = 4
    real = smooth_rhs(coupled.grid, 1, dtype=float)
    row = check_imaginary_part_estimate(resolvent_solve(coupled, 0.5, real), coupled)
    assert row["lhs"] == 0.0 and row["c_min"] == 0.0
