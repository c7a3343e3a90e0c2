import math

import numpy as np
import pytest

from conftest import make_problem
from waveplate.evolution import DecayReport, MidpointStepper, fit_decay, simulate, step_midpoint
from waveplate.geometry import build_coefficient, build_grid
from waveplate.operators import ProblemConfig, StateVector, assemble_generator


def wave_state(gen):
    x = gen.grid.axis(0)
    Z = np.zeros_like(x)
    return StateVector(gen.grid, np.sin(x), Z, Z, Z, gen.alpha)


def test_zero_is_fixed_point(free):
    out = step_midpoint(free, StateVector.zeros(free.grid), 0.1)
    assert not np.any(out.stack())


def test_one_period_returns_wave_mode():
    gen = make_problem(n=200, c0=0.0, d0=0.0)
    U0 = wave_state(gen)
    dt = 2 * math.pi / 2000
    stepper = MidpointStepper(gen, dt)
    U = U0
    for _ in range(2000):
        U = stepper.step(U)
    # discrete frequency is slightly below 1 and midpoint adds O(dt^2) phase error
    err = np.max(np.abs(U.y - U0.y))
    assert err < 5 * dt**2 + 5 * gen.grid.h**2


def test_single_step_conserves_energy_when_undamped(coupled):
    gen = make_problem(n=150, d0=0.0)
    x = gen.grid.axis(0)
    U = StateVector(gen.grid, np.sin(x), np.cos(3 * x) * x * (np.pi - x), x * (np.pi - x), np.sin(2 * x), 1)
    E0 = gen.energy(U)
    E1 = gen.energy(step_midpoint(gen, U, 0.05))
    assert abs(E1 - E0) <= 1e-12 * abs(E0)


def test_reversibility(coupled):
    x = coupled.grid.axis(0)
    U = StateVector(coupled.grid, np.sin(x), 0 * x, np.sin(2 * x), np.cos(x) * np.sin(x), 1)
    fwd, back = MidpointStepper(coupled, 0.01), MidpointStepper(coupled, -0.01)
    W = back.step(fwd.step(U))
    assert coupled.h_norm(W.combine(1.0, U, -1.0)) <= 1e-10 * coupled.h_norm(U)


def test_step_rejects_nonpositive_dt(free):
    with pytest.raises(ValueError):
        step_midpoint(free, wave_state(free), 0.0)
    with pytest.raises(ValueError):
        MidpointStepper(free, 0.0)


def test_simulate_conservation_and_report_shape():
    gen = make_problem(n=100, d0=0.0)
    rep = simulate(gen, wave_state(gen), T=1.0, dt=0.01, record_every=10)
    assert rep.t.size == 11
    assert np.all(np.diff(rep.t) > 0)
    assert np.max(np.abs(rep.energy - rep.energy[0])) <= 1e-10 * max(1, abs(rep.energy[0]))
    assert np.all(rep.ledger == 0)
    text = rep.to_csv()
    assert text.splitlines()[0] == "t,E,H_norm,ledger"


def test_simulate_monotone_when_damped(coupled):
    rep = simulate(coupled, wave_state(coupled), T=2.0, dt=0.01)
    assert rep.monotone
    assert np.all(np.diff(rep.energy) <= 1e-12 * rep.energy[0])


def test_decoupled_plate_energy_constant_while_wave_decays():
    g = build_grid(1, [math.pi], [100])
    zero = build_coefficient(g, None, 0.0, "constant")
    one = build_coefficient(g, None, 1.0, "constant")
    gen = assemble_generator(ProblemConfig(g, zero, one, alpha=1))
    x = g.axis(0)
    Z = np.zeros_like(x)
    U = StateVector(g, np.sin(x), Z, np.sin(2 * x), Z, 1)
    stepper = MidpointStepper(gen, 0.01)

    def plate(W):
        return 0.5 * g.h * (np.sum(gen.lap_of(W) ** 2) + np.sum(W.v**2))

    def wave(W):
        return 0.5 * (gen.grad_sq(W.y) + g.h * np.sum(W.u**2))

    p0, w0 = plate(U), wave(U)
    for _ in range(300):
        U = stepper.step(U)
    assert plate(U) == pytest.approx(p0, rel=1e-12)
    assert wave(U) < 0.5 * w0


def test_simulate_validation(free):
    with pytest.raises(ValueError):
        simulate(free, wave_state(free), T=1.0, dt=0.3)
    U = wave_state(free)
    bad = StateVector(free.grid, U.y + 1j, U.u, U.z, U.v, 1)
    with pytest.raises(ValueError):
        simulate(free, bad, T=1.0, dt=0.1)


def test_energy_balance_second_order(coupled):
    x = coupled.grid.axis(0)
    U = StateVector(coupled.grid, np.sin(x), np.sin(x), np.sin(2 * x), 0 * x, 1)
    errs = [np.max(np.abs(simulate(coupled, U, 1.0, dt).balance_error)) for dt in (0.02, 0.01)]
    assert math.log2(errs[0] / errs[1]) >= 1.9


def test_fit_exponential_synthetic():
    t = np.linspace(0, 50, 501)
    rep = DecayReport(t, np.exp(-0.2 * t), np.exp(-0.1 * t), np.zeros_like(t))
    fit = fit_decay(rep, "exponential")
    assert fit.ok and fit.slope == pytest.approx(-0.1, abs=1e-6)
    assert "exponential" in rep.fits


def test_fit_log_envelope_synthetic():
    t = np.linspace(0, 100, 1001)
    rep = DecayReport(t, np.zeros_like(t), 1 / np.log(2 + t), np.zeros_like(t), graph_norm0=1.0)
    fit = fit_decay(rep, "log_envelope")
    assert fit.ok and fit.c_log == pytest.approx(1.0, abs=1e-6)


def test_fit_flags():
    t = np.linspace(0, 1, 50)
    rep = DecayReport(t, t, np.ones_like(t), t)
    assert fit_decay(rep).flag == "too few samples"
    t = np.linspace(0, 10, 200)
    rep = DecayReport(t, t, np.exp(0.1 * t), t)
    fit = fit_decay(rep)
    assert not fit.ok and fit.flag == "non-decaying"
    with pytest.raises(ValueError):
        fit_decay(rep, "power")


def test_report_validation():
    with pytest.raises(ValueError):
        DecayReport([0, 0], [1, 1], [1, 1], [0, 0])
    with pytest.raises(ValueError):
        DecayReport([0, 1], [1, 1], [1, -1], [0, 0])
