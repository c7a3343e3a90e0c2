"""Implicit-midpoint time stepping, energy traces and decay fits."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .operators import Generator, StateVector
from .report import format_csv, format_kv

log = logging.getLogger(__name__)


class MidpointStepper:
    """Reusable factorisation of ``I - dt/2 A`` for repeated midpoint steps.

    ``dt`` may be negative, which runs the flow backwards (used to check
    time reversibility).
    """

    def __init__(self, gen: Generator, dt: float):
        if dt == 0 or not np.isfinite(dt):
            raise ValueError("dt must be finite and nonzero")
        self.gen = gen
        self.dt = float(dt)
        try:
            self._solver = gen.shifted_solver(-0.5 * self.dt, 1.0)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"midpoint factorisation failed for dt={dt}: {exc}") from exc

    def step(self, state: StateVector) -> StateVector:
        rhs = state.combine(1.0, self.gen.apply(state), 0.5 * self.dt)
        return self._solver.solve(rhs)


def step_midpoint(gen: Generator, state: StateVector, dt: float) -> StateVector:
    """One implicit-midpoint step ``(I - dt/2 A) U' = (I + dt/2 A) U``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return MidpointStepper(gen, dt).step(state)


@dataclass
class DecayReport:
    t: np.ndarray
    energy: np.ndarray
    h_norm: np.ndarray
    ledger: np.ndarray
    graph_norm0: float = 1.0
    monotone: Optional[bool] = None
    fits: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.energy = np.asarray(self.energy, dtype=float)
        self.h_norm = np.asarray(self.h_norm, dtype=float)
        self.ledger = np.asarray(self.ledger, dtype=float)
        if not (self.t.shape == self.energy.shape == self.h_norm.shape == self.ledger.shape):
            raise ValueError("trace columns differ in length")
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if np.any(~np.isfinite(self.h_norm)) or np.any(self.h_norm < 0):
            raise ValueError("norms must be finite and nonnegative")

    @property
    def balance_error(self) -> np.ndarray:
        """``E(0) - E(t) - ledger(t)``; zero up to O(dt^2)."""
        return self.energy[0] - self.energy - self.ledger

    def to_csv(self) -> str:
        return format_csv(["t", "E", "H_norm", "ledger"], [self.t, self.energy, self.h_norm, self.ledger])


def simulate(gen: Generator, state: StateVector, T: float, dt: float, record_every: int = 1,
             monotone_tol: float = 1e-12) -> DecayReport:
    """Integrate ``U' = A U`` from ``state`` up to time ``T``.

    Every step contributes to the dissipation ledger (trapezoid in time);
    every ``record_every``-th step is recorded.  A non-finite state aborts
    with :class:`FloatingPointError`.
    """
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    for blk in state.blocks():
        if np.iscomplexobj(blk) and np.any(np.imag(blk) != 0):
            raise ValueError("initial data must be real")
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * T:
        raise ValueError("T must be an integer multiple of dt")
    if state.lap_z is None:
        state = StateVector(state.grid, state.y, state.u, state.z, state.v, state.alpha,
                            gen.lap.matrix @ state.z)
    stepper = MidpointStepper(gen, dt)
    t, E, H, led = [0.0], [gen.energy(state)], [gen.h_norm(state)], [0.0]
    rate = gen.dissipation_rate(state)
    acc = 0.0
    monotone = True
    e_prev = E[0]
    for k in range(1, nsteps + 1):
        state = stepper.step(state)
        e = gen.energy(state)
        if not np.isfinite(e):
            raise FloatingPointError(f"non-finite state at step {k} (t = {k * dt:.6g})")
        new_rate = gen.dissipation_rate(state)
        acc += 0.5 * dt * (rate + new_rate)
        rate = new_rate
        if e > e_prev + monotone_tol * max(1.0, abs(E[0])):
            monotone = False
        e_prev = e
        if k % record_every == 0 or k == nsteps:
            t.append(k * dt)
            E.append(e)
            H.append(gen.h_norm(state))
            led.append(acc)
    rep = DecayReport(np.array(t), np.array(E), np.array(H), np.array(led), monotone=monotone)
    rep.final_state = state
    return rep


@dataclass
class DecayFit:
    mode: str
    ok: bool
    flag: str = "ok"
    slope: float = float("nan")
    intercept: float = float("nan")
    c_log: float = float("nan")
    t_max: float = float("nan")

    def summary(self) -> str:
        return format_kv(dict(mode=self.mode, ok=self.ok, flag=self.flag, slope=self.slope,
                              intercept=self.intercept, c_log=self.c_log, t_max=self.t_max))


def fit_decay(report: DecayReport, mode: str = "exponential", min_samples: int = 100) -> DecayFit:
    """Exponential rate over the tail half, or the ``C/log(2+t)`` envelope constant.

    ``c_log = max_k ||U(t_k)||_H log(2 + t_k) / ||U0||_D(A)``.
    """
    if mode not in ("exponential", "log_envelope"):
        raise ValueError(f"unknown mode {mode!r}")
    t, H = report.t, report.h_norm
    if t.size < min_samples:
        return DecayFit(mode, False, "too few samples")
    tail = slice(t.size // 2, None)
    if np.any(H[tail] <= 0):
        return DecayFit(mode, False, "zero norm in tail")
    slope, intercept = np.polyfit(t[tail], np.log(H[tail]), 1)
    if not (slope < 0 and H[-1] < H[0]):
        return DecayFit(mode, False, "non-decaying", slope=float(slope))
    if mode == "exponential":
        fit = DecayFit(mode, True, slope=float(slope), intercept=float(intercept))
    else:
        env = H * np.log(2.0 + t) / report.graph_norm0
        k = int(np.argmax(env))
        fit = DecayFit(mode, True, c_log=float(env[k]), t_max=float(t[k]), slope=float(slope))
    report.fits[mode] = fit
    return fit
