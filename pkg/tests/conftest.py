import numpy as np
import pytest

from waveplate import (ProblemConfig, assemble_generator, build_chain, build_coefficient, build_grid)

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def make_problem(n=200, L=np.pi, alpha=1, c0=0.5, d0=1.0, omega_c=((0.5, 2.5),), omega_d=((1.0, 2.8),),
                 profile="plateau"):
    """Generator for the standard coupled, damped 1D configuration (or any variant)."""
    grid = build_grid(1, [L], [n])
    # the default chain margins (3h per level) need a reasonably fine grid
    chain = build_chain(grid, omega_c, omega_d) if n >= 60 else None
    c = build_coefficient(grid, omega_c, c0, profile) if c0 > 0 else build_coefficient(grid, None, 0.0, "constant")
    d = build_coefficient(grid, omega_d, d0, profile) if d0 > 0 else build_coefficient(grid, None, 0.0, "constant")
    return assemble_generator(ProblemConfig(grid, c, d, alpha, c0, d0, chain))


@pytest.fixture
def coupled():
    return make_problem()


@pytest.fixture
def free():
    """Undamped, uncoupled generator on (0, pi) with n = 200."""
    return make_problem(c0=0.0, d0=0.0)
