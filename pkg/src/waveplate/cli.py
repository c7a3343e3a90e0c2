"""Command-line front end: ``waveplate run CONFIG [--out DIR] [--seed N] [--threads N]``.

A run reads a YAML config, executes one experiment, and writes its CSV/text
artifacts, an optional SVG plot, and ``manifest.json`` (config hash, seed,
library versions, sha256 of every artifact).  Artifacts are held in memory
until the experiment finishes, so a failing run leaves no partial output.

Exit status: 0 on success, 2 when an inequality check fails, 1 on error.

Config layout (see README for a full example)::

    kind: simulate            # or spectrum, resolvent-sweep, carleman-elliptic,
                              # carleman-parabolic, local-energy, interpolation, decay-fit
    seed: 0
    problem:
      length: pi              # number or the string "pi"
      n: 200
      alpha: 1
      omega_c: [[0.5, 2.5]]
      omega_d: [[1.0, 2.8]]
      c0: 0.5
      d0: 1.0
    experiment: {...}         # kind-specific keys
    plot: true
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy
import yaml

from . import __version__
from . import _kernels
from .carleman import (VerifierConfig, carleman_sweep, check_imaginary_part_estimate, lift_resolvent_data,
                       smooth_rhs, space_time_grid_for, verify_interpolation)
from .evolution import fit_decay, simulate
from .geometry import build_chain, build_coefficient, build_grid, build_weight_base
from .operators import ProblemConfig, StateVector, assemble_generator
from .report import format_kv, rows_to_csv, sha256, svg_plot
from .spectral import (dense_spectrum, resolvent_sweep, scan_exclusion_region, spectrum_sweep)

log = logging.getLogger(__name__)

KINDS = ("simulate", "spectrum", "resolvent-sweep", "carleman-elliptic", "carleman-parabolic",
         "local-energy", "interpolation", "decay-fit")


class ConfigError(ValueError):
    pass


def _num(v, name):
    if isinstance(v, str) and v.strip().lower() == "pi":
        return math.pi
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {v!r}") from None


def _box(v, name):
    if v is None:
        return None
    try:
        box = tuple((_num(lo, name), _num(hi, name)) for lo, hi in v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected [[lo, hi]]") from None
    if len(box) != 1:
        raise ConfigError(f"{name}: only 1D boxes are supported")
    return box


@dataclass
class RunConfig:
    kind: str
    seed: int = 0
    length: float = math.pi
    n: int = 200
    alpha: int = 1
    omega_c: Optional[tuple] = None
    omega_d: Optional[tuple] = None
    c0: float = 0.0
    d0: float = 0.0
    profile: str = "plateau"
    margins: Optional[float] = None
    experiment: dict = field(default_factory=dict)
    plot: bool = True

    @classmethod
    def from_dict(cls, raw) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(raw) - {"kind", "seed", "problem", "experiment", "plot"}
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        kind = raw.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
        prob = raw.get("problem") or {}
        if not isinstance(prob, dict):
            raise ConfigError("problem must be a mapping")
        allowed = {"length", "n", "alpha", "omega_c", "omega_d", "c0", "d0", "profile", "margins"}
        if set(prob) - allowed:
            raise ConfigError(f"unknown problem keys: {sorted(set(prob) - allowed)}")
        cfg = cls(kind=kind, seed=int(raw.get("seed", 0)),
                  length=_num(prob.get("length", math.pi), "length"), n=int(prob.get("n", 200)),
                  alpha=int(prob.get("alpha", 1)), omega_c=_box(prob.get("omega_c"), "omega_c"),
                  omega_d=_box(prob.get("omega_d"), "omega_d"), c0=_num(prob.get("c0", 0.0), "c0"),
                  d0=_num(prob.get("d0", 0.0), "d0"), profile=str(prob.get("profile", "plateau")),
                  margins=prob.get("margins"), experiment=dict(raw.get("experiment") or {}),
                  plot=bool(raw.get("plot", True)))
        cfg.validate()
        return cfg

    def validate(self):
        if self.alpha not in (0, 1):
            raise ConfigError("alpha must be 0 or 1")
        if self.n < 3:
            raise ConfigError("n must be at least 3")
        if self.length <= 0:
            raise ConfigError("length must be positive")
        for name in ("omega_c", "omega_d"):
            box = getattr(self, name)
            if box is not None:
                lo, hi = box[0]
                if not 0 <= lo < hi <= self.length:
                    raise ConfigError(f"{name} = {box} does not lie inside (0, {self.length})")
        if self.c0 > 0 and self.omega_c is None and self.profile == "plateau":
            raise ConfigError("c0 > 0 needs omega_c")
        if self.d0 > 0 and self.omega_d is None and self.profile == "plateau":
            raise ConfigError("d0 > 0 needs omega_d")
        if self.c0 < 0 or self.d0 < 0:
            raise ConfigError("c0 and d0 must be nonnegative")


def load_config(path) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return RunConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# Problem assembly
# ---------------------------------------------------------------------------

def build_problem(cfg: RunConfig):
    grid = build_grid(1, [cfg.length], [cfg.n])
    chain = None
    if cfg.omega_c is not None and cfg.omega_d is not None:
        chain = build_chain(grid, cfg.omega_c, cfg.omega_d, cfg.margins)

    def coef(box, floor):
        if floor == 0:
            return build_coefficient(grid, None, 0.0, "constant")
        return build_coefficient(grid, box, floor, cfg.profile)

    pc = ProblemConfig(grid, coef(cfg.omega_c, cfg.c0), coef(cfg.omega_d, cfg.d0), cfg.alpha,
                       cfg.c0, cfg.d0, chain)
    return grid, chain, assemble_generator(pc)


def sine_data(grid, coeffs) -> tuple:
    """``sum_k a_k sin(k pi x / L)`` and its exact Laplacian."""
    x, L = grid.axis(0), grid.extents[0]
    f, lap = np.zeros_like(x), np.zeros_like(x)
    for k, a in enumerate(coeffs or [], start=1):
        mode = np.sin(k * np.pi * x / L)
        f += a * mode
        lap -= a * (k * np.pi / L) ** 2 * mode
    return f, lap


def initial_state(grid, alpha, data) -> StateVector:
    data = data or {"y": [1.0], "z": [1.0]}
    y, _ = sine_data(grid, data.get("y"))
    u, _ = sine_data(grid, data.get("u"))
    z, _ = sine_data(grid, data.get("z"))
    v, _ = sine_data(grid, data.get("v"))
    return StateVector(grid, y, u, z, v, alpha)


# ---------------------------------------------------------------------------
# Experiments; each returns (artifacts: dict name -> str, passed: bool)
# ---------------------------------------------------------------------------

def emit_plot(report, kind: str) -> str:
    """Deterministic SVG for a decay trace, a spectrum, or C(eps) curves."""
    if kind == "energy":
        if report.t.size == 0:
            raise ValueError("empty report")
        logy = bool(np.all(report.energy > 0))
        return svg_plot([(report.t, report.energy, "E(t)")], "t", "E", "energy trace", logy=logy)
    if kind == "spectrum":
        ev = np.asarray(report.eigenvalues)
        if ev.size == 0:
            raise ValueError("empty report")
        return svg_plot([(ev.real, ev.imag, "eigenvalues")], "Re", "Im", "spectrum", scatter=True)
    if kind == "interpolation":
        series = []
        for k, rep in enumerate(report):
            if rep.rows:
                series.append(([r["eps"] for r in rep.rows], [r["c_eps"] for r in rep.rows], f"record {k}"))
        if not series:
            raise ValueError("empty report")
        return svg_plot(series, "eps", "C(eps)", "interpolation constants", logy=True)
    if kind == "resolvent":
        if not report:
            raise ValueError("empty report")
        im = [r["im"] for r in report]
        nrm = [r["norm"] for r in report]
        return svg_plot([(im, nrm, "norm")], "Im lambda", "resolvent norm", "resolvent sweep",
                        logy=bool(np.all(np.array(nrm) > 0)))
    raise ValueError(f"unknown plot kind {kind!r}")


def _simulate(cfg, gen, grid):
    ex = cfg.experiment
    U0 = initial_state(grid, cfg.alpha, ex.get("initial"))
    rep = simulate(gen, U0, float(ex.get("T", 1.0)), float(ex.get("dt", 1e-3)),
                   int(ex.get("record_every", 1)))
    rep.graph_norm0 = gen.graph_norm(U0)
    return rep


def run_simulate(cfg, gen, grid, threads):
    rep = _simulate(cfg, gen, grid)
    out = {"decay.csv": rep.to_csv()}
    summary = dict(E0=rep.energy[0], E_final=rep.energy[-1], monotone=bool(rep.monotone),
                   max_abs_energy_change=float(np.max(np.abs(rep.energy - rep.energy[0]))),
                   max_balance_error=float(np.max(np.abs(rep.balance_error))))
    out["summary.txt"] = format_kv(summary)
    if cfg.plot:
        out["energy.svg"] = emit_plot(rep, "energy")
    return out, True


def run_decay_fit(cfg, gen, grid, threads):
    rep = _simulate(cfg, gen, grid)
    min_samples = int(cfg.experiment.get("min_samples", 100))
    text = ""
    for mode in ("exponential", "log_envelope"):
        text += f"[{mode}]\n" + fit_decay(rep, mode, min_samples).summary()
    if cfg.experiment.get("abscissa", False):
        ev = dense_spectrum(gen)
        text += "[spectrum]\n" + format_kv(dict(spectral_abscissa=float(np.max(ev.real))))
    out = {"decay.csv": rep.to_csv(), "fit.txt": text}
    if cfg.plot:
        out["energy.svg"] = emit_plot(rep, "energy")
    return out, True


def run_spectrum(cfg, gen, grid, threads):
    ex = cfg.experiment
    taus = ex.get("taus")
    rep = spectrum_sweep(gen, taus=None if taus is None else [float(t) for t in taus],
                         k=int(ex.get("k", 8)), tol=float(ex.get("tol", 1e-8)), threads=threads)
    fit = scan_exclusion_region(rep, min_count=int(ex.get("min_count", 10)))
    out = {"spectrum.csv": rep.to_csv(), "exclusion.txt": fit.summary()}
    if cfg.plot:
        out["spectrum.svg"] = emit_plot(rep, "spectrum")
    return out, True


def run_resolvent_sweep(cfg, gen, grid, threads):
    ex = cfg.experiment
    if "lambdas" in ex:
        lams = [complex(_num(a, "lambda"), _num(b, "lambda")) for a, b in ex["lambdas"]]
    else:
        taus = np.linspace(float(ex.get("tau_min", 0.5)), float(ex.get("tau_max", 20.0)),
                           int(ex.get("count", 20)))
        lams = [complex(float(ex.get("re", 0.0)), t) for t in taus]
    if not lams:
        raise ConfigError("empty lambda grid")
    rows = resolvent_sweep(gen, lams, threads=threads)
    out = {"resolvent.csv": rows_to_csv(rows)}
    if cfg.plot:
        out["resolvent.svg"] = emit_plot(rows, "resolvent")
    return out, True


def _verifier_config(cfg) -> VerifierConfig:
    ex = cfg.experiment
    kw = dict(seed=cfg.seed)
    for key in ("gamma", "beta", "stability_factor"):
        if key in ex:
            kw[key] = float(ex[key])
    for key in ("j", "k", "n_seeds", "modes", "s_points"):
        if key in ex:
            kw[key] = int(ex[key])
    for key in ("mu_grid", "lam_grid", "eps_grid"):
        if key in ex:
            vals = tuple(float(v) for v in ex[key])
            if not vals:
                raise ConfigError(f"{key} is empty")
            kw[key] = vals
    try:
        return VerifierConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _run_carleman(kind):
    def runner(cfg, gen, grid, threads):
        chain = gen.config.chain
        if chain is None:
            raise ConfigError("Carleman checks need omega_c and omega_d")
        vcfg = _verifier_config(cfg)
        lo, hi = chain[0][0]
        xc = float(cfg.experiment.get("critical_point", 0.5 * (lo + hi)))
        base = build_weight_base(grid, critical_point=xc, omega0=chain[0])
        rep = carleman_sweep(kind, base, chain, vcfg)
        for r in rep.rows:
            r["pass"] = rep.passed
        return {"carleman.csv": rep.to_csv(), "summary.txt": rep.summary_text()}, rep.passed
    return runner


def interpolation_records(cfg, gen, grid):
    """Resolvent records at ``lambda = re + i tau`` with seeded smooth right-hand sides."""
    ex = cfg.experiment
    taus = np.linspace(float(ex.get("tau_min", 2.0)), float(ex.get("tau_max", 20.0)), int(ex.get("records", 10)))
    re = float(ex.get("re", 0.0))
    from .spectral import resolvent_solve
    return [resolvent_solve(gen, complex(re, t), smooth_rhs(grid, cfg.seed + k, alpha=cfg.alpha))
            for k, t in enumerate(taus)]


def run_interpolation(cfg, gen, grid, threads):
    chain = gen.config.chain
    if chain is None:
        raise ConfigError("interpolation needs omega_c and omega_d")
    vcfg = _verifier_config(cfg)
    st = space_time_grid_for(grid, float(cfg.experiment.get("mu", 2.0)), vcfg.s_points, chain.observation)
    reports, rows, imag_rows = [], [], []
    for k, rec in enumerate(interpolation_records(cfg, gen, grid)):
        data = lift_resolvent_data(rec, st, gen)
        rep = verify_interpolation(data, vcfg)
        reports.append(rep)
        for r in rep.rows:
            rows.append(dict(record=k, **r))
        imag_rows.append(dict(record=k, **check_imaginary_part_estimate(rec, gen)))
    passed = all(r.passed for r in reports)
    c_star = np.array([r.summary.get("c_star", 0.0) for r in reports])
    im = np.array([r["lam_im"] for r in imag_rows])
    summary = dict(passed=passed, records=len(reports), c_star_max=float(np.max(c_star)))
    good = c_star > 0
    if np.count_nonzero(good) >= 2:
        slope, icpt = np.polyfit(np.abs(im[good]), np.log(c_star[good]), 1)
        summary.update(envelope_slope=float(slope), envelope_intercept=float(icpt))
    out = {"interpolation.csv": rows_to_csv(rows), "imag_part.csv": rows_to_csv(imag_rows),
           "summary.txt": format_kv(summary)}
    if cfg.plot:
        out["interpolation.svg"] = emit_plot(reports, "interpolation")
    return out, passed


RUNNERS = {
    "simulate": run_simulate,
    "decay-fit": run_decay_fit,
    "spectrum": run_spectrum,
    "resolvent-sweep": run_resolvent_sweep,
    "carleman-elliptic": _run_carleman("elliptic"),
    "carleman-parabolic": _run_carleman("parabolic"),
    "local-energy": _run_carleman("local-energy"),
    "interpolation": run_interpolation,
}


def versions() -> dict:
    v = dict(waveplate=__version__, python=platform.python_version(), numpy=np.__version__,
             scipy=scipy.__version__, pyyaml=yaml.__version__)
    if _kernels.HAVE_NUMBA:
        v["numba"] = _kernels.numba.__version__
    return v


def run(config_path, out_dir=None, seed=None, threads=None) -> int:
    """Execute one experiment; return the exit status."""
    try:
        raw_bytes = Path(config_path).read_bytes()
        cfg = load_config(config_path)
        if seed is not None:
            cfg.seed = int(seed)
        if threads is None:
            threads = int(os.environ.get("WAVEPLATE_THREADS", "1"))
        if threads < 1:
            raise ConfigError("threads must be >= 1")
        out = Path(out_dir) if out_dir is not None else Path(config_path).with_suffix("")
        grid, chain, gen = build_problem(cfg)
        with np.errstate(over="raise", invalid="raise", divide="ignore", under="ignore"):
            artifacts, passed = RUNNERS[cfg.kind](cfg, gen, grid, threads)
    except (ConfigError, ValueError, FloatingPointError, np.linalg.LinAlgError, OSError) as exc:
        print(f"waveplate: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # keep the "no partial artifacts" contract for anything unexpected
        print(f"waveplate: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    manifest = dict(kind=cfg.kind, config_sha256=sha256(raw_bytes), seed=cfg.seed, passed=passed,
                    versions=versions(),
                    artifacts={name: sha256(text.encode()) for name, text in sorted(artifacts.items())})
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(artifacts.items()):
            (out / name).write_text(text)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"waveplate: error: cannot write artifacts: {exc}", file=sys.stderr)
        return 1
    if not passed:
        print(f"waveplate: {cfg.kind}: inequality check failed (see {out})", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="waveplate", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one experiment from a YAML config")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="output directory (default: config path without suffix)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=None, help="worker threads (env WAVEPLATE_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    return run(args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
