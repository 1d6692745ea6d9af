"""Pseudo-spectral time stepping for ``u_t - div(G[|Du|^2] Du) + (u.grad)u + grad p = 0``.

The viscous term is split as ``(m0/2) Lap u + div((G - m0) Du)`` (valid for
solenoidal ``u``).  The first part is integrated exactly with the
integrating factor ``exp((m0/2)|k|^2 t)``; the remainder and the convection
are advanced by an explicit three-stage, third-order Runge-Kutta scheme
(Ralston's coefficients, whose nodes increase so every stage factor is a
decaying exponential).  Each stage is Leray-projected and dealiased.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from . import diagnostics as diag
from .constitutive import ConstitutiveLaw, law_from_config
from .errors import BlowUpError, ConfigError, DomainError
from .fields import (
    _SYM_PAIRS,
    _strain_hat,
    Grid,
    SpectralField,
    dealias,
    fft,
    ifft,
    leray_project,
    random_solenoidal,
    read_checkpoint,
    taylor_green,
    velocity_gradient,
    write_checkpoint,
)
from .stress import sym_divergence_hat

__all__ = [
    "SimState",
    "SimConfig",
    "rhs_explicit",
    "step",
    "step_with_residual",
    "cfl_dt",
    "compute_pressure",
    "initial_field",
    "run",
]

log = logging.getLogger(__name__)

# Ralston third-order tableau
_C = (0.0, 0.5, 0.75)
_A = ((), (0.5,), (0.0, 0.75))
_B = (2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0)

CFL_GUARD = 1e-30


@dataclass(frozen=True)
class SimState:
    u: SpectralField
    t: float = 0.0
    step: int = 0


def _explicit_terms(u: SpectralField, law: ConstitutiveLaw) -> Tuple[np.ndarray, float]:
    """Projected, dealiased ``div((G-m0)Du - u (x) u)`` and ``int G|Du|^2``.

    For solenoidal ``u`` the convection ``(u.grad)u`` equals ``div(u (x) u)``;
    fusing it with the stress remainder needs 9 inverse and 6 forward
    transforms per evaluation.
    """
    grid = u.grid
    phys = ifft(np.concatenate((_strain_hat(u), u.coeffs)), grid.n)
    D6, up = phys[:6], phys[6:]
    s = D6[0] ** 2 + D6[1] ** 2 + D6[2] ** 2 + 2.0 * (D6[3] ** 2 + D6[4] ** 2 + D6[5] ** 2)
    if not np.isfinite(s).all():
        # overflow in a stage; let the caller flag the blow-up
        return np.full_like(u.coeffs, np.nan), math.nan
    excess = law.excess(s)
    dissipation = float(np.mean((law.m0 + excess) * s) * grid.volume)
    F = excess * D6
    for c, (i, j) in enumerate(_SYM_PAIRS):
        F[c] -= up[i] * up[j]
    total = SpectralField(grid, sym_divergence_hat(grid, fft(F)))
    return dealias(leray_project(total)).coeffs, dissipation


def rhs_explicit(state: SimState, law: ConstitutiveLaw) -> SpectralField:
    """``P[div((G[|Du|^2] - m0) Du) - (u.grad)u]``, dealiased; the pressure gradient is removed by ``P``."""
    coeffs, _ = _explicit_terms(state.u, law)
    return SpectralField(state.u.grid, coeffs, solenoidal=True)


def _decay(grid: Grid, m0: float, h: float) -> np.ndarray:
    return np.exp(-0.5 * m0 * grid.k2 * h)


def step_with_residual(state: SimState, law: ConstitutiveLaw, dt: float) -> Tuple[SimState, float]:
    """Advance one step; also return the discrete energy-balance residual.

    The residual is ``(||u_new||^2 - ||u||^2)/(2 dt) + sum_j b_j int G|DY_j|^2``,
    i.e. the energy identity with the dissipation integrated by the
    stepper's own quadrature over its stage values ``Y_j``.
    """
    if dt < 0 or not math.isfinite(dt):
        raise DomainError(f"time step must be finite and non-negative, got {dt!r}")
    if dt == 0:
        return state, 0.0
    u = state.u
    grid = u.grid
    m0 = law.m0
    u0 = u.coeffs
    N = []
    diss = []
    for i, ci in enumerate(_C):
        if i == 0:
            Y = u
        else:
            acc = _decay(grid, m0, ci * dt) * u0
            for j, aij in enumerate(_A[i]):
                if aij:
                    acc = acc + dt * aij * _decay(grid, m0, (ci - _C[j]) * dt) * N[j]
            Y = SpectralField(grid, acc, solenoidal=True)
        Nj, dj = _explicit_terms(Y, law)
        N.append(Nj)
        diss.append(dj)
    new = _decay(grid, m0, dt) * u0
    for j, bj in enumerate(_B):
        new = new + dt * bj * _decay(grid, m0, (1.0 - _C[j]) * dt) * N[j]
    u_new = SpectralField(grid, new, solenoidal=True)
    e_old = _energy(u)
    e_new = _energy(u_new)
    residual = (e_new - e_old) / (2.0 * dt) + sum(b * d for b, d in zip(_B, diss))
    return SimState(u_new, state.t + dt, state.step + 1), float(residual)


def _energy(u: SpectralField) -> float:
    g = u.grid
    return float(g.volume * np.sum(g.half_weights * np.sum(np.abs(u.coeffs) ** 2, axis=0)))


def step(state: SimState, law: ConstitutiveLaw, dt: float) -> SimState:
    """One integrating-factor RK3 step; raises :class:`BlowUpError` on non-finite output."""
    with np.errstate(over="ignore", invalid="ignore"):
        new, _ = step_with_residual(state, law, dt)
    if not new.u.is_finite():
        raise BlowUpError(f"non-finite coefficients at step {new.step} (t = {new.t:.6g})", state=state)
    return new


def cfl_dt(state: SimState, law: ConstitutiveLaw, c_cfl: float) -> float:
    """``c_cfl * min(dx/(max|u| + eps), dx^2/(2 max(G - m0) + eps))``."""
    if not 0 < c_cfl <= 1:
        raise DomainError(f"c_cfl must lie in (0, 1], got {c_cfl!r}")
    u = state.u
    dx = u.grid.dx
    up = u.to_physical()
    umax = float(np.sqrt(np.max(np.sum(up**2, axis=0))))
    grad = velocity_gradient(u)
    D = 0.5 * (grad + grad.transpose(1, 0, 2, 3, 4))
    s = np.einsum("ij...,ij...->...", D, D)
    visc = float(np.max(law.excess(s)))
    return c_cfl * min(dx / (umax + CFL_GUARD), dx**2 / (2.0 * visc + CFL_GUARD))


def compute_pressure(state: SimState, law: ConstitutiveLaw) -> SpectralField:
    """Pressure from ``-Lap p = div div(u (x) u - G[|Du|^2] Du)``; mean set to zero."""
    u = state.u
    grid = u.grid
    grad = velocity_gradient(u)
    D = 0.5 * (grad + grad.transpose(1, 0, 2, 3, 4))
    s = np.einsum("ij...,ij...->...", D, D)
    up = u.to_physical()
    F = up[:, None] * up[None, :] - law(s) * D
    Fh = fft(F) * grid.dealias_mask
    k = grid.k
    kFk = sum(k[i] * k[j] * Fh[i, j] for i in range(3) for j in range(3))
    k2 = np.where(grid.k2 == 0, 1.0, grid.k2)
    p = -kFk / k2
    p[0, 0, 0] = 0.0
    return SpectralField(grid, p[None])


# configuration and driver --------------------------------------------------

@dataclass
class SimConfig:
    n: int = 32
    box_length: float = 2 * math.pi
    law: dict = field(default_factory=lambda: {"kind": "newtonian", "m0": 1.0})
    dt: Optional[float] = None
    c_cfl: Optional[float] = None
    dt_max: Optional[float] = None
    t_end: float = 1.0
    init: dict = field(default_factory=lambda: {"type": "taylor_green"})
    output_dir: Optional[str] = None
    diag_every: int = 1
    ckpt_every: int = 0
    l_max: int = 3

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            Grid(self.n, self.box_length)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        if (self.dt is None) == (self.c_cfl is None):
            raise ConfigError("exactly one of time.dt and time.c_cfl must be given")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("time.dt must be positive")
        if self.c_cfl is not None and not 0 < self.c_cfl <= 1:
            raise ConfigError("time.c_cfl must lie in (0, 1]")
        if self.dt_max is not None and not self.dt_max > 0:
            raise ConfigError("time.dt_max must be positive")
        if not self.t_end >= 0:
            raise ConfigError("time.t_end must be non-negative")
        if int(self.l_max) != self.l_max or not 0 <= self.l_max <= 6:
            raise ConfigError("output.l_max must be an integer in 0..6")
        if self.diag_every < 1 or self.ckpt_every < 0:
            raise ConfigError("output.diag_every must be >= 1 and output.ckpt_every >= 0")
        if self.init.get("type") not in ("taylor_green", "random_solenoidal", "checkpoint"):
            raise ConfigError(f"unknown init.type {self.init.get('type')!r}")

    @property
    def grid(self) -> Grid:
        return Grid(self.n, self.box_length)

    @classmethod
    def from_dict(cls, cfg: dict) -> "SimConfig":
        try:
            grid = cfg.get("grid", {})
            time = cfg["time"]
            out = cfg.get("output", {})
            return cls(
                n=int(grid.get("n", 32)),
                box_length=float(grid.get("box_length", 2 * math.pi)),
                law=dict(cfg["law"]),
                dt=None if time.get("dt") is None else float(time["dt"]),
                c_cfl=None if time.get("c_cfl") is None else float(time["c_cfl"]),
                dt_max=None if time.get("dt_max") is None else float(time["dt_max"]),
                t_end=float(time["t_end"]),
                init=dict(cfg.get("init", {"type": "taylor_green"})),
                output_dir=out.get("dir"),
                diag_every=int(out.get("diag_every", 1)),
                ckpt_every=int(out.get("ckpt_every", 0)),
                l_max=int(out.get("l_max", 3)),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed config: {exc!r}") from None

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        time = {"t_end": self.t_end}
        for key in ("dt", "c_cfl", "dt_max"):
            if getattr(self, key) is not None:
                time[key] = getattr(self, key)
        return {
            "grid": {"n": self.n, "box_length": self.box_length},
            "law": dict(self.law),
            "time": time,
            "init": dict(self.init),
            "output": {"dir": self.output_dir, "diag_every": self.diag_every,
                       "ckpt_every": self.ckpt_every, "l_max": self.l_max},
        }


def initial_field(config: SimConfig) -> SpectralField:
    init = config.init
    grid = config.grid
    kind = init["type"]
    if kind == "taylor_green":
        return taylor_green(grid)
    if kind == "random_solenoidal":
        try:
            return random_solenoidal(grid, int(init["seed"]), float(init["k_max"]), float(init["target_h3"]))
        except KeyError as exc:
            raise ConfigError(f"init.random_solenoidal needs key {exc}") from None
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
    path = init.get("path")
    if not path or not os.path.isfile(path):
        raise ConfigError(f"checkpoint not found: {path}")
    u, _, _ = read_checkpoint(path)
    if u.grid != grid:
        raise ConfigError(f"checkpoint grid {u.grid} does not match config grid {grid}")
    return dealias(leray_project(u))


def _write_outputs(config, series, state):
    if not config.output_dir:
        return
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    diag.write_series(series, out / "diagnostics.csv")
    summary = diag.summarize(series)
    summary["final_step"] = state.step
    (out / "summary.json").write_text(json.dumps(summary, indent=2))


def _checkpoint(config, state):
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_checkpoint(out / f"ckpt_{state.step:08d}.nnf", state.u, state.t, state.step)


def run(config: SimConfig, law: Optional[ConstitutiveLaw] = None,
        u0: Optional[SpectralField] = None):
    """Integrate to ``config.t_end``; return ``(final_state, DiagnosticsSeries)``.

    ``law`` and ``u0`` override the config's law and initial data.
    Raises :class:`StructuralError` for inadmissible laws and
    :class:`BlowUpError` (carrying the last finite state and the series) if
    the run produces non-finite values.
    """
    if law is None:
        try:
            law = law_from_config(config.law)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
    law.require_structural()
    if u0 is None:
        u0 = initial_field(config)
    elif u0.grid != config.grid:
        raise ConfigError("initial field grid does not match config grid")

    state = SimState(u0, 0.0, 0)
    series = diag.DiagnosticsSeries(l_max=config.l_max)
    series.append(diag.record(state, law, config.l_max))
    ckpt = bool(config.output_dir) and config.ckpt_every > 0
    if ckpt:
        _checkpoint(config, state)

    t_end = config.t_end
    if config.dt is not None:
        n_steps = t_end / config.dt
        n_steps = int(round(n_steps)) if abs(n_steps - round(n_steps)) < 1e-9 else int(math.ceil(n_steps))
    else:
        n_steps = None

    worst = 0.0
    while True:
        if n_steps is not None:
            if state.step >= n_steps:
                break
            if state.step + 1 == n_steps:
                t_next, dt = t_end, t_end - state.t
            else:
                t_next, dt = (state.step + 1) * config.dt, config.dt
        else:
            remaining = t_end - state.t
            if remaining <= 1e-12 * max(t_end, 1.0):
                break
            dt = cfl_dt(state, law, config.c_cfl)
            if config.dt_max is not None:
                dt = min(dt, config.dt_max)
            dt = min(dt, remaining)
            t_next = t_end if dt == remaining else state.t + dt
        with np.errstate(over="ignore", invalid="ignore"):
            new, residual = step_with_residual(state, law, dt)
        new = replace(new, t=t_next)
        if not (new.u.is_finite() and math.isfinite(residual)):
            series.max_abs_energy_residual = worst
            _write_outputs(config, series, state)
            raise BlowUpError(
                f"non-finite solution at step {new.step} (t = {new.t:.6g})", state=state, series=series
            )
        state = new
        worst = max(worst, abs(residual))
        last = (n_steps is not None and state.step >= n_steps) or (
            n_steps is None and t_end - state.t <= 1e-12 * max(t_end, 1.0)
        )
        if state.step % config.diag_every == 0 or last:
            series.append(diag.record(state, law, config.l_max, residual))
        if ckpt and (state.step % config.ckpt_every == 0 or last):
            _checkpoint(config, state)
        if state.step % 100 == 0:
            log.info("step %d t=%.6g dt=%.3g", state.step, state.t, dt)
    series.max_abs_energy_residual = worst
    _write_outputs(config, series, state)
    return state, series
