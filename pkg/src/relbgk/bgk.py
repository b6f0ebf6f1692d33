"""Time integration of the relativistic BGK equation on a 1D periodic domain.

    d_t f + qhat_x d_x f = (J_f - f) / (eps q0)

The collision part is advanced by one of three relaxation updates, the
transport part by first-order upwind finite volumes; the two are combined by
Lie or Strang splitting.  Every step records the conserved totals and the
entropy functional ``H = int int f ln f dq dx``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .bessel import inverse_ratio
from .errors import ConfigError, SchemeError
from .juttner import match_equilibrium, params_from_lambdas
from .phase_space import (DistributionField, MomentumGrid, conserved_totals,
                          entropy_density, moment_basis)

MODES = ("exponential", "linear")
SPLITTINGS = ("lie", "strang")

#: Negative values above this are rounding noise and are clamped to zero.
NEGATIVITY_TOL = 1e-14


@dataclass
class BgkRunConfig:
    dt: float
    t_end: float
    epsilon: float = 1.0
    x_cells: int = 1
    length: float = 1.0
    cfl_limit: float = 0.9
    mode: str = "exponential"
    conservative: bool = True
    splitting: str = "lie"
    cadence: int = 1
    closure_tol: float = 1e-13
    track_free_energy: bool = False

    def __post_init__(self):
        self.validate()

    @property
    def dx(self) -> float:
        return self.length / self.x_cells

    @property
    def n_steps(self) -> int:
        return int(np.ceil(self.t_end / self.dt - 1e-9))

    def validate(self):
        errs = []
        if not self.dt > 0:
            errs.append(f"dt: must be positive, got {self.dt!r}")
        if not self.t_end >= 0:
            errs.append(f"t_end: must be nonnegative, got {self.t_end!r}")
        if not self.epsilon > 0:
            errs.append(f"epsilon: must be positive, got {self.epsilon!r}")
        if int(self.x_cells) != self.x_cells or self.x_cells < 1:
            errs.append(f"x_cells: must be a positive integer, got {self.x_cells!r}")
        if not self.length > 0:
            errs.append(f"length: must be positive, got {self.length!r}")
        if not 0 < self.cfl_limit <= 1:
            errs.append(f"cfl_limit: must lie in (0, 1], got {self.cfl_limit!r}")
        if self.mode not in MODES:
            errs.append(f"mode: must be one of {MODES}, got {self.mode!r}")
        if self.splitting not in SPLITTINGS:
            errs.append(f"splitting: must be one of {SPLITTINGS}, got {self.splitting!r}")
        if int(self.cadence) != self.cadence or self.cadence < 1:
            errs.append(f"cadence: must be a positive integer, got {self.cadence!r}")
        if not errs and self.x_cells > 1 and self.dt > self.cfl_limit * self.dx:
            errs.append(f"dt: {self.dt} exceeds cfl_limit * dx = {self.cfl_limit * self.dx}")
        if errs:
            raise ConfigError("invalid BGK run configuration: " + "; ".join(errs))


@dataclass
class ConservationLedger:
    """Per-record totals over phase space."""

    t: list = dc_field(default_factory=list)
    mass: list = dc_field(default_factory=list)
    energy: list = dc_field(default_factory=list)
    momentum: list = dc_field(default_factory=list)
    H: list = dc_field(default_factory=list)
    notes: list = dc_field(default_factory=list)

    def record(self, t: float, grid: MomentumGrid, values: np.ndarray, dx: float):
        tot = conserved_totals(grid, values).sum(axis=0) * dx
        self.t.append(float(t))
        self.mass.append(float(tot[0]))
        self.energy.append(float(tot[1]))
        self.momentum.append(tot[2:].copy())
        self.H.append(float(entropy_density(grid, values).sum() * dx))

    def drift(self) -> dict:
        """Maximal relative deviation of each conserved total from its start."""
        m, e = np.array(self.mass), np.array(self.energy)
        p = np.array(self.momentum)
        pscale = max(np.max(np.abs(p[0])), e[0])
        return {"mass": float(np.max(np.abs(m - m[0])) / abs(m[0])),
                "energy": float(np.max(np.abs(e - e[0])) / abs(e[0])),
                "momentum": float(np.max(np.abs(p - p[0])) / pscale)}

    def h_increments(self) -> np.ndarray:
        return np.diff(np.array(self.H))


def _clamp(values: np.ndarray, notes: list | None, where: str) -> np.ndarray:
    low = values.min()
    if low >= 0:
        return values
    if low < -NEGATIVITY_TOL:
        raise SchemeError(f"{where} produced a negative density ({low:.3e})")
    if notes is not None:
        notes.append(f"{where}: clamped {int(np.sum(values < 0))} values above {low:.1e}")
    return np.maximum(values, 0.0)


@dataclass
class RelaxInfo:
    lam: np.ndarray
    iterations: int
    residual: float


def relax_step(f: DistributionField, dt: float, epsilon: float = 1.0, *,
               mode: str = "exponential", conservative: bool = True,
               lam0: np.ndarray | None = None, tol: float = 1e-13,
               notes: list | None = None) -> tuple[DistributionField, RelaxInfo]:
    """One collision step of length ``dt`` in every cell.

    ``mode="exponential"`` integrates ``d_t f = (J - f)/(eps q0)`` exactly with
    ``J`` frozen.  Freezing the closure equilibrium does not conserve mass,
    energy and momentum exactly, so by default (``conservative=True``) the
    frozen equilibrium is the one whose moments weighted by
    ``a = 1 - exp(-dt/(eps q0))`` match those of ``f``; the update
    ``f + a (J - f)`` then conserves all totals exactly and never increases
    ``H``.  It tends to the closure equilibrium as ``dt -> 0``.
    ``conservative=False`` freezes the closure equilibrium itself.

    ``mode="linear"`` is forward Euler ``f + dt/(eps q0) (J - f)``, exactly
    conservative, and positive for ``dt <= eps``.
    """
    if mode not in MODES:
        raise ConfigError(f"mode: must be one of {MODES}, got {mode!r}")
    grid = f.grid
    rate = dt / (epsilon * grid.q0)
    if mode == "exponential":
        a = -np.expm1(-rate)
        weight = a if conservative else None
        res = match_equilibrium(grid, f.values, weight, lam0=lam0, tol=tol)
        new = f.values + a * (res.values - f.values)
    else:
        res = match_equilibrium(grid, f.values, None, lam0=lam0, tol=tol)
        new = f.values + rate * (res.values - f.values)
    new = _clamp(new, notes, "relax_step")
    info = RelaxInfo(res.lam, res.iterations, res.residual)
    return DistributionField(grid, new, dict(f.meta)), info


def transport_step(f: DistributionField, dt: float, dx: float,
                   cfl_limit: float = 1.0) -> DistributionField:
    """Upwind finite-volume advection with speed ``qhat_x`` on a periodic line."""
    if f.x_cells == 1:
        return f.copy()
    v = f.grid.qhat[:, 0]
    nu = dt / dx * v
    if np.max(np.abs(nu)) > cfl_limit:
        raise SchemeError(f"CFL violated: max |qhat_x| dt/dx = {np.max(np.abs(nu)):.3f}"
                          f" > {cfl_limit}")
    vals = f.values
    pos, neg = np.maximum(nu, 0.0), np.minimum(nu, 0.0)
    # flux through the right face of each cell, in units of dx/dt
    flux = pos * vals + neg * np.roll(vals, -1, axis=0)
    new = vals - (flux - np.roll(flux, 1, axis=0))
    return DistributionField(f.grid, new, dict(f.meta))


def macro_fields(grid: MomentumGrid, values: np.ndarray) -> dict:
    """Closure quantities ``(n, u, alpha, beta)`` for every cell."""
    m = np.atleast_2d(values) @ moment_basis(grid)
    n = np.sqrt(m[:, 0] ** 2 - np.sum(m[:, 1:4] ** 2, axis=1))
    u = m[:, 1:4] / n[:, None]
    alpha = m[:, 8] / n
    return {"n": n, "u": u, "alpha": alpha, "beta": inverse_ratio(alpha)}


@dataclass
class Trajectory:
    ledger: ConservationLedger
    macro: list             # per record: dict of per-cell arrays
    final: DistributionField
    config: BgkRunConfig
    free_energy_gap: list = dc_field(default_factory=list)
    closure_residual: float = 0.0

    def write_csv(self, path) -> Path:
        path = Path(path)
        cells = self.final.x_cells
        head = ["t", "mass", "energy", "momentum_x", "momentum_y", "momentum_z", "H"]
        if self.free_energy_gap:
            head.append("free_energy_gap_min")
        for c in range(cells):
            head += [f"n_{c}", f"ux_{c}", f"uy_{c}", f"uz_{c}", f"beta_{c}"]
        led = self.ledger
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for k, t in enumerate(led.t):
                row = [t, led.mass[k], led.energy[k], *led.momentum[k], led.H[k]]
                if self.free_energy_gap:
                    row.append(self.free_energy_gap[k])
                mac = self.macro[k]
                for c in range(cells):
                    row += [mac["n"][c], *mac["u"][c], mac["beta"][c]]
                w.writerow([repr(float(x)) for x in row])
        return path


def _free_energy_gaps(grid: MomentumGrid, values: np.ndarray, lam0=None) -> np.ndarray:
    res = match_equilibrium(grid, values, None, lam0=lam0)
    _, beta, u = params_from_lambdas(res.lam)
    u0 = np.sqrt(1.0 + np.sum(u * u, axis=1))
    uq = (u0[:, None] * grid.q0[None, :] - u @ grid.q.T) / grid.q0[None, :]

    def fe(v):
        s = np.zeros_like(v)
        pos = v > 0
        s[pos] = v[pos] * np.log(v[pos])
        return -(grid.weight * uq * (s + beta[:, None] * uq * grid.q0[None, :] * v)).sum(axis=1)

    return fe(res.values) - fe(values)


def bgk_step(f: DistributionField, dt: float, config: BgkRunConfig, *,
             lam0: np.ndarray | None = None,
             notes: list | None = None) -> tuple[DistributionField, RelaxInfo]:
    """One split step: transport then relaxation (Lie) or half-whole-half (Strang)."""
    half = config.splitting == "strang"
    f = transport_step(f, 0.5 * dt if half else dt, config.dx, config.cfl_limit)
    f, info = relax_step(f, dt, config.epsilon, mode=config.mode,
                         conservative=config.conservative, lam0=lam0,
                         tol=config.closure_tol, notes=notes)
    if half:
        f = transport_step(f, 0.5 * dt, config.dx, config.cfl_limit)
    f.values = _clamp(f.values, notes, "transport_step")
    return f, info


def bgk_evolve(f0: DistributionField, config: BgkRunConfig) -> Trajectory:
    """Split-step evolution from ``f0`` to ``config.t_end``."""
    if f0.x_cells != config.x_cells:
        raise ConfigError(f"x_cells: config says {config.x_cells}, field has {f0.x_cells}")
    f0.check_physical()
    grid, dx = f0.grid, config.dx
    led = ConservationLedger()
    f = f0.copy()
    traj = Trajectory(led, [], f, config)
    lam = None

    def record(t, f):
        led.record(t, grid, f.values, dx)
        traj.macro.append(macro_fields(grid, f.values))
        if config.track_free_energy:
            traj.free_energy_gap.append(float(np.min(_free_energy_gaps(grid, f.values))))

    record(0.0, f)
    t = 0.0
    for k in range(config.n_steps):
        dt = min(config.dt, config.t_end - t)
        f, info = bgk_step(f, dt, config, lam0=lam, notes=led.notes)
        lam = info.lam
        traj.closure_residual = max(traj.closure_residual, info.residual)
        t += dt
        if (k + 1) % config.cadence == 0 or k + 1 == config.n_steps:
            record(t, f)
    traj.final = f
    return traj
