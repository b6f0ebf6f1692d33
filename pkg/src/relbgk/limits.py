"""Non-relativistic, ultra-relativistic and hydrodynamic limits.

Each limit is checked as a measured convergence order along a ladder of
small parameters ``eps``; the order is the least-squares slope of
``log(metric)`` against ``log(eps)``.

Scalings used (dimensionless, ``m = c = 1``):

* non-relativistic: ``q = eps qbar`` and ``f(q) = eps^-3 f_nr(q / eps)``;
* ultra-relativistic: ``q = qbar / eps`` and ``f(q) = eps^3 f_ur(eps q)``;
* hydrodynamic: the collision term carries ``1/eps``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from .bessel import chi, inverse_ratio, log_m_beta, m_beta, psi
from .bgk import BgkRunConfig, bgk_evolve, bgk_step
from .errors import DomainError
from .juttner import (JuttnerParams, _rest_energy, juttner_eval, match_equilibrium,
                      params_from_lambdas)
from .phase_space import DistributionField, MomentumGrid


def fit_order(eps, values) -> float:
    """Least-squares slope of ``log(values)`` versus ``log(eps)``."""
    eps, values = np.asarray(eps, dtype=float), np.asarray(values, dtype=float)
    if len(eps) < 2 or np.any(values <= 0):
        raise DomainError("order fit needs at least two positive values")
    return float(np.polyfit(np.log(eps), np.log(values), 1)[0])


@dataclass
class LadderTable:
    """One row per ``eps`` plus the fitted order of every metric column."""

    eps: np.ndarray
    metrics: dict

    def order(self, name: str) -> float:
        return fit_order(self.eps, self.metrics[name])

    def orders(self) -> dict:
        return {k: self.order(k) for k in self.metrics if np.all(np.asarray(self.metrics[k]) > 0)}

    def is_monotone(self, name: str) -> bool:
        """True if the metric decreases strictly as ``eps`` decreases."""
        idx = np.argsort(self.eps)
        v = np.asarray(self.metrics[name])[idx]
        return bool(np.all(np.diff(v) > 0))

    def write_csv(self, path) -> Path:
        path = Path(path)
        names = list(self.metrics)
        orders = self.orders()
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", *names])
            for k, e in enumerate(self.eps):
                w.writerow([repr(float(e))] + [repr(float(self.metrics[n][k])) for n in names])
            w.writerow(["fitted_order"] + [repr(orders[n]) if n in orders else "" for n in names])
        return path


# -- non-relativistic ---------------------------------------------------

@dataclass(frozen=True)
class ClassicalState:
    n_nr: float
    u_nr: tuple
    T_nr: float

    def __post_init__(self):
        object.__setattr__(self, "u_nr", tuple(float(v) for v in np.broadcast_to(self.u_nr, (3,))))
        if not self.T_nr > 0:
            raise DomainError(f"degenerate classical state: T_nr = {self.T_nr!r} <= 0")

    @property
    def beta_nr(self) -> float:
        return 1.0 / self.T_nr

    @classmethod
    def from_samples(cls, grid: MomentumGrid, f_nr: np.ndarray) -> "ClassicalState":
        """Density, mean velocity and the variance temperature of ``f_nr``."""
        w = grid.weight
        n = w * np.sum(f_nr)
        u = w * (grid.q.T @ f_nr) / n
        var = w * np.sum(np.sum(grid.q * grid.q, axis=1) * f_nr) / n
        t = (var - u @ u) / 3.0
        if not t > 0:
            raise DomainError(f"degenerate classical state: variance temperature {t!r} <= 0")
        return cls(float(n), tuple(u), float(t))


def classical_maxwellian(state: ClassicalState, q) -> np.ndarray:
    """``n (2 pi T)^-3/2 exp(-|q - u|^2 / (2T))``."""
    d = np.asarray(q, dtype=float) - np.asarray(state.u_nr)
    return state.n_nr * (2 * np.pi * state.T_nr) ** -1.5 * np.exp(
        -np.sum(d * d, axis=-1) / (2.0 * state.T_nr))


def classical_grid(state: ClassicalState, width: float = 8.0, n_nodes: int = 48) -> MomentumGrid:
    s = np.sqrt(state.T_nr)
    return MomentumGrid(width * s, n_nodes, center=state.u_nr)


def scaled_juttner_nr(n: float, beta_nr: float, u_nr, eps: float, qbar) -> np.ndarray:
    """``eps^3 J(n, beta_nr/eps^2, eps u_nr; eps qbar)``, evaluated without overflow."""
    beta = beta_nr / eps ** 2
    p = JuttnerParams(n, beta, eps * np.asarray(u_nr, dtype=float))
    lnj = juttner_log_scaled(p, eps * np.asarray(qbar, dtype=float))
    return np.exp(lnj + 3.0 * np.log(eps))


def juttner_log_scaled(params: JuttnerParams, q) -> np.ndarray:
    # ln J with ln M(beta) + beta combined, finite for beta far above 700
    q = np.asarray(q, dtype=float)
    qx, qy, qz = q[..., 0], q[..., 1], q[..., 2]
    q0 = np.sqrt(1.0 + qx * qx + qy * qy + qz * qz)
    x = _rest_energy(params.u, params.u0, q0, qx, qy, qz)
    b = params.beta
    log_m_plus_b = np.log(4.0 * np.pi * special.kve(2, b) / b)
    return np.log(params.n) - log_m_plus_b - b * x


def nr_closure(grid: MomentumGrid, f_nr: np.ndarray, eps: float) -> tuple[float, np.ndarray, float]:
    """Closure ``(n_f, u_f, beta_f)`` of ``f(q) = eps^-3 f_nr(q/eps)``.

    Works in the scaled variable and evaluates ``1 - alpha`` without
    cancellation, since ``alpha = 1 - O(eps^2)``.
    """
    w, qb = grid.weight, grid.q
    qq = np.sum(qb * qb, axis=1)
    q0 = np.sqrt(1.0 + eps * eps * qq)
    n0 = w * np.sum(f_nr)
    nv = w * eps * (qb.T @ (f_nr / q0))
    nf = np.sqrt(n0 * n0 - nv @ nv)
    # n - int f/q0 = (n - N0) + int f (1 - 1/q0)
    gap = -(nv @ nv) / (nf + n0) + w * np.sum(f_nr * eps * eps * qq / (q0 * (q0 + 1.0)))
    one_minus_alpha = gap / nf
    beta = inverse_ratio(1.0 - one_minus_alpha, tol=1e-14)
    return float(nf), nv / nf, float(beta)


def nr_limit_study(n: float, beta_nr: float, u_nr, eps_list, *, grid: MomentumGrid | None = None,
                   f_nr: np.ndarray | None = None) -> LadderTable:
    """Distance between the scaled Juttner and the classical Maxwellian.

    ``D`` is the sup-norm of ``eps^3 J(n, beta_nr/eps^2, eps u_nr; eps qbar) - G``
    on the grid; ``beta_rel`` is ``|eps^2 beta_f / beta_nr - 1|`` with
    ``beta_f`` from the full closure of the scaled density ``f_nr``
    (the Maxwellian itself by default).
    """
    state = ClassicalState(n, u_nr, 1.0 / beta_nr)
    grid = grid or classical_grid(state)
    if f_nr is None:
        f_nr = classical_maxwellian(state, grid.q)
    g = classical_maxwellian(state, grid.q)
    st = ClassicalState.from_samples(grid, f_nr)
    d, br = [], []
    for eps in eps_list:
        if not 0 < eps <= 0.3:
            raise DomainError(f"epsilon must lie in (0, 0.3], got {eps!r}")
        j = scaled_juttner_nr(n, beta_nr, u_nr, eps, grid.q)
        d.append(float(np.max(np.abs(j - g))))
        _, _, beta_f = nr_closure(grid, f_nr, eps)
        br.append(abs(eps * eps * beta_f / st.beta_nr - 1.0))
    return LadderTable(np.asarray(eps_list, dtype=float), {"D": np.array(d), "beta_rel": np.array(br)})


@dataclass(frozen=True)
class RestEnergySplit:
    rest: float
    bulk_kinetic: float
    internal: float
    energy: float

    @property
    def residual(self) -> float:
        """``e_f + bulk - rest - internal``; of order ``eps^3`` or smaller."""
        return self.energy + self.bulk_kinetic - self.rest - self.internal


def rest_energy_decomposition(grid: MomentumGrid, f_nr: np.ndarray, eps: float) -> RestEnergySplit:
    """Split the proper energy of the scaled density into rest, bulk and internal parts."""
    st = ClassicalState.from_samples(grid, f_nr)
    w, qb = grid.weight, grid.q
    q = eps * qb
    q0 = np.sqrt(1.0 + np.sum(q * q, axis=1))
    nf, uf, _ = nr_closure(grid, f_nr, eps)
    u0 = np.sqrt(1.0 + uf @ uf)
    uq = u0 * q0 - q @ uf
    e = w * np.sum(uq * uq / q0 * f_nr)
    u = np.asarray(st.u_nr)
    return RestEnergySplit(rest=st.n_nr, bulk_kinetic=0.5 * eps ** 2 * st.n_nr * (u @ u),
                           internal=1.5 * eps ** 2 * st.n_nr * st.T_nr, energy=float(e))


# -- ultra-relativistic -------------------------------------------------

@dataclass(frozen=True)
class UltraRelState:
    n_ur: float
    u_ur: tuple
    beta_ur: float

    @property
    def e_ur(self) -> float:
        return 3.0 * self.n_ur / self.beta_ur

    @property
    def p_ur(self) -> float:
        return self.n_ur / self.beta_ur

    @classmethod
    def from_samples(cls, grid: MomentumGrid, f_ur: np.ndarray) -> "UltraRelState":
        w, qb = grid.weight, grid.q
        r = np.linalg.norm(qb, axis=1)
        if np.any(r == 0):
            raise DomainError("ultra-relativistic moments need a grid avoiding qbar = 0")
        n0 = w * np.sum(f_ur)
        nv = w * (qb.T @ (f_ur / r))
        n = np.sqrt(n0 * n0 - nv @ nv)
        return cls(float(n), tuple(nv / n), float(2.0 * w * np.sum(f_ur / r) / n))


def massless_juttner(state: UltraRelState, qbar) -> np.ndarray:
    """``n beta^3/(8 pi) exp(-beta (|q| u0 - u.q))``."""
    qbar = np.asarray(qbar, dtype=float)
    u = np.asarray(state.u_ur)
    u0 = np.sqrt(1.0 + u @ u)
    r = np.linalg.norm(qbar, axis=-1)
    return state.n_ur * state.beta_ur ** 3 / (8 * np.pi) * np.exp(
        -state.beta_ur * (r * u0 - qbar @ u))


def massless_energy_pressure(grid: MomentumGrid, state: UltraRelState) -> tuple[float, float]:
    """Proper energy and pressure of the massless equilibrium by quadrature."""
    j = massless_juttner(state, grid.q)
    r = np.linalg.norm(grid.q, axis=1)
    q4 = np.column_stack([r, grid.q])
    t = grid.weight * (q4.T * (j / r)) @ q4
    u = np.asarray(state.u_ur)
    ucov = np.concatenate([[np.sqrt(1.0 + u @ u)], -u])
    e = ucov @ t @ ucov
    trace = t[0, 0] - np.trace(t[1:, 1:])
    return float(e), float((e - trace) / 3.0)


def ur_closure(grid: MomentumGrid, f_ur: np.ndarray, eps: float) -> tuple[float, np.ndarray, float]:
    """Closure ``(n_f, u_f, beta_f)`` of ``f(q) = eps^3 f_ur(eps q)``."""
    w, qb = grid.weight, grid.q
    s = np.sqrt(eps * eps + np.sum(qb * qb, axis=1))
    n0 = w * np.sum(f_ur)
    nv = w * (qb.T @ (f_ur / s))
    nf = np.sqrt(n0 * n0 - nv @ nv)
    alpha = eps * w * np.sum(f_ur / s) / nf
    return float(nf), nv / nf, float(inverse_ratio(alpha))


def scaled_juttner_ur(nf: float, uf, beta_f: float, eps: float, qbar) -> np.ndarray:
    """``eps^-3 J(n_f, beta_f, u_f; qbar/eps)``."""
    qbar = np.asarray(qbar, dtype=float)
    uf = np.asarray(uf, dtype=float)
    s = np.sqrt(eps * eps + np.sum(qbar * qbar, axis=-1))
    u0 = np.sqrt(1.0 + uf @ uf)
    expo = -beta_f / eps * (u0 * s - qbar @ uf)
    return np.exp(np.log(nf) - log_m_beta(beta_f) - 3.0 * np.log(eps) + expo)


def ur_grid(beta_ur: float, u_ur=(0.0, 0.0, 0.0), n_nodes: int = 64, tail: float = 1e-12) -> MomentumGrid:
    u = np.asarray(u_ur, dtype=float)
    un = float(np.linalg.norm(u))
    decay = beta_ur * (np.sqrt(1.0 + un * un) - un)
    q = (np.log(1.0 / tail) + 3.0 * np.log(np.log(1.0 / tail))) / decay
    return MomentumGrid(q, n_nodes)


def ur_limit_study(grid: MomentumGrid, f_ur: np.ndarray, eps_list) -> LadderTable:
    """Convergence of ``beta_f/eps`` to ``beta_ur`` and of the equilibria."""
    st = UltraRelState.from_samples(grid, f_ur)
    jur = massless_juttner(st, grid.q)
    bd, dd, ep = [], [], []
    for eps in eps_list:
        if not 0 < eps <= 0.3:
            raise DomainError(f"epsilon must lie in (0, 0.3], got {eps!r}")
        nf, uf, bf = ur_closure(grid, f_ur, eps)
        bd.append(abs(bf / eps - st.beta_ur))
        dd.append(float(np.max(np.abs(scaled_juttner_ur(nf, uf, bf, eps, grid.q) - jur))))
        # proper energy over pressure of the closure equilibrium, -> 3
        ep.append(abs(psi(bf) * bf - 3.0))
    return LadderTable(np.asarray(eps_list, dtype=float),
                       {"beta_dev": np.array(bd), "D_ur": np.array(dd), "e_over_p_dev": np.array(ep)})


def psi_near_zero(betas) -> np.ndarray:
    """``|Psi(beta) - 3/beta| / beta``, bounded as ``beta -> 0``."""
    b = np.asarray(betas, dtype=float)
    return np.abs(psi(b) - 3.0 / b) / b


def inverse_m_small_beta(betas) -> np.ndarray:
    """Relative error of ``1/M(beta) ~ beta^3/(8 pi)``."""
    b = np.asarray(betas, dtype=float)
    return np.abs(b ** 3 / (8 * np.pi) * m_beta(b) - 1.0)


# -- hydrodynamic (Euler) limit -----------------------------------------

@dataclass
class EulerState:
    """Per-cell equilibrium parameters, plus the grid samples they came from."""

    n: np.ndarray
    u: np.ndarray
    beta: np.ndarray
    dx: float
    t: float = 0.0
    grid: MomentumGrid | None = None
    equilibrium: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.n <= 0) or np.any(self.beta <= 0):
            raise DomainError("Euler state needs positive n and beta in every cell")

    @classmethod
    def from_field(cls, field: DistributionField, dx: float, t: float = 0.0) -> "EulerState":
        """Equilibrium with the same discrete mass, energy and momentum per cell."""
        grid = field.grid
        res = match_equilibrium(grid, field.values, np.ones(grid.size))
        n, beta, u = params_from_lambdas(res.lam)
        return cls(n, u, beta, dx, t, grid, res.values)

    @classmethod
    def from_params(cls, n, u, beta, dx: float, t: float = 0.0) -> "EulerState":
        return cls(np.asarray(n, float), np.atleast_2d(np.asarray(u, float)),
                   np.asarray(beta, float), dx, t)

    @property
    def u0(self) -> np.ndarray:
        return np.sqrt(1.0 + np.sum(self.u * self.u, axis=1))


@dataclass
class EulerResidual:
    mass: np.ndarray
    energy: np.ndarray
    momentum: np.ndarray      # (cells, 3)
    entropy: np.ndarray       # left side of the entropy inequality, per cell

    @property
    def max_residual(self) -> float:
        return float(max(np.max(np.abs(self.mass)), np.max(np.abs(self.energy)),
                         np.max(np.abs(self.momentum))))

    @property
    def max_entropy(self) -> float:
        return float(np.max(self.entropy))

    def norms(self) -> dict:
        return {"mass": float(np.max(np.abs(self.mass))),
                "energy": float(np.max(np.abs(self.energy))),
                "momentum": float(np.max(np.abs(self.momentum))),
                "entropy_max": self.max_entropy}


def _ddx(a: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(a, -1, axis=0) - np.roll(a, 1, axis=0)) / (2.0 * dx)


def _analytic_terms(s: EulerState):
    n, u, b, u0 = s.n, s.u, s.beta, s.u0
    p, nchi = n / b, n * chi(b)
    dens = {"mass": n * u0, "energy": -p + nchi * u0 ** 2,
            "momentum": nchi[:, None] * u * u0[:, None]}
    mom_flux = nchi[:, None] * u * u[:, :1]
    mom_flux[:, 0] += p
    flux = {"mass": n * u[:, 0], "energy": nchi * u[:, 0] * u0, "momentum": mom_flux}
    lg = np.log(n) - log_m_beta(b) - b * psi(b)
    return dens, flux, n * u0 * lg, n * u[:, 0] * lg


def _kinetic_terms(s: EulerState):
    g, j = s.grid, s.equilibrium
    w, v = g.weight, g.qhat[:, 0]
    psi_b = np.column_stack([np.ones(g.size), g.q0, g.q])
    dens = w * j @ psi_b
    vp, vm = np.maximum(v, 0.0), np.minimum(v, 0.0)
    fp = w * (j * vp) @ psi_b
    fm = w * (j * vm) @ psi_b
    face = fp + np.roll(fm, -1, axis=0)
    s_j = np.where(j > 0, j * np.log(np.where(j > 0, j, 1.0)), 0.0)
    ent = w * s_j.sum(axis=1)
    eface = w * ((s_j * vp).sum(axis=1) + np.roll((s_j * vm).sum(axis=1), -1))
    return dens, face, ent, eface


def euler_residual(s0: EulerState, s1: EulerState, method: str = "kinetic") -> EulerResidual:
    """Residuals of the relativistic Euler system between two snapshots.

    ``method="centered"`` uses the closed-form densities and fluxes (with
    ``chi``) and centered differences, spatial terms averaged over the two
    snapshots.  ``method="kinetic"`` uses the discretisation the kinetic
    scheme converges to as ``eps -> 0``: grid moments of the equilibria and
    upwind-split equilibrium fluxes at the first snapshot.  The centered
    form carries the O(dx) numerical viscosity of the upwind solver as an
    eps-independent floor; the kinetic form does not.
    """
    dt = s1.t - s0.t
    if not dt > 0:
        raise DomainError("snapshots must be ordered in time")
    dx = s0.dx
    if method == "centered":
        d0, f0, e0, g0 = _analytic_terms(s0)
        d1, f1, e1, g1 = _analytic_terms(s1)
        res = {k: (d1[k] - d0[k]) / dt + _ddx(0.5 * (f0[k] + f1[k]), dx) for k in d0}
        ent = (e1 - e0) / dt + _ddx(0.5 * (g0 + g1), dx)
        return EulerResidual(res["mass"], res["energy"], res["momentum"], ent)
    if method != "kinetic":
        raise DomainError(f"unknown residual method {method!r}")
    if s0.equilibrium is None or s1.equilibrium is None:
        raise DomainError("kinetic residual needs grid equilibria (use EulerState.from_field)")
    d0, face, e0, eface = _kinetic_terms(s0)
    d1, _, e1, _ = _kinetic_terms(s1)
    r = (d1 - d0) / dt + (face - np.roll(face, 1, axis=0)) / dx
    ent = (e1 - e0) / dt + (eface - np.roll(eface, 1)) / dx
    return EulerResidual(r[:, 0], r[:, 1], r[:, 2:], ent)


def smooth_initial_state(x_cells: int, length: float, *, n_amp: float = 0.1, u_amp: float = 0.1,
                         beta: float = 5.0, beta_amp: float = 0.05):
    """Single-mode periodic profiles of ``(n, u_x, beta)``."""
    x = (np.arange(x_cells) + 0.5) * length / x_cells
    k = 2 * np.pi / length
    n = 1.0 + n_amp * np.sin(k * x)
    u = np.zeros((x_cells, 3))
    u[:, 0] = u_amp * np.cos(k * x)
    b = beta * (1.0 + beta_amp * np.sin(k * x + 0.5))
    return n, u, b


def local_equilibrium_field(grid: MomentumGrid, n, u, beta) -> DistributionField:
    vals = np.vstack([juttner_eval(JuttnerParams(n[c], beta[c], u[c]), grid.q)
                      for c in range(len(n))])
    return DistributionField(grid, vals)


@dataclass
class EulerStudy:
    table: LadderTable
    entropy_max: dict          # eps -> max of the entropy expression over probes
    residuals: dict            # eps -> list of EulerResidual (kinetic)


def euler_limit_study(eps_list, *, x_cells: int = 64, n_nodes: int = 16, length: float = 8.0,
                      dt: float = 0.02, t_probe: float = 0.5, probes: int = 3,
                      beta: float = 5.0, half_width: float | None = None) -> EulerStudy:
    """Run the eps-scaled BGK solver from smooth local-equilibrium data and
    evaluate Euler residuals from consecutive snapshots after ``t_probe``."""
    q = half_width or (1.0 + 6.0 / np.sqrt(beta)) * 1.6
    grid = MomentumGrid(q, n_nodes)
    n, u, b = smooth_initial_state(x_cells, length, beta=beta)
    f0 = local_equilibrium_field(grid, n, u, b)
    kin, cen, ent, resid = [], [], {}, {}
    for eps in eps_list:
        cfg = BgkRunConfig(dt=dt, t_end=t_probe, epsilon=eps, x_cells=x_cells, length=length)
        traj = bgk_evolve(f0, cfg)
        f, t = traj.final, t_probe
        states = [EulerState.from_field(f, cfg.dx, t)]
        lam = None
        for _ in range(probes):
            f, info = bgk_step(f, dt, cfg, lam0=lam)
            lam = info.lam
            t += dt
            states.append(EulerState.from_field(f, cfg.dx, t))
        rk = [euler_residual(a, c) for a, c in zip(states[:-1], states[1:])]
        rc = [euler_residual(a, c, "centered") for a, c in zip(states[:-1], states[1:])]
        kin.append(max(r.max_residual for r in rk))
        cen.append(max(r.max_residual for r in rc))
        ent[float(eps)] = max(r.max_entropy for r in rk)
        resid[float(eps)] = rk
    table = LadderTable(np.asarray(eps_list, dtype=float),
                        {"euler_residual": np.array(kin), "centered_residual": np.array(cen)})
    return EulerStudy(table, ent, resid)
