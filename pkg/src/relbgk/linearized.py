"""Linearization of the BGK operator around the global equilibrium ``J0``.

With ``g = J0 + sqrt(J0) f`` the collision term becomes

    (J_g - g) / q0 = sqrt(J0) (L f + Gamma(f)),    L f = (P f - f) / q0,

where ``P`` is the projection onto the five-dimensional space ``N`` spanned
by ``sqrt(J0)`` and ``q^mu sqrt(J0)``.  Everything here lives on a symmetric
momentum cube.  Dense matrices are meant for grids up to roughly 12^3 nodes;
:func:`apply_P` is matrix-free and works on any size.

The background ``J0 = exp(-beta0 q0) / Z`` is normalised so that its grid
integral is exactly one, and the scalars entering ``P`` are the grid moments
of ``J0`` (they tend to ``alpha0``, ``Psi(beta0)`` and ``beta0`` as the grid is
refined).  With these constants ``P`` is an exact projection on the grid.
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .bessel import inverse_ratio, psi, ratio_k1k2
from .errors import DomainError, NonTimelikeError, SchemeError
from .juttner import match_equilibrium
from .phase_space import MomentumGrid

#: Largest node count for which dense assembly is allowed.
MAX_DENSE_NODES = 4096

#: Relative norm growth tolerated by :func:`evolve_fourier_mode`.
GROWTH_TOL = 1e-10

OPERATOR_MAGIC = b"RBGKOP01"
FLAVORS = ("P", "L", "K", "B_hat")


@dataclass(frozen=True)
class Equilibrium0:
    """Background equilibrium ``J(1, beta0, 0)`` sampled on a grid."""

    grid: MomentumGrid
    alpha0: float
    beta0: float
    kappa0: float
    psi0: float
    J0: np.ndarray
    sqrtJ0: np.ndarray
    # grid counterparts of alpha0, psi0, kappa0 and beta0
    alpha_d: float
    psi_d: float
    kappa_d: float
    beta_d: float
    log_c: float            # J0 = exp(log_c - beta0 (q0 - 1))

    @classmethod
    def from_beta(cls, grid: MomentumGrid, beta0: float) -> "Equilibrium0":
        return cls.build(grid, alpha0=ratio_k1k2(beta0))

    @classmethod
    def build(cls, grid: MomentumGrid, alpha0: float) -> "Equilibrium0":
        if not 0.0 < alpha0 < 1.0:
            raise DomainError(f"alpha0 must lie in (0, 1), got {alpha0!r}")
        if not grid.is_symmetric:
            raise DomainError("the linearized operator needs a grid centred at q = 0")
        beta0 = float(inverse_ratio(alpha0))
        kappa0 = 3.0 * alpha0 / beta0 + alpha0 ** 2 - 1.0
        w, q0 = grid.weight, grid.q0
        j = np.exp(-beta0 * (q0 - 1.0))
        log_c = -np.log(w * j.sum())
        j *= np.exp(log_c)
        alpha_d = float(w * np.sum(j / q0))
        psi_d = float(w * np.sum(j * q0))
        qq = float(w * np.sum(grid.q[:, 0] ** 2 * j / q0))
        return cls(grid, float(alpha0), beta0, float(kappa0), float(psi(beta0)), j,
                   np.sqrt(j), alpha_d, psi_d, alpha_d * psi_d - 1.0, 1.0 / qq, float(log_c))

    @property
    def size(self) -> int:
        return self.grid.size

    def null_basis(self) -> np.ndarray:
        """Columns ``sqrt(J0) * (1, q0, qx, qy, qz)`` spanning ``N``."""
        g = self.grid
        return self.sqrtJ0[:, None] * np.column_stack([np.ones(g.size), g.q0, g.q])

    def inner_q0(self, f, h) -> complex:
        """``<f, h>_{q0} = int f conj(h) dq / q0``."""
        return self.grid.weight * np.sum(f * np.conj(h) / self.grid.q0)

    def inner(self, f, h) -> complex:
        return self.grid.weight * np.sum(f * np.conj(h))

    def norm(self, f) -> float:
        return float(np.sqrt(self.grid.weight * np.sum(np.abs(f) ** 2)))


@dataclass(frozen=True)
class SignedMoments:
    m_density: float        # int h dq
    m_flux: np.ndarray      # int q h dq / q0
    m_alpha: float          # int h dq / q0

    @property
    def m_nsq(self) -> float:
        return self.m_density ** 2 - float(np.dot(self.m_flux, self.m_flux))


def signed_moments(grid: MomentumGrid, h) -> SignedMoments:
    """Moment aggregates of a possibly signed momentum function ``h``."""
    h = np.asarray(h)
    w, q0 = grid.weight, grid.q0
    return SignedMoments(w * np.sum(h), w * (h / q0) @ grid.q, w * np.sum(h / q0))


def macro_of_perturbed(eq0: Equilibrium0, h) -> tuple[float, np.ndarray, float]:
    """``(n_g, n_g u_g, n_g alpha_g)`` for ``g = J0 + h``."""
    m = signed_moments(eq0.grid, h)
    rad = 1.0 + m.m_nsq + 2.0 * m.m_density
    if not rad > 0:
        raise NonTimelikeError(f"perturbation too large: n_g^2 = {rad:.3e}")
    return float(np.sqrt(rad)), m.m_flux, eq0.alpha_d + m.m_alpha


def _coefficients(eq0: Equilibrium0, m: SignedMoments):
    k = eq0.kappa_d
    a = (eq0.psi_d * m.m_alpha - m.m_density) / k
    b = (eq0.alpha_d * m.m_density - m.m_alpha) / k
    return a, b, eq0.beta_d * m.m_flux


def apply_P(eq0: Equilibrium0, f) -> np.ndarray:
    """Matrix-free action ``P f = (A + B q0 + C . q) sqrt(J0)``."""
    f = np.asarray(f)
    a, b, c = _coefficients(eq0, signed_moments(eq0.grid, f * eq0.sqrtJ0))
    g = eq0.grid
    return (a + b * g.q0 + g.q @ c) * eq0.sqrtJ0


@dataclass
class LinearOperatorMatrix:
    flavor: str
    matrix: np.ndarray
    weights: np.ndarray         # plain quadrature weights
    weights_q0: np.ndarray      # weights of <.,.>_{q0}
    grid: MomentumGrid
    zeta: np.ndarray | None = None

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, other):
        return self.matrix @ other

    def idempotence_residual(self) -> float:
        return float(np.max(np.abs(self.matrix @ self.matrix - self.matrix)))

    def symmetry_residual(self, q0_weighted: bool = False) -> float:
        """Max deviation of the Gram-weighted matrix from its transpose."""
        w = self.weights_q0 if q0_weighted else self.weights
        g = w[:, None] * self.matrix
        return float(np.max(np.abs(g - g.T)) / max(np.max(np.abs(g)), 1e-300))

    def singular_values(self) -> np.ndarray:
        return linalg.svdvals(self.matrix)

    def rank(self, gap: float = 1e6) -> int:
        s = self.singular_values()
        ratios = s[:-1] / np.maximum(s[1:], 1e-300)
        k = int(np.argmax(ratios))
        return k + 1 if ratios[k] >= gap else len(s)

    def spectrum(self) -> np.ndarray:
        if self.flavor == "L":
            return linalg.eigvalsh(self.matrix)
        return linalg.eigvals(self.matrix)

    def eigen_residual(self) -> float:
        """``max_k |A v_k - lambda_k v_k| / |A|`` over the computed eigenpairs
        (unit ``v_k``, spectral norms); cross-checks the dense eigensolver."""
        a = self.matrix
        lam, v = linalg.eigh(a) if self.flavor == "L" else linalg.eig(a)
        v = v / np.linalg.norm(v, axis=0)
        r = np.linalg.norm(a @ v - v * lam[None, :], axis=0)
        return float(np.max(r) / max(np.linalg.norm(a, 2), 1e-300))

    def save(self, path) -> Path:
        return save_operator(self, path)


def _check_dense(grid: MomentumGrid):
    if grid.size > MAX_DENSE_NODES:
        raise DomainError(f"dense assembly limited to {MAX_DENSE_NODES} nodes, grid has {grid.size}")


def _wrap(eq0: Equilibrium0, flavor: str, mat: np.ndarray, zeta=None) -> LinearOperatorMatrix:
    g = eq0.grid
    w = np.full(g.size, g.weight)
    return LinearOperatorMatrix(flavor, mat, w, w / g.q0, g,
                                None if zeta is None else np.asarray(zeta, dtype=float))


def _p_matrix(eq0: Equilibrium0) -> np.ndarray:
    g, s, k = eq0.grid, eq0.sqrtJ0, eq0.kappa_d
    q0, q = g.q0, g.q
    # rows: output node; columns: input node
    c = ((eq0.alpha_d * q0 - 1.0)[:, None] / k
         + (eq0.psi_d - q0)[:, None] / (k * q0[None, :])
         + eq0.beta_d * (q @ q.T) / q0[None, :])
    return g.weight * s[:, None] * s[None, :] * c


def assemble_P(eq0: Equilibrium0) -> LinearOperatorMatrix:
    _check_dense(eq0.grid)
    return _wrap(eq0, "P", _p_matrix(eq0))


def assemble_L(eq0: Equilibrium0) -> LinearOperatorMatrix:
    _check_dense(eq0.grid)
    p = _p_matrix(eq0)
    p[np.diag_indices_from(p)] -= 1.0
    return _wrap(eq0, "L", p / eq0.grid.q0[:, None])


def assemble_K(eq0: Equilibrium0) -> LinearOperatorMatrix:
    """Finite-rank part ``K = diag(1/q0) P`` of ``L = -diag(1/q0) + K``."""
    _check_dense(eq0.grid)
    return _wrap(eq0, "K", _p_matrix(eq0) / eq0.grid.q0[:, None])


def assemble_B_hat(eq0: Equilibrium0, zeta, L: LinearOperatorMatrix | None = None
                   ) -> LinearOperatorMatrix:
    """Fourier symbol ``L - i zeta . q / q0`` of the linearized BGK generator."""
    zeta = np.asarray(zeta, dtype=float).reshape(3)
    L = assemble_L(eq0) if L is None else L
    b = L.matrix.astype(complex)
    b[np.diag_indices_from(b)] -= 1j * (eq0.grid.q @ zeta) / eq0.grid.q0
    return _wrap(eq0, "B_hat", b, zeta)


def hs_kernel(q, q1, eq0: Equilibrium0) -> np.ndarray:
    """Kernel ``k(q, q1)`` with ``K f(q) = int k(q, q1) f(q1) dq1``.

    ``q`` and ``q1`` are arrays of shape ``(..., 3)`` that broadcast together.
    """
    q, q1 = np.asarray(q, dtype=float), np.asarray(q1, dtype=float)
    q0 = np.sqrt(1.0 + np.sum(q * q, axis=-1))
    q10 = np.sqrt(1.0 + np.sum(q1 * q1, axis=-1))
    b, a, p, k = eq0.beta_d, eq0.alpha_d, eq0.psi_d, eq0.kappa_d
    sj = np.exp(0.5 * (eq0.log_c - eq0.beta0 * (q0 - 1.0)))
    sj1 = np.exp(0.5 * (eq0.log_c - eq0.beta0 * (q10 - 1.0)))
    brace = ((1.0 - a * (p - q0) / k) + (p - q0) / (k * q10)
             + b * np.sum(q * q1, axis=-1) / q10)
    return sj * sj1 / q0 * brace


def kernel_matrix(eq0: Equilibrium0) -> np.ndarray:
    """Quadrature matrix ``k(q_i, q_j) w`` of the kernel on the grid nodes."""
    _check_dense(eq0.grid)
    q = eq0.grid.q
    return hs_kernel(q[:, None, :], q[None, :, :], eq0) * eq0.grid.weight


def hs_norm(eq0: Equilibrium0) -> float:
    """Grid approximation of ``(int int k^2 dq dq1)^(1/2)``."""
    q, w = eq0.grid.q, eq0.grid.weight
    total = 0.0
    for i in range(0, len(q), 256):
        total += np.sum(hs_kernel(q[i:i + 256, None, :], q[None, :, :], eq0) ** 2)
    return float(np.sqrt(total) * w)


def nonlinear_remainder(eq0: Equilibrium0, f, *, tol: float = 1e-14) -> np.ndarray:
    """``Gamma(f) = [(J_g - J0)/sqrt(J0) - P f] / q0`` with ``J_g`` the closure of ``g``."""
    f = np.asarray(f, dtype=float)
    h = eq0.sqrtJ0 * f
    g = eq0.J0 + h
    if np.any(g < 0):
        raise DomainError(f"g = J0 + sqrt(J0) f is negative ({g.min():.3e})")
    macro_of_perturbed(eq0, h)
    lam0 = np.array([[eq0.log_c + eq0.beta0, eq0.beta0, 0.0, 0.0, 0.0]])
    jg = match_equilibrium(eq0.grid, g, lam0=lam0, tol=tol).values[0]
    return ((jg - eq0.J0) / eq0.sqrtJ0 - apply_P(eq0, f)) / eq0.grid.q0


def taylor_pieces(eq0: Equilibrium0, f) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """First-order pieces ``T1, T2, T3`` of ``J_g - J0`` in the closure variables.

    ``T1`` comes from the density, ``T2`` from the velocity and ``T3`` from
    the temperature.  Their sum divided by ``sqrt(J0)`` equals ``P f`` up to
    terms quadratic in ``f``.
    """
    g = eq0.grid
    n_g, flux, nalpha = macro_of_perturbed(eq0, eq0.sqrtJ0 * np.asarray(f, dtype=float))
    t1 = (n_g - 1.0) * eq0.J0
    t2 = eq0.beta_d / n_g * (g.q @ flux) * eq0.J0
    # d beta / d alpha = 1/kappa and d ln M / d beta = -Psi at the background
    t3 = -(nalpha / n_g - eq0.alpha_d) / eq0.kappa_d * (g.q0 - eq0.psi_d) * eq0.J0
    return t1, t2, t3


@dataclass
class ModeTrajectory:
    zeta: np.ndarray
    t: np.ndarray
    norms: np.ndarray
    final: np.ndarray

    @property
    def max_growth(self) -> float:
        """``max_t ||f(t)|| / ||f(0)|| - 1``."""
        return float(np.max(self.norms) / self.norms[0] - 1.0)

    def is_nonincreasing(self, tol: float = GROWTH_TOL) -> bool:
        return bool(np.all(np.diff(self.norms) <= tol * self.norms[0]))


def evolve_fourier_mode(eq0: Equilibrium0, zeta, f0, t_end: float, dt: float, *,
                        L: LinearOperatorMatrix | None = None) -> ModeTrajectory:
    """Propagate ``df/dt = B_hat(zeta) f`` with the exact propagator ``expm(dt B_hat)``.

    Norms are recorded at every multiple of ``dt``; growth of the norm beyond
    ``1 + GROWTH_TOL`` relative to the previous record raises :class:`SchemeError`.
    """
    if not dt > 0 or not t_end >= 0:
        raise DomainError(f"need dt > 0 and t_end >= 0, got dt={dt!r}, t_end={t_end!r}")
    b = assemble_B_hat(eq0, zeta, L).matrix
    f = np.asarray(f0, dtype=complex).copy()
    steps = int(np.ceil(t_end / dt - 1e-9))
    prop = linalg.expm(dt * b)
    times, norms = [0.0], [eq0.norm(f)]
    t = 0.0
    for k in range(steps):
        h = min(dt, t_end - t)
        f = (prop if h == dt else linalg.expm(h * b)) @ f
        t += h
        nrm = eq0.norm(f)
        if nrm > norms[-1] * (1.0 + GROWTH_TOL):
            raise SchemeError(f"norm grew from {norms[-1]:.16e} to {nrm:.16e} at t={t:g}"
                              f" for zeta={np.asarray(zeta).tolist()}")
        times.append(t)
        norms.append(nrm)
    return ModeTrajectory(np.asarray(zeta, dtype=float), np.array(times), np.array(norms), f)


@dataclass
class IvpSolution:
    t: np.ndarray
    norms: np.ndarray           # discrete L2 norm over x and q at each time
    values: np.ndarray          # (x_cells, nodes) real solution at t_end
    modes: np.ndarray           # wavenumbers of the DFT modes


def solve_linearized_ivp(eq0: Equilibrium0, f0, length: float, t_end: float,
                         dt: float) -> IvpSolution:
    """Solve ``f_t + qhat_x f_x = L f`` on a periodic line by Fourier transform in ``x``.

    ``f0`` has shape ``(x_cells, nodes)``; each DFT mode ``k`` evolves with
    ``zeta = (2 pi k / length, 0, 0)``.
    """
    f0 = np.atleast_2d(np.asarray(f0, dtype=float))
    nx = f0.shape[0]
    fh = np.fft.fft(f0, axis=0)
    kx = 2.0 * np.pi * np.fft.fftfreq(nx, d=length / nx)
    L = assemble_L(eq0)
    steps = int(np.ceil(t_end / dt - 1e-9))
    out = np.zeros_like(fh)
    sq = np.zeros(steps + 1)
    for m in range(nx):
        if not np.any(fh[m]):
            continue
        traj = evolve_fourier_mode(eq0, (kx[m], 0.0, 0.0), fh[m], t_end, dt, L=L)
        out[m] = traj.final
        sq += traj.norms ** 2
    # Parseval: sum_x |f|^2 = (1/nx) sum_k |fh|^2
    norms = np.sqrt(sq * (length / nx) / nx)
    t = np.minimum(np.arange(steps + 1) * dt, t_end)
    values = np.fft.ifft(out, axis=0).real
    return IvpSolution(t, norms, values, kx)


def write_spectrum_csv(op: LinearOperatorMatrix, path) -> Path:
    ev = np.sort_complex(np.asarray(op.spectrum(), dtype=complex))
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "real", "imag"])
        for i, v in enumerate(ev):
            w.writerow([i, repr(float(v.real)), repr(float(v.imag))])
    return path


def write_norms_csv(trajs: list[ModeTrajectory], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "zeta_x", "zeta_y", "zeta_z", "t", "norm"])
        for m, tr in enumerate(trajs):
            for t, n in zip(tr.t, tr.norms):
                w.writerow([m, *(repr(float(z)) for z in tr.zeta), repr(float(t)), repr(float(n))])
    return path


def save_operator(op: LinearOperatorMatrix, path) -> Path:
    """Dense binary layout: magic, uint32 header length, JSON header, LE data.

    The data block is the matrix in row-major order as little-endian float64,
    or as interleaved (real, imag) float64 pairs when ``dtype`` is complex128.
    """
    mat = op.matrix
    cplx = np.iscomplexobj(mat)
    header = {"flavor": op.flavor, "shape": list(mat.shape),
              "dtype": "complex128" if cplx else "float64", "order": "C",
              "grid": op.grid.metadata(),
              "zeta": None if op.zeta is None else op.zeta.tolist()}
    raw = json.dumps(header, sort_keys=True).encode()
    data = np.ascontiguousarray(mat, dtype="<c16" if cplx else "<f8")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(OPERATOR_MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(data.tobytes())
    return path


def load_operator(path) -> tuple[dict, np.ndarray]:
    """Read a file written by :func:`save_operator`; returns ``(header, matrix)``."""
    buf = Path(path).read_bytes()
    if buf[:8] != OPERATOR_MAGIC:
        raise DomainError(f"{path}: not an operator file")
    (hlen,) = struct.unpack("<I", buf[8:12])
    header = json.loads(buf[12:12 + hlen])
    dt = "<c16" if header["dtype"] == "complex128" else "<f8"
    mat = np.frombuffer(buf[12 + hlen:], dtype=dt).reshape(header["shape"])
    return header, mat.copy()
