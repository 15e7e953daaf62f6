"""Lindblad propagation of the emitter-plus-modes density matrix.

The master equation rhs
    drho/dt = -i[H, rho] + sum_i kappa_i (a_i rho a_i^dag
              - {a_i^dag a_i, rho}/2)
is integrated with an adaptive embedded Runge-Kutta 4(5) pair on the
vectorized density matrix; output samples come from the integrator's dense
interpolant, so the output grid is decoupled from the internal steps. The
accumulated bath photon number P_bath(t) = sum_i int kappa_i <n_i> dt' is
built by trapezoidal quadrature over the merged internal/output time points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import RK45

from .fock import Basis

__all__ = [
    "QuantumState",
    "Trajectory",
    "IntegrationFailure",
    "lindblad_rhs",
    "propagate",
    "steady_state",
    "write_trajectory_csv",
    "read_trajectory_csv",
]

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10


class IntegrationFailure(RuntimeError):
    """Adaptive step-size underflow; carries the last good time."""

    def __init__(self, message: str, t_last: float):
        super().__init__(f"{message} (last good time t={t_last:.6g})")
        self.t_last = t_last


@dataclass
class QuantumState:
    """Density matrix over the truncated basis."""

    rho: np.ndarray

    def validate(self, tol: float = 1e-8):
        tr = np.trace(self.rho)
        if abs(tr - 1.0) > tol:
            raise ValueError(f"trace deviates from 1 by {abs(tr - 1.0):.3g}")
        if np.abs(self.rho - self.rho.conj().T).max() > tol:
            raise ValueError("density matrix is not Hermitian")
        w = np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))
        if w.min() < -tol:
            raise ValueError(f"negative eigenvalue {w.min():.3g}")
        return self

    @property
    def purity(self) -> float:
        return float(np.vdot(self.rho, self.rho).real)


@dataclass
class Trajectory:
    """Time grid plus observable records of one propagation run."""

    times: np.ndarray
    emitter_population: np.ndarray
    mode_populations: np.ndarray  # (n_times, n_modes)
    bath_photons: np.ndarray
    purity: np.ndarray
    trace_defect: np.ndarray
    oracle: bool = False
    t_recurrence: float | None = None
    flags: list = field(default_factory=list)

    @property
    def total_photons(self) -> np.ndarray:
        """Photons in the modes plus photons already decayed into the bath."""
        return self.mode_populations.sum(axis=1) + self.bath_photons


def _as_rho(rho0) -> np.ndarray:
    rho = rho0.rho if isinstance(rho0, QuantumState) else rho0
    return np.array(rho, dtype=complex)


def lindblad_rhs(rho, h, jumps):
    """Right-hand side of the master equation; traceless by construction."""
    rho = _as_rho(rho)
    dim = rho.shape[0]
    if h.shape != (dim, dim):
        raise ValueError(f"H is {h.shape}, state is {rho.shape}")
    out = -1j * (h @ rho - rho @ h)
    for a, kappa in jumps:
        if a.shape != (dim, dim):
            raise ValueError(f"jump operator is {a.shape}, state is {rho.shape}")
        ar = a @ rho
        n_op = (a.conj().T @ a) if sparse.issparse(a) else a.conj().T @ a
        out = out + kappa * (ar @ a.conj().T - 0.5 * (n_op @ rho + rho @ n_op))
    return out


class _LindbladGenerator:
    """Precomputed sparse machinery for fast rhs evaluation.

    Works in the rotating frame of the Hamiltonian diagonal,
    rho_rot = e^{iDt} rho e^{-iDt} with D = diag(H): the fast diagonal
    phases leave the equations of motion, so the adaptive integrator steps
    at the (much slower) coupling and decay scales. The transformation is
    exact. Number operators a_i^dag a_i are diagonal and each a_i shifts D
    by the constant omega_ii, so the dissipators keep their lab-frame form;
    only the off-diagonal Hamiltonian picks up per-entry phases
    e^{i (d_row - d_col) t}. All trajectory observables (populations, trace,
    purity, bath flux) are phase-invariant, so output snapshots need no
    back-rotation; lab-frame states are recovered with frame_phases().
    """

    def __init__(self, h, jumps):
        self.dim = h.shape[0]
        h = sparse.csr_array(h, dtype=complex)
        self.diag = h.diagonal().real.copy()
        self.jumps = []
        self.sandwiches = []
        self.kappa_diag = None
        decay = None
        for a, kappa in jumps:
            a = sparse.csr_array(a, dtype=complex)
            term = kappa * (a.conj().T @ a)
            decay = term if decay is None else decay + term
            self.jumps.append((a, kappa))
            coo = a.tocoo()
            # annihilation operators hit each source state at most once and
            # target distinct states, so kappa a rho a^dag is a pure
            # gather-scatter on index grids; fall back to products otherwise
            if coo.row.size and (np.unique(coo.row).size == coo.row.size
                                 and np.unique(coo.col).size == coo.col.size):
                weight = kappa * np.outer(coo.data, coo.data.conj())
                self.sandwiches.append(
                    (np.ix_(coo.row, coo.row), np.ix_(coo.col, coo.col), weight))
            else:
                self.sandwiches.append(None)
        if decay is not None:
            self.kappa_diag = decay.diagonal().real
            # anticommutator of the diagonal decay as an elementwise mask
            kd = self.kappa_diag
            self.decay_mask = 0.5 * (kd[:, None] + kd[None, :])
        else:
            self.decay_mask = None

        off = (h - sparse.diags_array(self.diag.astype(complex))).tocoo()
        self.h_rows = off.row
        self.h_cols = off.col
        self.h_data = off.data.copy()
        self.h_delta = self.diag[off.row] - self.diag[off.col]
        self.h_t = sparse.csr_array(
            (off.data, (off.row, off.col)), shape=(self.dim, self.dim))
        # conj(H_t) shares the sparsity pattern; H_t is Hermitian for all t
        self.h_t_conj = self.h_t.conj().tocsr()
        order = sparse.csr_array(
            (np.arange(off.data.size, dtype=float), (off.row, off.col)),
            shape=(self.dim, self.dim))
        self.csr_order = order.data.astype(int)

    def _update_phases(self, t):
        data = (self.h_data * np.exp(1j * t * self.h_delta))[self.csr_order]
        self.h_t.data[:] = data
        self.h_t_conj.data[:] = data.conj()

    def _dissipate(self, rho, out):
        if self.decay_mask is not None:
            out -= self.decay_mask * rho
        for (a, kappa), sandwich in zip(self.jumps, self.sandwiches):
            if sandwich is not None:
                ix_out, ix_in, weight = sandwich
                out[ix_out] += weight * rho[ix_in]
            else:
                ar = a @ rho
                out += kappa * (a @ np.ascontiguousarray(ar.T)).T
        return out

    def rhs_matrix(self, rho, t=0.0):
        """Rotating-frame generator applied to a rotating-frame state.

        Every integrator stage state is Hermitian (the generator maps
        Hermitian to Hermitian and stages are linear combinations), so the
        right multiplication comes from the left one by conjugation,
        rho H = (H rho)^dag for Hermitian H and rho. This also pins the
        Hermiticity of the propagated state structurally.
        """
        self._update_phases(t)
        x = self.h_t @ rho
        out = -1j * (x - x.conj().T)
        return self._dissipate(rho, out)

    def lab_rhs_matrix(self, rho):
        """Static lab-frame generator, for stationarity certificates."""
        full = self.h_t.copy()
        full.data[:] = self.h_data[self.csr_order]
        h_lab = full + sparse.diags_array(self.diag.astype(complex))
        x = h_lab @ rho
        out = -1j * (x - x.conj().T)
        return self._dissipate(rho, out)

    def frame_phases(self, t) -> np.ndarray:
        """Elementwise factors turning a rotating-frame rho into lab frame."""
        ph = np.exp(-1j * t * self.diag)
        return np.outer(ph, ph.conj())

    def __call__(self, t, y):
        rho = y.reshape(self.dim, self.dim)
        return self.rhs_matrix(rho, t).ravel()

    def bath_flux(self, rho) -> float:
        """sum_i kappa_i <a_i^dag a_i>."""
        if self.kappa_diag is None:
            return 0.0
        return float(rho.diagonal().real @ self.kappa_diag)


def _adaptive_samples(rhs, y0, t_grid, rtol, atol, flux=None):
    """RK45 loop yielding dense-output samples at t_grid.

    Returns (samples at t_grid, cumulative trapezoid of flux at t_grid).
    flux, when given, is evaluated on the merged internal/output points.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be a non-empty strictly increasing grid")
    t0, t_end = float(t_grid[0]), float(t_grid[-1])

    samples = [None] * t_grid.size
    accum = np.zeros(t_grid.size)
    next_out = 0
    if np.isclose(t_grid[0], t0):
        samples[0] = y0.copy()
        next_out = 1

    running = 0.0
    f_prev, t_prev = (flux(y0), t0) if flux else (0.0, t0)

    if t_end == t0:
        return samples, accum

    solver = RK45(rhs, t0, y0, t_bound=t_end, rtol=rtol, atol=atol)
    while solver.status == "running":
        solver.step()
        if solver.status == "failed":
            raise IntegrationFailure("adaptive step size underflow", solver.t)
        interp = None
        while next_out < t_grid.size and t_grid[next_out] <= solver.t + 1e-12:
            interp = interp or solver.dense_output()
            t_out = min(t_grid[next_out], solver.t)
            y_out = interp(t_out)
            if flux:
                f_out = flux(y_out)
                running += 0.5 * (f_prev + f_out) * (t_out - t_prev)
                f_prev, t_prev = f_out, t_out
            samples[next_out] = y_out
            accum[next_out] = running
            next_out += 1
        if flux and solver.t > t_prev:
            f_new = flux(solver.y)
            running += 0.5 * (f_prev + f_new) * (solver.t - t_prev)
            f_prev, t_prev = f_new, solver.t
    if next_out < t_grid.size:
        raise IntegrationFailure("integrator stopped early", solver.t)
    return samples, accum


def _observables(basis: Basis, rho) -> tuple:
    pops = rho.diagonal().real
    p_e = float(pops[basis.emitter_excited].sum())
    n_modes = basis.mode_number_expectations(pops)
    purity = float(np.vdot(rho, rho).real)
    defect = abs(float(pops.sum()) - 1.0)
    return p_e, n_modes, purity, defect


def propagate(rho0, h, jumps, basis: Basis, t_grid, tol: float = DEFAULT_RTOL,
              atol: float = DEFAULT_ATOL) -> Trajectory:
    """Propagate the Lindblad equation and record observables on t_grid.

    Density matrix snapshots are re-symmetrized, rho <- (rho + rho^H)/2, at
    every output step before observables are taken.
    """
    rho = _as_rho(rho0)
    gen = _LindbladGenerator(h, jumps)
    if rho.shape != (gen.dim, gen.dim):
        raise ValueError(f"rho is {rho.shape}, operators are {gen.dim}x{gen.dim}")

    def flux(y):
        return gen.bath_flux(y.reshape(gen.dim, gen.dim))

    # the generator is autonomous: integrate from 0 so the rotating frame
    # coincides with the lab frame at the first output
    t_grid = np.asarray(t_grid, dtype=float)
    samples, p_bath = _adaptive_samples(
        gen, rho.ravel(), t_grid - t_grid[0], rtol=tol, atol=atol,
        flux=flux if gen.kappa_diag is not None else None)

    nt = len(samples)
    p_e = np.empty(nt)
    n_modes = np.empty((nt, basis.spec.n_modes))
    purity = np.empty(nt)
    defect = np.empty(nt)
    for i, y in enumerate(samples):
        snap = y.reshape(gen.dim, gen.dim)
        snap = 0.5 * (snap + snap.conj().T)
        p_e[i], n_modes[i], purity[i], defect[i] = _observables(basis, snap)
    return Trajectory(times=np.asarray(t_grid, dtype=float),
                      emitter_population=p_e, mode_populations=n_modes,
                      bath_photons=p_bath, purity=purity, trace_defect=defect)


def steady_state(h, jumps, rho0, horizon: float, tol: float = 1e-8,
                 rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                 chunk: float | None = None):
    """Propagate until the rhs 1-norm drops below tol or the horizon is hit.

    Returns (QuantumState, stationarity certificate ||rhs||_1, flag). The
    flag is True when stationarity was certified within the horizon; the
    final state is returned either way.
    """
    rho = _as_rho(rho0)
    gen = _LindbladGenerator(h, jumps)
    if chunk is None:
        chunk = max(horizon / 50.0, 1e-6)
    t = 0.0
    res = np.linalg.norm(gen.lab_rhs_matrix(rho), 1)
    while res >= tol and t < horizon:
        dt = min(chunk, horizon - t)
        samples, _ = _adaptive_samples(gen, rho.ravel(), np.array([0.0, dt]),
                                       rtol=rtol, atol=atol)
        rho = gen.frame_phases(dt) * samples[-1].reshape(gen.dim, gen.dim)
        rho = 0.5 * (rho + rho.conj().T)
        rho /= np.trace(rho).real
        t += dt
        res = np.linalg.norm(gen.lab_rhs_matrix(rho), 1)
    return QuantumState(rho), float(res), bool(res < tol)


def truncation_convergence(model, emitter, t_grid, n_exc: int,
                           tol: float = 1e-3, rtol: float = DEFAULT_RTOL,
                           atol: float = DEFAULT_ATOL, max_states: int = 200_000):
    """Propagate at excitation caps n_exc and n_exc + 1 and compare P_e.

    Returns (trajectory at n_exc, sup-norm difference, converged flag); the
    flag reports whether raising the cap moves the emitter population by
    less than tol anywhere on the grid.
    """
    from .fock import BasisSpec, build_basis, build_hamiltonian, \
        build_jump_operators, initial_density_matrix

    curves = []
    traj = None
    for cap in (n_exc, n_exc + 1):
        basis = build_basis(BasisSpec(model.n_modes, cap,
                                      max_states=max_states))
        h = build_hamiltonian(model, emitter, basis)
        jumps = build_jump_operators(model, basis)
        out = propagate(initial_density_matrix(basis, emitter), h, jumps,
                        basis, t_grid, tol=rtol, atol=atol)
        curves.append(out.emitter_population)
        if cap == n_exc:
            traj = out
    delta = float(np.abs(curves[1] - curves[0]).max())
    return traj, delta, delta < tol


def write_trajectory_csv(traj: Trajectory, path, units: str = "meV",
                         timestamp: str | None = None):
    """Trajectory CSV: metadata comment line, then
    t,t_fs,P_e,P_bath,purity,trace_defect,n_1,...,n_N."""
    from datetime import datetime, timezone

    from .units import hbar_fs

    scale = hbar_fs(units)
    n = traj.mode_populations.shape[1]
    stamp = timestamp or datetime.now(timezone.utc).isoformat()
    meta = [f"generated={stamp}", f"units={units}", f"hbar_fs={scale!r}",
            f"oracle={'true' if traj.oracle else 'false'}"]
    if traj.t_recurrence is not None:
        meta.append(f"t_recurrence={traj.t_recurrence!r}")
    for fl in traj.flags:
        meta.append(f"flag={fl}")
    cols = ["t", "t_fs", "P_e", "P_bath", "purity", "trace_defect"]
    cols += [f"n_{i + 1}" for i in range(n)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# " + " ".join(meta) + "\n")
        fh.write(",".join(cols) + "\n")
        for i, t in enumerate(traj.times):
            row = [t, t * scale, traj.emitter_population[i],
                   traj.bath_photons[i], traj.purity[i], traj.trace_defect[i]]
            row.extend(traj.mode_populations[i])
            fh.write(",".join(f"{x:.12g}" for x in row) + "\n")


def read_trajectory_csv(path) -> Trajectory:
    meta = {}
    flags = []
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("#"):
            for tok in first[1:].split():
                if "=" in tok:
                    key, val = tok.split("=", 1)
                    if key == "flag":
                        flags.append(val)
                    else:
                        meta[key] = val
            header = fh.readline()
        else:
            header = first
        names = header.strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    col = {name: i for i, name in enumerate(names)}
    n_modes = sum(1 for name in names if name.startswith("n_"))
    mode_cols = [col[f"n_{i + 1}"] for i in range(n_modes)]
    t_rec = meta.get("t_recurrence")
    return Trajectory(
        times=data[:, col["t"]],
        emitter_population=data[:, col["P_e"]],
        mode_populations=data[:, mode_cols] if mode_cols else
        np.zeros((data.shape[0], 0)),
        bath_photons=data[:, col["P_bath"]],
        purity=data[:, col["purity"]],
        trace_defect=data[:, col["trace_defect"]],
        oracle=meta.get("oracle") == "true",
        t_recurrence=float(t_rec) if t_rec is not None else None,
        flags=flags)
