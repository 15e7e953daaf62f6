"""Trajectory comparison metrics and the fit-quality threshold sweep."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import Trajectory, propagate
from .fit import FitConfig, fit_model
from .fock import BasisSpec, EmitterSpec, build_basis, build_hamiltonian, \
    build_jump_operators, initial_density_matrix
from .spectral import eval_model_sd

__all__ = ["ErrorReport", "relative_error", "SweepRunSpec", "SweepCell",
           "threshold_sweep", "write_sweep_csv"]

DEFAULT_FLOOR = 1e-3


@dataclass
class ErrorReport:
    """Pointwise and averaged relative error between two population records."""

    times: np.ndarray
    rel_error_t: np.ndarray
    avg_rel_error: float
    max_rel_error: float
    normalization_floor: float


def relative_error(traj_a: Trajectory, traj_b: Trajectory,
                   floor: float = DEFAULT_FLOOR) -> ErrorReport:
    """eps(t) = |P_a - P_b| / max(P_b, floor), with traj_b the reference.

    traj_a is resampled onto the reference grid by linear interpolation when
    the grids differ; the comparison runs over the overlap of the two time
    ranges and the average is the arithmetic mean over that grid.
    """
    ta, tb = traj_a.times, traj_b.times
    lo, hi = max(ta[0], tb[0]), min(ta[-1], tb[-1])
    if lo > hi:
        raise ValueError("trajectories cover disjoint time ranges")
    mask = (tb >= lo) & (tb <= hi)
    t = tb[mask]
    p_b = traj_b.emitter_population[mask]
    if ta.shape == tb.shape and np.allclose(ta, tb):
        p_a = traj_a.emitter_population[mask]
    else:
        p_a = np.interp(t, ta, traj_a.emitter_population)
    eps = np.abs(p_a - p_b) / np.maximum(p_b, floor)
    return ErrorReport(times=t, rel_error_t=eps,
                       avg_rel_error=float(eps.mean()),
                       max_rel_error=float(eps.max()),
                       normalization_floor=floor)


@dataclass(frozen=True)
class SweepRunSpec:
    """Everything a sweep cell needs besides (n_modes, threshold)."""

    fit: FitConfig
    emitter: EmitterSpec
    max_total_excitations: int = 3
    tol: float = 1e-8
    atol: float = 1e-10
    floor: float = DEFAULT_FLOOR
    max_states: int = 200_000


@dataclass
class SweepCell:
    n_modes: int
    threshold: float
    avg_rel_error: float
    max_rel_error: float
    pos_residual: float
    neg_violation: float
    converged: bool
    error: str = ""


def threshold_sweep(target, oracle_traj: Trajectory, n_modes_list,
                    threshold_list, base: SweepRunSpec) -> list:
    """Fit + propagate + compare for every (N, threshold) pair.

    Cells run independently; a failing fit is recorded in its cell and the
    sweep continues. Results come back in deterministic (N, threshold) order.
    """
    cells = []
    t_grid = oracle_traj.times
    for n_modes in n_modes_list:
        for thr in threshold_list:
            cfg = replace(base.fit, n_modes=int(n_modes), neg_threshold=float(thr))
            try:
                res = fit_model(target, cfg)
                bs = build_basis(BasisSpec(n_modes=int(n_modes),
                                           max_total_excitations=base.max_total_excitations,
                                           max_states=base.max_states))
                h = build_hamiltonian(res.model, base.emitter, bs)
                jumps = build_jump_operators(res.model, bs)
                rho0 = initial_density_matrix(bs, base.emitter)
                traj = propagate(rho0, h, jumps, bs, t_grid, tol=base.tol,
                                 atol=base.atol)
                rep = relative_error(traj, oracle_traj, floor=base.floor)
                cells.append(SweepCell(int(n_modes), float(thr),
                                       rep.avg_rel_error, rep.max_rel_error,
                                       res.pos_residual, res.neg_violation,
                                       res.converged))
            except Exception as exc:  # cell failure must not kill the sweep
                cells.append(SweepCell(int(n_modes), float(thr), float("nan"),
                                       float("nan"), float("nan"), float("nan"),
                                       False, error=str(exc)))
    return cells


def write_sweep_csv(cells, path, timestamp: str | None = None):
    from datetime import datetime, timezone

    stamp = timestamp or datetime.now(timezone.utc).isoformat()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# generated={stamp}\n")
        fh.write("n_modes,threshold,avg_rel_error,max_rel_error,"
                 "pos_residual,neg_violation\n")
        for c in cells:
            fh.write(f"{c.n_modes},{c.threshold:.12g},{c.avg_rel_error:.12g},"
                     f"{c.max_rel_error:.12g},{c.pos_residual:.12g},"
                     f"{c.neg_violation:.12g}\n")
